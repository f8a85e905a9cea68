#!/usr/bin/env python3
"""Closed-form travelling waves of the K(p,q) family in the case p = 1,
a = c: combining the four first integrals collapses the third-order ODE
to an explicit quadratic profile for b*U^q.

Checks symbolically that with W := b*U^q = C1/2*zeta^2 - C3*zeta + C4/2,
the first integrals evaluate to the advertised constants.
"""

from fractions import Fraction as F

from jetcons.expr import Coef, ExpLin, Expr, Poly
from jetcons.diffops import replace_dependent, total_derivative

zeta = Expr.var("zeta")
b = Expr.param("b")
qv = Expr.param("q")
q = ExpLin.param("q")
C1, C3, C4 = (Expr.param(n) for n in ("C1", "C3", "C4"))

U = Expr.jet("U")
U1 = Expr.jet("U", (("zeta", 1),))
U2 = Expr.jet("U", (("zeta", 2),))

# first integrals of the reduced ODE at p = 1, a = c, written via
# W = b*U^q:  PSI1 = W'', PSI3 = W' - zeta*W'', PSI4 = 2W - 2zeta*W' +
# zeta^2*W''
PSI1 = b * qv * (qv - 1) * U.pow(q - ExpLin.of(2)) * U1 ** 2 \
    + b * qv * U.pow(q - ExpLin.of(1)) * U2
PSI3 = b * qv * U.pow(q - ExpLin.of(1)) * U1 - zeta * PSI1
PSI4 = 2 * b * U.pow(q) - 2 * zeta * b * qv * U.pow(q - ExpLin.of(1)) * U1 \
    + zeta ** 2 * PSI1


def check(qval: F) -> None:
    """Substitute U = b^(-1/q) * W^(1/q) for the quadratic W and a
    rational q."""
    W = C1 / 2 * zeta ** 2 - C3 * zeta + C4 / 2
    e_inv = ExpLin.of(F(1, 1) / qval)
    profile = b.pow(e_inv.scale(-1)) * W.pow(e_inv)
    for name, psi, const in [("PSI1", PSI1, C1), ("PSI3", PSI3, -C3),
                             ("PSI4", PSI4, C4)]:
        e = psi.subs_params({"q": qval})
        got = replace_dependent(e, "U", profile)
        residual = got - const
        status = "ok" if residual.is_zero else f"RESIDUAL {residual}"
        print(f"  q = {qval}: {name} - expected constant: {status}")


def main() -> None:
    # integer exponents 1/q only: the kernel does not simplify radicals
    # of expanded perfect squares
    print("closed-form travelling wave profile U = (W/b)^(1/q), "
          "W = C1/2*zeta^2 - C3*zeta + C4/2")
    for qval in (F(2), F(3), F(4), F(5)):
        check(qval)


if __name__ == "__main__":
    main()
