#!/usr/bin/env python3
"""The source-type similarity profile of the porous medium equation
(n = 3, k = 1) satisfies the mass first integral with zero constant:
U(zeta) = U0 / (zeta^2 + C0)^(1/(1-p)) annihilates
PSI1 = p*(3p-1)*zeta^2*U^(p-1)*U' + zeta^3*U for rational p in (1/3, 1).
"""

from fractions import Fraction as F

from jetcons.expr import ExpLin, Expr
from jetcons.diffops import replace_dependent

zeta = Expr.var("zeta")
C0 = Expr.param("C0")


def check(pval: F) -> None:
    assert F(1, 3) < pval < 1
    m = 3 * pval - 1
    psi = Expr.number(pval * m) * zeta ** 2 \
        * Expr.jet("U").pow(ExpLin.of(pval - 1)) \
        * Expr.jet("U", (("zeta", 1),)) + zeta ** 3 * Expr.jet("U")
    # U0 = ((1-p)/(2p(2+(p-1)n)))^(1/(p-1)) with n = 3, k = 1
    u0_base = (1 - pval) / (2 * pval * (2 + (pval - 1) * 3))
    exponent = F(1, 1) / (pval - 1)
    u0 = u0_base ** exponent if exponent.denominator == 1 else None
    if u0 is None:
        print(f"  p = {pval}: amplitude not rational, skipping")
        return
    profile = Expr.number(u0) * (zeta * zeta + C0).pow(ExpLin.of(exponent))
    got = replace_dependent(psi, "U", profile)
    status = "ok" if got.is_zero else f"RESIDUAL {got}"
    print(f"  p = {pval}: PSI1 on the source-type profile: {status}")


def main() -> None:
    print("porous medium source-type profile check (n = 3, k = 1)")
    for pval in (F(1, 2), F(2, 3), F(3, 4)):
        check(pval)


if __name__ == "__main__":
    main()
