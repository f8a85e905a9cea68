"""Exact symbolic expressions over jet space.

The normal form is a sum of monomials with coefficients that are rational
functions of the declared parameters.  A monomial is a product of power
factors whose bases are independent variables, jet coordinates, opaque
power atoms (polynomial base raised to a rational or parameter-affine
exponent), and at most one exponential atom; exponents are affine
combinations of parameters with rational coefficients plus a rational
offset.  All arithmetic is exact; no floating point enters the core.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Iterator, Optional


class ExprError(Exception):
    pass


class DomainError(ExprError):
    """Evaluation left the domain (0^negative, ln of nonpositive, ...)."""


class CyclicRule(ExprError):
    """A substitution replacement contains its own target."""


class NonAffineExponent(ExprError):
    """An exponent is not an affine combination of parameters."""


Rat = Fraction
ZERO = Fraction(0)
ONE = Fraction(1)


def _rat(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    raise TypeError(f"expected rational, got {type(x).__name__}")


def _fmt_rat(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


# ---------------------------------------------------------------------------
# Affine exponents: offset + sum of coeff * parameter
# ---------------------------------------------------------------------------

class ExpLin:
    """Exponent of a power factor: rational offset plus a rational-linear
    combination of parameter names."""

    __slots__ = ("offset", "terms", "_hash")

    def __init__(self, offset, terms: Iterable = ()):
        self.offset = _rat(offset)
        items: dict = {}
        for name, c in terms:
            c = _rat(c)
            if c:
                items[name] = items.get(name, ZERO) + c
        self.terms = tuple(sorted((n, c) for n, c in items.items() if c))
        self._hash = None

    @staticmethod
    def of(x) -> "ExpLin":
        if isinstance(x, ExpLin):
            return x
        return ExpLin(_rat(x))

    @staticmethod
    def param(name: str) -> "ExpLin":
        return ExpLin(0, [(name, ONE)])

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.offset, self.terms))
        return self._hash

    def __eq__(self, other):
        return (
            isinstance(other, ExpLin)
            and self.offset == other.offset
            and self.terms == other.terms
        )

    def key(self):
        return (self.offset, self.terms)

    @property
    def is_constant(self) -> bool:
        return not self.terms

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.offset == 0

    @property
    def is_integer(self) -> bool:
        return not self.terms and self.offset.denominator == 1

    def const(self) -> Fraction:
        if self.terms:
            raise NonAffineExponent(f"exponent {self} is not constant")
        return self.offset

    def __add__(self, other):
        other = ExpLin.of(other)
        return ExpLin(self.offset + other.offset, self.terms + other.terms)

    def __sub__(self, other):
        other = ExpLin.of(other)
        return self + other.scale(-1)

    def scale(self, c) -> "ExpLin":
        c = _rat(c)
        return ExpLin(self.offset * c, [(n, k * c) for n, k in self.terms])

    def subs(self, values: dict) -> "ExpLin":
        """Substitute parameter names by rationals or rename to strings."""
        off = self.offset
        items = []
        for n, c in self.terms:
            if n in values:
                v = values[n]
                if isinstance(v, str):
                    items.append((v, c))
                else:
                    off += c * _rat(v)
            else:
                items.append((n, c))
        return ExpLin(off, items)

    def params(self) -> set:
        return {n for n, _ in self.terms}

    def eval(self, values: dict) -> Fraction:
        return self.subs(values).const()

    def __str__(self):
        parts = []
        if self.offset or not self.terms:
            parts.append(_fmt_rat(self.offset))
        for n, c in self.terms:
            if c == 1:
                parts.append(n)
            elif c == -1:
                parts.append(f"-{n}")
            else:
                parts.append(f"{_fmt_rat(c)}*{n}")
        return "+".join(parts).replace("+-", "-")

    __repr__ = __str__


EXP_ONE = ExpLin(1)


# ---------------------------------------------------------------------------
# Sparse multivariate polynomials in the parameters, over Q
# ---------------------------------------------------------------------------

PMono = tuple  # tuple[(name, int), ...] sorted by name


def _pm_mul(a: PMono, b: PMono) -> PMono:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for n, e in b:
        d[n] = d.get(n, 0) + e
    return tuple(sorted((n, e) for n, e in d.items() if e))


def _pm_key(m: PMono):
    # graded lexicographic order
    return (sum(e for _, e in m), m)


def _pm_div(a: PMono, b: PMono) -> Optional[PMono]:
    d = dict(a)
    for n, e in b:
        r = d.get(n, 0) - e
        if r < 0:
            return None
        d[n] = r
    return tuple(sorted((n, e) for n, e in d.items() if e))


class Poly:
    """Sparse polynomial in parameter names with Fraction coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms):
        if isinstance(terms, dict):
            items = terms
        else:
            items = {}
            for m, c in terms:
                c = _rat(c)
                if c:
                    items[m] = items.get(m, ZERO) + c
        self.terms = tuple(sorted(
            ((m, c) for m, c in items.items() if c), key=lambda t: _pm_key(t[0])
        ))
        self._hash = None

    @staticmethod
    def const(c) -> "Poly":
        c = _rat(c)
        return Poly({(): c} if c else {})

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({((name, 1),): ONE})

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.terms)
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and not self.terms[0][0])

    def const_value(self) -> Fraction:
        if not self.terms:
            return ZERO
        if self.is_const:
            return self.terms[0][1]
        raise ExprError(f"polynomial {self} is not constant")

    def __add__(self, other):
        d = dict(self.terms)
        for m, c in other.terms:
            d[m] = d.get(m, ZERO) + c
        return Poly(d)

    def __neg__(self):
        return Poly({m: -c for m, c in self.terms})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = _rat(other)
            if not c:
                return POLY_ZERO
            return Poly({m: k * c for m, k in self.terms})
        d: dict = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _pm_mul(m1, m2)
                d[m] = d.get(m, ZERO) + c1 * c2
        return Poly(d)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ExprError("negative polynomial power")
        out = Poly.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def leading(self):
        if not self.terms:
            raise ExprError("leading term of zero polynomial")
        return self.terms[-1]

    def degree_in(self, name: str) -> int:
        d = 0
        for m, _ in self.terms:
            for n, e in m:
                if n == name:
                    d = max(d, e)
        return d

    def params(self) -> set:
        out = set()
        for m, _ in self.terms:
            for n, _e in m:
                out.add(n)
        return out

    def coeffs_in(self, name: str) -> dict:
        """View as univariate in `name`: degree -> Poly in the rest."""
        buckets: dict = {}
        for m, c in self.terms:
            e = 0
            rest = []
            for n, k in m:
                if n == name:
                    e = k
                else:
                    rest.append((n, k))
            b = buckets.setdefault(e, {})
            key = tuple(rest)
            b[key] = b.get(key, ZERO) + c
        return {e: Poly(d) for e, d in buckets.items()}

    def content(self) -> Fraction:
        if not self.terms:
            return ONE
        num = 0
        den = 1
        for _, c in self.terms:
            num = _gcd(num, abs(c.numerator))
            den = _lcm(den, c.denominator)
        return Fraction(num, den)

    def primitive(self) -> tuple:
        """(scale, prim) with self == scale * prim; prim has integer
        coefficients, content one, positive leading coefficient."""
        if not self.terms:
            return ONE, self
        c = self.content()
        if self.leading()[1] < 0:
            c = -c
        return c, self * (1 / c)

    def divmod_by(self, d: "Poly") -> tuple:
        if d.is_zero:
            raise ZeroDivisionError("polynomial division by zero")
        dm, dc = d.leading()
        q: dict = {}
        r: dict = {}
        work = dict(self.terms)
        while work:
            m = max(work, key=_pm_key)
            c = work.pop(m)
            if not c:
                continue
            mm = _pm_div(m, dm)
            if mm is None:
                r[m] = r.get(m, ZERO) + c
                continue
            k = c / dc
            q[mm] = q.get(mm, ZERO) + k
            for m2, c2 in d.terms:
                if m2 == dm:
                    continue  # cancelled by the popped pivot term
                mp = _pm_mul(mm, m2)
                v = work.get(mp, ZERO) - k * c2
                if v:
                    work[mp] = v
                elif mp in work:
                    del work[mp]
        return Poly(q), Poly(r)

    def exact_div(self, d: "Poly") -> Optional["Poly"]:
        q, r = self.divmod_by(d)
        return q if r.is_zero else None

    def subs(self, values: dict) -> "Poly":
        """Substitute parameters by rationals or Poly values."""
        if not any(n in values for m, _ in self.terms for n, _e in m):
            return self
        out = POLY_ZERO
        for m, c in self.terms:
            t = Poly.const(c)
            for n, e in m:
                if n in values:
                    v = values[n]
                    v = v if isinstance(v, Poly) else Poly.const(_rat(v))
                    t = t * v ** e
                else:
                    t = t * Poly.var(n) ** e
            out = out + t
        return out

    def eval(self, values: dict) -> Fraction:
        out = ZERO
        for m, c in self.terms:
            v = c
            for n, e in m:
                if n not in values:
                    raise DomainError(f"unbound parameter {n}")
                v *= _rat(values[n]) ** e
            out += v
        return out

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, c in reversed(self.terms):
            factors = []
            for n, e in m:
                factors.append(n if e == 1 else f"{n}^{e}")
            if not factors:
                parts.append(_fmt_rat(c))
            elif c == 1:
                parts.append("*".join(factors))
            elif c == -1:
                parts.append("-" + "*".join(factors))
            else:
                parts.append(_fmt_rat(c) + "*" + "*".join(factors))
        return " + ".join(parts).replace("+ -", "- ")

    __repr__ = __str__


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


def _lcm(a: int, b: int) -> int:
    return a * b // _gcd(a, b) if a and b else 0


POLY_ZERO = Poly({})
POLY_ONE = Poly.const(1)


def light_factor(p: Poly) -> list:
    """Split a parameter polynomial into a deterministic list of primitive
    factors [(Poly, mult), ...].  Not a full factorization: pulls monomial
    content, keeps degree-one pieces, and splits quadratics whose
    discriminant is a perfect-square monomial (covers differences of
    squares such as nu^2 - c^2)."""
    _, p = p.primitive()
    if p.is_const:
        return []
    factors: list = []
    common = None
    for m, _ in p.terms:
        d = dict(m)
        if common is None:
            common = d
        else:
            common = {n: min(e, common[n]) for n, e in d.items() if n in common}
        if not common:
            break
    if common:
        mono = tuple(sorted(common.items()))
        p = Poly({_pm_div(m, mono): c for m, c in p.terms})
        for n, e in mono:
            factors.append((Poly.var(n), e))
        if p.is_const:
            return factors
    for name in sorted(p.params()):
        deg = p.degree_in(name)
        if deg == 1:
            factors.append((p.primitive()[1], 1))
            return factors
        if deg == 2:
            cs = p.coeffs_in(name)
            a = cs.get(2, POLY_ZERO)
            b = cs.get(1, POLY_ZERO)
            c = cs.get(0, POLY_ZERO)
            disc = b * b - 4 * a * c
            root = _poly_sqrt(disc)
            if root is not None and not a.is_zero:
                x = Poly.var(name)
                sub: list = []
                for f in ((2 * a) * x + (b - root), (2 * a) * x + (b + root)):
                    _, fp = f.primitive()
                    if fp.is_const:
                        continue
                    sub.extend(light_factor(fp))
                check = POLY_ONE
                for f, e in sub:
                    check = check * f ** e
                if p.exact_div(check) is not None and \
                        check.exact_div(p) is not None:
                    factors.extend(sub)
                    return factors
    factors.append((p, 1))
    return factors


def _poly_sqrt(p: Poly) -> Optional[Poly]:
    if p.is_zero:
        return POLY_ZERO
    if len(p.terms) == 1:
        m, c = p.terms[0]
        if c < 0 or any(e % 2 for _, e in m):
            return None
        rc = _frac_root(c, 2)
        if rc is None:
            return None
        return Poly({tuple((n, e // 2) for n, e in m): rc})
    return None


def _frac_root(c: Fraction, q: int) -> Optional[Fraction]:
    """Exact q-th root of a nonnegative rational, or None."""
    if c < 0:
        return None

    def iroot(n: int) -> Optional[int]:
        if n == 0:
            return 0
        r = round(n ** (1.0 / q))
        for k in (r - 1, r, r + 1):
            if k >= 0 and k ** q == n:
                return k
        return None

    a = iroot(c.numerator)
    b = iroot(c.denominator)
    if a is None or b is None:
        return None
    return Fraction(a, b)


# ---------------------------------------------------------------------------
# Rational-function coefficients: Poly / product of primitive factors
# ---------------------------------------------------------------------------

class Coef:
    """num / prod(factor^mult), canonical up to the light factorization."""

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num: Poly, den: tuple = ()):
        self.num, self.den = _coef_reduce(num, den)
        self._hash = None

    @staticmethod
    def const(c) -> "Coef":
        return Coef(Poly.const(c))

    @staticmethod
    def param(name: str) -> "Coef":
        return Coef(Poly.var(name))

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Coef):
            return NotImplemented
        if self.num == other.num and self.den == other.den:
            return True
        return (self - other).is_zero

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    @property
    def is_const(self) -> bool:
        return self.num.is_const and not self.den

    def const_value(self) -> Fraction:
        if self.den:
            raise ExprError(f"coefficient {self} is not constant")
        return self.num.const_value()

    def den_poly(self) -> Poly:
        d = POLY_ONE
        for f, e in self.den:
            d = d * f ** e
        return d

    def __add__(self, other):
        if not isinstance(other, Coef):
            other = Coef.const(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if not self.den and not other.den:
            return Coef(self.num + other.num)
        dmap = dict(self.den)
        for f, e in other.den:
            dmap[f] = max(dmap.get(f, 0), e)
        num = POLY_ZERO
        for c in (self, other):
            extra = POLY_ONE
            cd = dict(c.den)
            for f, e in dmap.items():
                k = e - cd.get(f, 0)
                if k:
                    extra = extra * f ** k
            num = num + c.num * extra
        return Coef(num, tuple(sorted(dmap.items(), key=lambda t: t[0].terms)))

    def __neg__(self):
        out = object.__new__(Coef)
        out.num = -self.num
        out.den = self.den
        out._hash = None
        return out

    def __sub__(self, other):
        if not isinstance(other, Coef):
            other = Coef.const(other)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return Coef(self.num * other, self.den)
        dmap = dict(self.den)
        for f, e in other.den:
            dmap[f] = dmap.get(f, 0) + e
        return Coef(self.num * other.num,
                    tuple(sorted(dmap.items(), key=lambda t: t[0].terms)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            c = _rat(other)
            if not c:
                raise ZeroDivisionError("coefficient division by zero")
            return Coef(self.num * (1 / c), self.den)
        return self * other.inverse()

    def inverse(self) -> "Coef":
        if self.is_zero:
            raise ZeroDivisionError("inverse of zero coefficient")
        scale, prim = self.num.primitive()
        num = Poly.const(1 / scale)
        for f, e in self.den:
            num = num * f ** e
        facs: dict = {}
        for f, e in light_factor(prim):
            facs[f] = facs.get(f, 0) + e
        return Coef(num, tuple(sorted(facs.items(), key=lambda t: t[0].terms)))

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = COEF_ONE
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def subs(self, values: dict) -> "Coef":
        out = Coef(self.num.subs(values))
        for f, e in self.den:
            fs = f.subs(values)
            if fs.is_zero:
                raise ZeroDivisionError(
                    f"substitution annihilates denominator {f}")
            out = out * Coef(POLY_ONE, ((fs, e),))
        return out

    def eval(self, values: dict) -> Fraction:
        num = self.num.eval(values)
        den = ONE
        for f, e in self.den:
            v = f.eval(values)
            if not v:
                raise DomainError(f"denominator {f} vanishes at the point")
            den *= v ** e
        return num / den

    def params(self) -> set:
        out = self.num.params()
        for f, _ in self.den:
            out |= f.params()
        return out

    def __str__(self):
        num = str(self.num)
        if not self.den:
            return num
        dens = []
        for f, e in self.den:
            fs = f"({f})" if len(f.terms) > 1 else str(f)
            dens.append(fs if e == 1 else f"{fs}^{e}")
        ds = "*".join(dens)
        if len(self.num.terms) > 1:
            num = f"({num})"
        if len(self.den) > 1:
            ds = f"({ds})"
        return f"{num}/{ds}"

    __repr__ = __str__


def _coef_reduce(num: Poly, den) -> tuple:
    if num.is_zero:
        return num, ()
    scale = ONE
    facs: dict = {}
    for f, e in den:
        if f.is_const:
            scale *= f.const_value() ** e
            continue
        c, fp = f.primitive()
        scale *= c ** e
        for g, k in light_factor(fp):
            facs[g] = facs.get(g, 0) + k * e
    if scale != 1:
        num = num * (1 / scale)
    out = []
    for f, e in sorted(facs.items(), key=lambda t: t[0].terms):
        while e > 0:
            q = num.exact_div(f)
            if q is None:
                break
            num = q
            e -= 1
        if e:
            out.append((f, e))
    return num, tuple(out)


COEF_ZERO = Coef(POLY_ZERO)
COEF_ONE = Coef(POLY_ONE)


def coef_to_explin(c: Coef) -> ExpLin:
    """Convert an affine, denominator-free coefficient to an exponent."""
    if c.den:
        raise NonAffineExponent(f"exponent {c} has a parameter denominator")
    off = ZERO
    items = []
    for m, k in c.num.terms:
        if not m:
            off += k
        elif len(m) == 1 and m[0][1] == 1:
            items.append((m[0][0], k))
        else:
            raise NonAffineExponent(f"exponent {c} is not parameter-affine")
    return ExpLin(off, items)


# ---------------------------------------------------------------------------
# Monomial bases
# ---------------------------------------------------------------------------
# Base keys (tag, payload...):
#   ("v", name)            independent variable
#   ("w", name)            parameter carrying a non-integer exponent
#   ("j", dep, midx)       jet coordinate; midx = tuple[(ivar, int),...]
#   ("p", Expr)            power atom: polynomial base, non-integer exponent
#   ("e", Expr)            exp atom; exponent always folded to 1
#   ("l", Expr)            ln atom
#   ("q", Fraction)        positive rational base with fractional exponent

_TAG_ORDER = {"v": 0, "w": 1, "j": 2, "p": 3, "e": 4, "l": 5, "q": 6}


def jet_key(dep: str, midx) -> tuple:
    items = tuple(sorted((v, int(n)) for v, n in midx if n))
    return ("j", dep, items)


def jet_name(dep: str, midx) -> str:
    """Canonical point-binding key for a jet, e.g. u_txx."""
    if not midx:
        return dep
    return dep + "_" + "".join(v * n for v, n in midx)


def _base_sort_key(b: tuple):
    tag = b[0]
    order = _TAG_ORDER[tag]
    if tag in ("v", "w"):
        return (order, b[1])
    if tag == "j":
        return (order, b[1], b[2])
    if tag == "q":
        return (order, (b[1],))
    return (order, b[1].sort_key())


def _mono_key(m: tuple):
    return tuple((_base_sort_key(b), e.key()) for b, e in m)


def _mono_sorted(items) -> tuple:
    return tuple(sorted(items, key=lambda t: _base_sort_key(t[0])))


class Expr:
    """Immutable normalized expression."""

    __slots__ = ("terms", "_hash", "_skey")

    def __init__(self, terms):
        if isinstance(terms, dict):
            items = dict(terms)
        else:
            items = {}
            for m, c in terms:
                items[m] = items[m] + c if m in items else c
        clean = {m: c for m, c in items.items() if not c.is_zero}
        if any(b[0] == "p" for m in clean for b, _ in m):
            clean = _absorb_pow_bases(clean)
        self.terms = tuple(sorted(clean.items(), key=lambda t: _mono_key(t[0])))
        self._hash = None
        self._skey = None

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "Expr":
        return E_ZERO

    @staticmethod
    def one() -> "Expr":
        return E_ONE

    @staticmethod
    def number(c) -> "Expr":
        c = _rat(c)
        if not c:
            return E_ZERO
        return Expr({(): Coef.const(c)})

    @staticmethod
    def var(name: str) -> "Expr":
        return Expr({((("v", name), EXP_ONE),): COEF_ONE})

    @staticmethod
    def param(name: str) -> "Expr":
        return Expr({(): Coef.param(name)})

    @staticmethod
    def jet(dep: str, midx=()) -> "Expr":
        return Expr({((jet_key(dep, midx), EXP_ONE),): COEF_ONE})

    @staticmethod
    def from_coef(c: Coef) -> "Expr":
        if c.is_zero:
            return E_ZERO
        return Expr({(): c})

    # -- structure ----------------------------------------------------------

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.terms)
        return self._hash

    def sort_key(self):
        if self._skey is None:
            self._skey = tuple(
                (_mono_key(m), c.num.terms, tuple((f.terms, e) for f, e in c.den))
                for m, c in self.terms
            )
        return self._skey

    def __eq__(self, other):
        if not isinstance(other, Expr):
            if isinstance(other, (int, Fraction)):
                other = Expr.number(other)
            else:
                return NotImplemented
        if self.terms == other.terms:
            return True
        return (self - other).is_zero

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        """No monomial bases: a rational function of parameters only."""
        return all(not m for m, _ in self.terms)

    def const_coef(self) -> Coef:
        if self.is_zero:
            return COEF_ZERO
        if len(self.terms) == 1 and not self.terms[0][0]:
            return self.terms[0][1]
        raise ExprError(f"expression {self} is not a constant")

    def const_value(self) -> Fraction:
        return self.const_coef().const_value()

    def __iter__(self) -> Iterator:
        return iter(self.terms)

    def __bool__(self):
        return not self.is_zero

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_expr(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        d = dict(self.terms)
        for m, c in other.terms:
            d[m] = d[m] + c if m in d else c
        return Expr(d)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms})

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        other = as_expr(other)
        if self.is_zero or other.is_zero:
            return E_ZERO
        d: dict = {}
        pending = []
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m, extra = _mono_mul(m1, m2)
                c = c1 * c2 if extra is None else c1 * c2 * extra
                expand = _expandable(m)
                if expand is not None:
                    pending.append((m, c, expand))
                    continue
                d[m] = d[m] + c if m in d else c
        out = Expr(d)
        for m, c, (b, n) in pending:
            rest = tuple(t for t in m if t[0] != b)
            out = out + Expr({rest: c}) * (b[1] ** n)
        return out

    __rmul__ = __mul__

    def __pow__(self, n):
        return self.pow(n)

    def pow(self, e) -> "Expr":
        """General power.  Nonnegative integer exponents expand; on a single
        monomial the exponent distributes over the factors; otherwise the
        result is an opaque power atom."""
        if isinstance(e, Expr):
            if not e.is_constant:
                raise NonAffineExponent("exponent must be parameter-affine")
            try:
                e = coef_to_explin(e.const_coef())
            except NonAffineExponent:
                # non-affine parameter exponent: formal exp/ln power
                return exp(e * ln(self))
        if not isinstance(e, ExpLin):
            e = ExpLin.of(e)
        if e.is_zero:
            if self.is_zero:
                raise DomainError("0^0")
            return E_ONE
        if self.is_zero:
            if e.is_constant and e.offset > 0:
                return E_ZERO
            raise DomainError("0 raised to a non-positive or symbolic power")
        if e.is_integer and e.offset >= 0 and len(self.terms) > 1:
            n = int(e.offset)
            out = E_ONE
            base = self
            while n:
                if n & 1:
                    out = out * base
                base = base * base
                n >>= 1
            return out
        if len(self.terms) == 1:
            m, c = self.terms[0]
            return _mono_pow(m, c, e)
        return _pow_atom(self, e)

    def __truediv__(self, other):
        other = as_expr(other)
        if other.is_zero:
            raise ZeroDivisionError("division by zero expression")
        if other.is_constant:
            c = other.const_coef()
            return Expr({m: k / c for m, k in self.terms})
        return self * other.pow(ExpLin.of(-1))

    def __rtruediv__(self, other):
        return as_expr(other) / self

    # -- queries -------------------------------------------------------------

    def params(self) -> set:
        out = set()
        for m, c in self.terms:
            out |= c.params()
            for b, e in m:
                out |= e.params()
                if b[0] == "w":
                    out.add(b[1])
                if b[0] in ("p", "e", "l"):
                    out |= b[1].params()
        return out

    def atoms(self, tag: str) -> set:
        out = set()
        for m, _ in self.terms:
            for b, _e in m:
                if b[0] == tag:
                    out.add(b)
                if b[0] in ("p", "e", "l"):
                    out |= b[1].atoms(tag)
        return out

    def jets(self, dep: Optional[str] = None) -> set:
        return {b for b in self.atoms("j") if dep is None or b[1] == dep}

    def variables(self) -> set:
        return {b[1] for b in self.atoms("v")}

    def depends_on(self, name: str) -> bool:
        """True when the variable occurs directly, as a differentiation
        direction of a jet, or inside an atom argument."""
        for m, _ in self.terms:
            for b, _e in m:
                if b[0] == "v" and b[1] == name:
                    return True
                if b[0] == "j" and any(v == name for v, _n in b[2]):
                    return True
                if b[0] in ("p", "e", "l") and b[1].depends_on(name):
                    return True
        return False

    def max_order(self, dep: Optional[str] = None) -> int:
        return max((sum(n for _, n in b[2]) for b in self.jets(dep)), default=0)

    def coefficient_of(self, mono: tuple) -> Coef:
        for m, c in self.terms:
            if m == mono:
                return c
        return COEF_ZERO

    def subs_params(self, values: dict) -> "Expr":
        """Specialize parameters to rationals, names, or Coef values.
        A parameter occurring in an exponent only accepts rationals or
        renames."""
        norm = {}
        for n, v in values.items():
            if isinstance(v, Coef):
                if v.is_const:
                    norm[n] = v.const_value()
                    continue
                if not v.den and len(v.num.terms) == 1 and \
                        v.num.terms[0][1] == 1 and \
                        len(v.num.terms[0][0]) == 1 and \
                        v.num.terms[0][0][0][1] == 1:
                    norm[n] = v.num.terms[0][0][0][0]
                    continue
            norm[n] = v
        values = norm
        exp_vals = {n: v for n, v in values.items()
                    if not isinstance(v, Coef)}
        out = E_ZERO
        for m, c in self.terms:
            if c.params() & set(values):
                newc = _coef_subs_coef(c, values)
            else:
                newc = c
            factor = E_ONE
            items = []
            for b, e in m:
                e2 = e.subs(exp_vals) if (e.params() & set(exp_vals)) else e
                if b[0] == "w":
                    if b[1] in values:
                        v = values[b[1]]
                        if isinstance(v, str):
                            factor = factor * _param_pow(v, e2)
                        elif isinstance(v, Coef):
                            factor = factor * Expr.from_coef(v).pow(e2)
                        else:
                            factor = factor * _rat_pow_expr(_rat(v), e2)
                        continue
                    factor = factor * _param_pow(b[1], e2)
                    continue
                if b[0] in ("p", "e", "l"):
                    arg = b[1].subs_params(values)
                    if b[0] == "p":
                        factor = factor * arg.pow(e2)
                    elif b[0] == "e":
                        factor = factor * exp(arg).pow(e2)
                    else:
                        factor = factor * ln(arg).pow(e2)
                    continue
                items.append((b, e2))
            term = Expr({_mono_sorted(i for i in items if not i[1].is_zero):
                         newc})
            out = out + term * factor
        return out

    # -- printing ------------------------------------------------------------

    def __str__(self):
        from .printer import expr_to_str
        return expr_to_str(self)

    def __repr__(self):
        return f"Expr({self.__str__()})"


def _coef_subs_coef(c: Coef, values: dict) -> Coef:
    """Substitute parameters by Coef values (rational functions)."""
    polyvals = {}
    for n, v in values.items():
        if isinstance(v, Coef):
            polyvals[n] = v
        elif isinstance(v, str):
            polyvals[n] = Coef.param(v)
        else:
            polyvals[n] = Coef.const(_rat(v))
    out = COEF_ZERO
    for m, k in c.num.terms:
        t = Coef.const(k)
        for n, e in m:
            t = t * (polyvals.get(n, Coef.param(n)) ** e)
        out = out + t
    for f, e in c.den:
        fs = COEF_ZERO
        for m, k in f.terms:
            t = Coef.const(k)
            for n, ee in m:
                t = t * (polyvals.get(n, Coef.param(n)) ** ee)
            fs = fs + t
        if fs.is_zero:
            raise ZeroDivisionError("substitution annihilates denominator")
        out = out * (fs.inverse() ** e)
    return out


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Expr.number(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Expr")


def explin_to_expr(e: ExpLin) -> Expr:
    out = Expr.number(e.offset)
    for n, c in e.terms:
        out = out + Expr.param(n) * Expr.number(c)
    return out


def _expandable(m: tuple) -> Optional[tuple]:
    """A ("p", base) factor with a positive integer exponent, if any."""
    for b, e in m:
        if b[0] == "p" and e.is_integer and e.offset > 0:
            return (b, int(e.offset))
    return None


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    """Multiply monomials; returns (monomial, extra Coef or None)."""
    if not m1:
        return m2, None
    if not m2:
        return m1, None
    d = dict(m1)
    for b, e in m2:
        d[b] = d[b] + e if b in d else e
    exp_args = []
    extra = None
    items = []
    for b, e in d.items():
        if e.is_zero:
            continue
        if b[0] == "e":
            exp_args.append((b[1], e))
            continue
        if b[0] == "q" and e.is_integer:
            extra = (COEF_ONE if extra is None else extra) * \
                (_rat(b[1]) ** int(e.offset))
            continue
        if b[0] == "w" and e.is_integer:
            n = int(e.offset)
            co = Coef(Poly.var(b[1]) ** n) if n > 0 else \
                Coef(POLY_ONE, ((Poly.var(b[1]), -n),))
            extra = (COEF_ONE if extra is None else extra) * co
            continue
        items.append((b, e))
    if exp_args:
        arg = E_ZERO
        for a, e in exp_args:
            arg = arg + a * explin_to_expr(e)
        if not arg.is_zero:
            items.append((("e", arg), EXP_ONE))
    return _mono_sorted(items), extra


def _coef_pow(c: Coef, e: ExpLin) -> Expr:
    """Power of a rational function of parameters with a non-integer or
    parametric exponent: distribute over the factored form."""
    scale, prim = c.num.primitive()
    out = _rat_pow_expr(scale, e)
    out = out * _poly_pow(prim, e)
    for f, k in c.den:
        out = out * _poly_pow(f, e.scale(-k))
    return out


def _poly_pow(f: Poly, e: ExpLin) -> Expr:
    if e.is_zero or f == POLY_ONE:
        return E_ONE
    if f.is_const:
        return _rat_pow_expr(f.const_value(), e)
    if len(f.terms) == 1:
        mono, k = f.terms[0]
        out = _rat_pow_expr(k, e)
        for name, p in mono:
            out = out * _param_pow(name, e.scale(p))
        return out
    atom = ("p", Expr.from_coef(Coef(f)))
    return Expr({((atom, e),): COEF_ONE})


def _mono_pow(m: tuple, c: Coef, e: ExpLin) -> Expr:
    """(c * m) ** e for a single-term expression."""
    if c.is_const:
        coef_part = _rat_pow_expr(c.const_value(), e)
    elif e.is_integer:
        coef_part = Expr.from_coef(c ** int(e.offset))
    else:
        coef_part = _coef_pow(c, e)
    out = coef_part
    for b, be in m:
        try:
            out = out * _base_pow(b, _explin_mul(be, e))
        except NonAffineExponent:
            # product of two parameter-affine exponents: fall back to
            # exp(e * be * ln(base)); the base is taken formally positive
            if b[0] not in ("v", "w", "p", "q"):
                raise
            arg = explin_to_expr(be) * explin_to_expr(e)
            out = out * exp(arg * ln(_base_expr(b)))
    return out


def _base_expr(b: tuple) -> Expr:
    if b[0] == "v":
        return Expr.var(b[1])
    if b[0] == "w":
        return Expr.param(b[1])
    if b[0] == "p":
        return b[1]
    if b[0] == "q":
        return Expr.number(b[1])
    raise ExprError(f"no expression form for base {b}")


def _explin_mul(a: ExpLin, b: ExpLin) -> ExpLin:
    if a.is_constant:
        return b.scale(a.offset)
    if b.is_constant:
        return a.scale(b.offset)
    raise NonAffineExponent(f"exponent product ({a})*({b}) is not affine")


def _rat_pow_expr(c: Fraction, e: ExpLin) -> Expr:
    if c == 0:
        raise DomainError("0 raised to a symbolic or non-positive power")
    if c == 1:
        return E_ONE
    if e.is_integer:
        return Expr.number(c ** int(e.offset))
    if e.is_constant:
        q = e.offset
        if c > 0:
            root = _frac_root(c, q.denominator)
            if root is not None:
                return Expr.number(root ** q.numerator)
            return Expr({((("q", c), e),): COEF_ONE})
        raise DomainError(f"fractional power of negative rational {c}")
    return Expr({((("q", c), e),): COEF_ONE})


def _param_pow(name: str, e: ExpLin) -> Expr:
    if e.is_zero:
        return E_ONE
    if e.is_integer:
        n = int(e.offset)
        if n >= 0:
            return Expr.from_coef(Coef(Poly.var(name) ** n))
        return Expr.from_coef(Coef(POLY_ONE, ((Poly.var(name), -n),)))
    return Expr({((("w", name), e),): COEF_ONE})


def _base_pow(b: tuple, e: ExpLin) -> Expr:
    if e.is_zero:
        return E_ONE
    if b[0] == "e":
        return exp(b[1] * explin_to_expr(e))
    if b[0] == "p":
        if e.is_integer and e.offset > 0:
            return b[1] ** int(e.offset)
        return Expr({((b, e),): COEF_ONE})
    if b[0] == "q":
        return _rat_pow_expr(_rat(b[1]), e)
    if b[0] == "w":
        return _param_pow(b[1], e)
    if b[0] == "l":
        return Expr({((b, e),): COEF_ONE})
    return Expr({((b, e),): COEF_ONE})


def _pow_atom(base: Expr, e: ExpLin) -> Expr:
    if base.is_zero:
        raise DomainError("0 raised to a non-positive or symbolic power")
    if base.is_constant:
        if e.is_integer:
            return Expr.from_coef(base.const_coef() ** int(e.offset))
        return _coef_pow(base.const_coef(), e)
    if len(base.terms) == 1:
        m, c = base.terms[0]
        return _mono_pow(m, c, e)
    dens: dict = {}
    for _m, c in base.terms:
        for f, k in c.den:
            dens[f] = max(dens.get(f, 0), k)
    if dens:
        # factor the common denominator out of the base
        mult = COEF_ONE
        for f, k in sorted(dens.items(), key=lambda t: t[0].terms):
            mult = mult * Coef(f ** k)
        cleared = Expr({m: c * mult for m, c in base.terms})
        out = cleared.pow(e)
        for f, k in sorted(dens.items(), key=lambda t: t[0].terms):
            out = out * _poly_pow(f, e.scale(-k))
        return out
    for m, c in base.terms:
        if c.den:
            raise ExprError(
                f"power base must be denominator-free: {base}")
        for b, ee in m:
            if b[0] not in ("v", "j"):
                raise ExprError(
                    "power base may only contain variables and jets: "
                    f"{base}")
            if not ee.is_integer or ee.offset < 0:
                raise ExprError(
                    f"power base must be polynomial: {base}")
    scale, prim = _primitive_expr(base)
    out = Expr({((("p", prim), e),): COEF_ONE})
    if scale != 1:
        out = out * _rat_pow_expr(scale, e)
    return out


def _primitive_expr(e: Expr) -> tuple:
    """Normalize a polynomial expression by its rational content and the
    sign of the leading coefficient's leading parameter monomial."""
    num = 0
    den = 1
    for _m, c in e.terms:
        cc = c.num.content()
        num = _gcd(num, abs(cc.numerator))
        den = _lcm(den, cc.denominator)
    scale = Fraction(num, den)
    if e.terms[-1][1].num.leading()[1] < 0:
        scale = -scale
    prim = Expr({m: c * (1 / scale) for m, c in e.terms})
    return scale, prim


def _absorb_pow_bases(terms: dict) -> dict:
    """Reduce polynomial multiples of compound power atoms: whenever the
    plain part of the terms sharing an atom signature is divisible by an
    atom's base, raise that exponent by one.  Needed so sums such as
    (x^2+y^2+z^2)*B^(-5/2) - B^(-3/2) with B = x^2+y^2+z^2 cancel."""
    changed = True
    while changed:
        changed = False
        groups: dict = {}
        for m, c in terms.items():
            plain = []
            sig = []
            for b, e in m:
                if b[0] in ("v", "j") and e.is_integer and e.offset > 0:
                    plain.append((b, e))
                else:
                    sig.append((b, e))
            groups.setdefault(tuple(sig), {})[tuple(plain)] = c
        out: dict = {}
        for sig, poly_part in groups.items():
            done = False
            for b, e in sig:
                if b[0] != "p" or b[1].is_constant:
                    continue
                q, r = _expr_poly_divmod(poly_part, b[1])
                if q and all(c.is_zero for c in r.values()):
                    new_sig = []
                    for bb, ee in sig:
                        ee2 = ee + EXP_ONE if bb == b else ee
                        if not ee2.is_zero:
                            new_sig.append((bb, ee2))
                    for plain, c in q.items():
                        key = _mono_sorted(plain + tuple(new_sig))
                        out[key] = out[key] + c if key in out else c
                    done = True
                    changed = True
                    break
            if not done:
                for plain, c in poly_part.items():
                    key = _mono_sorted(plain + sig)
                    out[key] = out[key] + c if key in out else c
        terms = {m: c for m, c in out.items() if not c.is_zero}
        if not any(b[0] == "p" for m in terms for b, _ in m):
            break
    return terms


def _expr_poly_divmod(part: dict, base: Expr) -> tuple:
    """Divide a {plain-monomial: Coef} polynomial by a polynomial base Expr.
    Returns (quotient dict, remainder dict); (None, part) when the base is
    not a plain polynomial."""
    bterms = []
    for m, c in base.terms:
        for b, e in m:
            if b[0] not in ("v", "j") or not e.is_integer or e.offset < 0:
                return None, part
        bterms.append((m, c))
    if not bterms:
        return None, part
    bl_m, bl_c = bterms[-1]
    work = dict(part)
    q: dict = {}
    r: dict = {}
    guard = 0
    while work:
        guard += 1
        if guard > 20000:
            return None, part
        m = max(work, key=_mono_key)
        c = work.pop(m)
        if c.is_zero:
            continue
        mm = _plain_div(m, bl_m)
        if mm is None:
            r[m] = r[m] + c if m in r else c
            continue
        k = c / bl_c
        q[mm] = q[mm] + k if mm in q else k
        for m2, c2 in bterms:
            if m2 == bl_m:
                continue  # cancelled by the popped pivot term
            prod, _ = _mono_mul(mm, m2)
            sub = k * c2
            if prod in work:
                v = work[prod] - sub
                if v.is_zero:
                    del work[prod]
                else:
                    work[prod] = v
            else:
                work[prod] = -sub
    return q, r


def _plain_div(a: tuple, b: tuple) -> Optional[tuple]:
    d = dict(a)
    for base, e in b:
        have = d.get(base)
        if have is None:
            return None
        if not (have.is_integer and e.is_integer):
            return None
        r = have.offset - e.offset
        if r < 0:
            return None
        d[base] = ExpLin(r)
    return _mono_sorted((k, v) for k, v in d.items() if not v.is_zero)


# ---------------------------------------------------------------------------
# Elementary functions
# ---------------------------------------------------------------------------

def exp(arg) -> Expr:
    arg = as_expr(arg)
    if arg.is_zero:
        return E_ONE
    # exp(c*ln(b) + rest) -> b^c * exp(rest) for affine denominator-free c
    ln_part = E_ONE
    rest: dict = {}
    for m, c in arg.terms:
        if len(m) == 1 and m[0][0][0] == "l" and m[0][1] == EXP_ONE:
            try:
                ee = coef_to_explin(c)
                ln_part = ln_part * m[0][0][1].pow(ee)
                continue
            except NonAffineExponent:
                pass
        rest[m] = c
    rest_e = Expr(rest)
    if rest_e.is_zero:
        return ln_part
    return ln_part * Expr({((("e", rest_e), EXP_ONE),): COEF_ONE})


def ln(arg) -> Expr:
    arg = as_expr(arg)
    if arg.is_zero:
        raise DomainError("ln(0)")
    if arg == E_ONE:
        return E_ZERO
    if len(arg.terms) == 1:
        m, c = arg.terms[0]
        if c == COEF_ONE and len(m) == 1 and m[0][0][0] == "e" \
                and m[0][1] == EXP_ONE:
            return m[0][0][1]
    return Expr({((("l", arg), EXP_ONE),): COEF_ONE})


E_ZERO = object.__new__(Expr)
E_ZERO.terms = ()
E_ZERO._hash = None
E_ZERO._skey = None
E_ONE = object.__new__(Expr)
E_ONE.terms = (((), COEF_ONE),)
E_ONE._hash = None
E_ONE._skey = None


def normalize(e: Expr) -> Expr:
    """Rebuild the normal form (idempotent by construction)."""
    return Expr(dict(e.terms))


def eliminate_derived(e: Expr, derived: Optional[dict]) -> Expr:
    """Substitute derived parameters by their defining rational functions
    (coefficient occurrences only; exponent occurrences stay symbolic)."""
    if not derived:
        return e
    for _ in range(4):
        if not (e.params() & set(derived)):
            break
        e2 = e.subs_params(derived)
        if e2 == e:
            return e2
        e = e2
    return e


def is_zero_mod(e: Expr, derived: Optional[dict] = None) -> bool:
    """Zero test modulo the defining relations of derived parameters."""
    if e.is_zero:
        return True
    if not derived:
        return False
    return eliminate_derived(e, derived).is_zero


# ---------------------------------------------------------------------------
# Numeric evaluation
# ---------------------------------------------------------------------------

def eval_numeric(e: Expr, point: dict):
    """Evaluate at a point binding variables, parameters (by name) and jets
    (by `jet_name`).  Returns an exact Fraction when possible, a float when
    an elementary function or inexact root was involved."""
    total_f = ZERO
    total_x = 0.0
    inexact = False
    for m, c in e.terms:
        v: object = c.eval(point)
        for b, ee in m:
            ev = ee.eval(point)
            bv = _base_value(b, point)
            v = _apply_power(v, bv, ev)
            if isinstance(v, float):
                inexact = True
        if isinstance(v, float):
            inexact = True
            total_x += v
        else:
            total_f += v
    if inexact:
        return float(total_f) + total_x
    return total_f


def _base_value(b: tuple, point: dict):
    tag = b[0]
    if tag in ("v", "w"):
        if b[1] not in point:
            raise DomainError(f"unbound variable {b[1]}")
        return _rat(point[b[1]])
    if tag == "j":
        key = jet_name(b[1], b[2])
        if key not in point:
            raise DomainError(f"unbound jet {key}")
        return _rat(point[key])
    if tag == "q":
        return _rat(b[1])
    if tag == "p":
        return eval_numeric(b[1], point)
    if tag == "e":
        a = eval_numeric(b[1], point)
        if a == 0:
            return ONE
        return math.exp(float(a))
    if tag == "l":
        a = eval_numeric(b[1], point)
        if a <= 0:
            raise DomainError(f"ln of nonpositive value {a}")
        if a == 1:
            return ZERO
        return math.log(float(a))
    raise ExprError(f"unknown base {b}")


def _apply_power(acc, base, expv: Fraction):
    if expv == 0:
        return acc
    if isinstance(base, float) or isinstance(acc, float):
        b = float(base)
        if b == 0.0 and expv < 0:
            raise DomainError("0 raised to a negative power")
        if b < 0 and expv.denominator != 1:
            raise DomainError("fractional power of a negative value")
        return float(acc) * (b ** float(expv))
    if base == 0:
        if expv < 0:
            raise DomainError("0 raised to a negative power")
        return ZERO
    if expv.denominator == 1:
        return acc * base ** expv.numerator
    if base < 0:
        raise DomainError("fractional power of a negative value")
    root = _frac_root(base, expv.denominator)
    if root is not None:
        return acc * root ** expv.numerator
    return float(acc) * (float(base) ** float(expv))
