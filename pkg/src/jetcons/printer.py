"""Render expressions in the text grammar (round-trips through the parser)."""

from __future__ import annotations

from fractions import Fraction

from .expr import Coef, ExpLin, Expr, _fmt_rat


def expr_to_str(e: Expr) -> str:
    if e.is_zero:
        return "0"
    parts = []
    for m, c in reversed(e.terms):
        sign, body = _term_str(m, c)
        if not parts:
            parts.append(body if sign > 0 else f"-{body}")
        else:
            parts.append(("+ " if sign > 0 else "- ") + body)
    return " ".join(parts)


def _term_str(m: tuple, c: Coef) -> tuple:
    sign = 1
    if c.num.leading()[1] < 0:
        sign = -1
        c = -c
    factors = [_factor_str(b, e) for b, e in m]
    cs = _coef_str(c)
    if factors:
        if cs == "1":
            return sign, "*".join(factors)
        return sign, cs + "*" + "*".join(factors)
    return sign, cs


def _coef_str(c: Coef) -> str:
    num = c.num
    ns = _poly_str(num)
    if len(num.terms) > 1:
        ns = f"({ns})"
    if not c.den:
        return ns
    dens = []
    for f, e in c.den:
        fs = _poly_str(f)
        if len(f.terms) > 1:
            fs = f"({fs})"
        dens.append(fs if e == 1 else f"{fs}^{e}")
    ds = "*".join(dens)
    if len(dens) > 1:
        ds = f"({ds})"
    return f"{ns}/{ds}"


def _poly_str(p) -> str:
    if p.is_zero:
        return "0"
    parts = []
    for m, c in reversed(p.terms):
        factors = []
        for n, e in m:
            factors.append(n if e == 1 else f"{n}^{e}")
        if not factors:
            body = _fmt_rat(abs(c))
        elif abs(c) == 1:
            body = "*".join(factors)
        else:
            body = _fmt_rat(abs(c)) + "*" + "*".join(factors)
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(("+ " if c > 0 else "- ") + body)
    return " ".join(parts)


def _exp_str(e: ExpLin) -> str:
    if e == ExpLin.of(1):
        return ""
    if e.is_integer and e.offset >= 0:
        return f"^{int(e.offset)}"
    return f"^({e})"


def _factor_str(b: tuple, e: ExpLin) -> str:
    tag = b[0]
    if tag in ("v", "w"):
        return b[1] + _exp_str(e)
    if tag == "j":
        return _jet_str(b) + _exp_str(e)
    if tag == "p":
        return f"({expr_to_str(b[1])})" + _exp_str(e)
    if tag == "e":
        return f"exp({expr_to_str(b[1])})"
    if tag == "l":
        return f"ln({expr_to_str(b[1])})" + _exp_str(e)
    if tag == "q":
        c: Fraction = b[1]
        cs = _fmt_rat(c)
        if "/" in cs:
            cs = f"({cs})"
        return cs + _exp_str(e)
    raise ValueError(f"unknown base {b}")


def _jet_str(b: tuple) -> str:
    dep, midx = b[1], b[2]
    if not midx:
        return dep
    if all(len(v) == 1 for v, _ in midx):
        return dep + "_" + "".join(v * n for v, n in midx)
    args = [dep]
    for v, n in midx:
        args.append(f"{v}")
        args.append(f"{n}")
    return "diff(" + ", ".join(args) + ")"
