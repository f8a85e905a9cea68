"""Recursive-descent parser for the expression grammar.

Grammar (EBNF):
    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = atom [ "^" exponent ] ;
    exponent = signed_number | name | "(" expr ")" ;
    atom     = number | "(" expr ")" | call | jetname | name ;
    call     = ("exp" | "ln") "(" expr ")"
             | "diff" "(" expr { "," name [ "," integer ] } ")" ;
    jetname  = depname "_" suffix ;   (* one-letter variable names only *)
    number   = digits ;

Identifiers resolve against a symbol table of independent variables,
dependent variables and parameters; `u_xx` style jets require the
underscore suffix to spell single-letter independent variables.
"""

from __future__ import annotations

import re
from fractions import Fraction

from . import expr as ex
from .expr import Expr


class ParseError(ex.ExprError):
    def __init__(self, msg, pos=None, text=None):
        self.pos = pos
        if pos is not None and text is not None:
            msg = f"{msg} at position {pos}: ...{text[max(0, pos - 10):pos + 10]!r}"
        super().__init__(msg)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ParseError("unexpected character", pos, text)
        pos = m.end()
        if m.group("num"):
            out.append(("num", int(m.group("num")), m.start()))
        elif m.group("name"):
            out.append(("name", m.group("name"), m.start()))
        else:
            out.append(("op", m.group("op"), m.start()))
    out.append(("end", None, len(text)))
    return out


class SymbolTable:
    """Resolution context: which names are variables, dependents, parameters."""

    def __init__(self, ivars=(), deps=(), params=()):
        self.ivars = tuple(ivars)
        self.deps = tuple(deps)
        self.params = tuple(params)
        dup = [n for n in set(self.ivars) & set(self.params)] + \
              [n for n in set(self.ivars) & set(self.deps)] + \
              [n for n in set(self.deps) & set(self.params)]
        if dup:
            raise ParseError(f"names declared twice: {sorted(set(dup))}")

    def with_extra(self, ivars=(), deps=(), params=()):
        return SymbolTable(self.ivars + tuple(ivars),
                           self.deps + tuple(deps),
                           self.params + tuple(params))

    def resolve(self, name: str) -> Expr:
        if name in self.ivars:
            return Expr.var(name)
        if name in self.params:
            return Expr.param(name)
        if name in self.deps:
            return Expr.jet(name, ())
        if "_" in name:
            dep, _, suffix = name.partition("_")
            if dep in self.deps and suffix:
                counts: dict = {}
                for ch in suffix:
                    if ch not in self.ivars or len(ch) != 1:
                        raise ParseError(
                            f"jet suffix {suffix!r} of {name!r} must spell "
                            "single-letter independent variables")
                    counts[ch] = counts.get(ch, 0) + 1
                return Expr.jet(dep, tuple(counts.items()))
        raise ParseError(f"unknown identifier {name!r}")


class Parser:
    def __init__(self, symbols: SymbolTable, text: str):
        self.symbols = symbols
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, op: str):
        kind, val, pos = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", pos, self.text)

    # ---- grammar ----------------------------------------------------------

    def parse(self) -> Expr:
        e = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ParseError("trailing input", pos, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                e = e + rhs if val == "+" else e - rhs
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                e = e * rhs if val == "*" else e / rhs
            else:
                return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            e = self.exponent()
            return base.pow(e)
        return base

    def exponent(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.next()
            return ex.ExpLin.of(val)
        if kind == "op" and val == "-":
            self.next()
            inner = self.exponent()
            if isinstance(inner, ex.ExpLin):
                return inner.scale(-1)
            return -inner
        if kind == "name":
            self.next()
            if val not in self.symbols.params:
                raise ParseError(
                    f"exponent {val!r} must be a parameter", pos, self.text)
            return ex.ExpLin.param(val)
        if kind == "op" and val == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            try:
                return _expr_exponent(e)
            except ex.NonAffineExponent:
                # Expr.pow handles non-affine exponents via exp/ln
                return e
        raise ParseError("expected exponent", pos, self.text)

    def atom(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "num":
            return Expr.number(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in ("exp", "ln", "diff"):
                self.expect("(")
                if val == "diff":
                    return self._diff_call()
                arg = self.expr()
                self.expect(")")
                return ex.exp(arg) if val == "exp" else ex.ln(arg)
            return self._resolve(val, pos)
        raise ParseError("expected an expression", pos, self.text)

    def _resolve(self, name: str, pos: int) -> Expr:
        try:
            return self.symbols.resolve(name)
        except ParseError as err:
            raise ParseError(str(err), pos, self.text) from None

    def _diff_call(self) -> Expr:
        from .diffops import total_derivative
        e = self.expr()
        directions: list = []
        while True:
            kind, val, pos = self.next()
            if kind == "op" and val == ")":
                break
            if not (kind == "op" and val == ","):
                raise ParseError("expected ',' in diff()", pos, self.text)
            kind, val, pos = self.next()
            if kind == "name":
                if val not in self.symbols.ivars:
                    raise ParseError(
                        "diff() direction must be an independent variable",
                        pos, self.text)
                directions.append([val, 1])
            elif kind == "num":
                if not directions:
                    raise ParseError(
                        "diff() count must follow a direction", pos, self.text)
                directions[-1][1] = val
            else:
                raise ParseError("bad diff() argument", pos, self.text)
        if not directions:
            raise ParseError("diff() needs a direction", None, self.text)
        for var, count in directions:
            for _ in range(count):
                e = total_derivative(e, var)
        return e


def _expr_exponent(e: Expr) -> ex.ExpLin:
    try:
        return ex.coef_to_explin(e.const_coef())
    except ex.ExprError:
        raise ex.NonAffineExponent(
            f"exponent {e} is not an affine parameter combination") from None


def parse_expr(text: str, symbols: SymbolTable) -> Expr:
    return Parser(symbols, text).parse()
