"""Translate result-bundle expression strings into sympy.

This is an independent reading of the text grammar: dependents become
sympy Functions of their variables, jet names become Derivative objects,
and all algebra is sympy's.  No code is shared with the engine that
produced the bundles.
"""

from __future__ import annotations

import re

import sympy as sp


class TranslateError(ValueError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))")


def tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise TranslateError(f"bad character at {pos} in {text!r}")
        pos = m.end()
        if m.group("num"):
            out.append(("num", int(m.group("num"))))
        elif m.group("name"):
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class Context:
    """Knows which names are variables, dependents, and parameters."""

    def __init__(self, ivars, deps, params):
        self.ivars = {v: sp.Symbol(v) for v in ivars}
        self.params = {p: sp.Symbol(p) for p in params}
        self.deps = {}
        for d, dep_vars in deps.items():
            args = [self.ivars[v] for v in dep_vars]
            self.deps[d] = sp.Function(d)(*args)
        self.dep_vars = dict(deps)

    def symbol(self, name):
        if name in self.ivars:
            return self.ivars[name]
        if name in self.params:
            return self.params[name]
        if name in self.deps:
            return self.deps[name]
        if "_" in name:
            dep, _, suffix = name.partition("_")
            if dep in self.deps and suffix and \
                    all(ch in self.ivars for ch in suffix):
                f = self.deps[dep]
                for ch in suffix:
                    f = sp.diff(f, self.ivars[ch])
                return f
        raise TranslateError(f"unknown identifier {name!r}")


class Reader:
    def __init__(self, ctx: Context, text: str):
        self.ctx = ctx
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise TranslateError(f"expected {op!r}, got {val!r}")

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            raise TranslateError("trailing input")
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                e = e + rhs if val == "+" else e - rhs
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                e = e * rhs if val == "*" else e / rhs
            else:
                return e

    def unary(self):
        kind, val = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return -self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val = self.peek()
        if kind == "op" and val == "^":
            self.next()
            return base ** self.exponent()
        return base

    def exponent(self):
        kind, val = self.next()
        if kind == "num":
            return sp.Integer(val)
        if kind == "op" and val == "-":
            return -self.exponent()
        if kind == "name":
            return self.ctx.symbol(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise TranslateError("expected exponent")

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return sp.Integer(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val in ("exp", "ln", "diff"):
                self.expect("(")
                if val == "diff":
                    return self._diff()
                arg = self.expr()
                self.expect(")")
                return sp.exp(arg) if val == "exp" else sp.log(arg)
            return self.ctx.symbol(val)
        raise TranslateError("expected an expression")

    def _diff(self):
        e = self.expr()
        directions = []
        while True:
            kind, val = self.next()
            if kind == "op" and val == ")":
                break
            if not (kind == "op" and val == ","):
                raise TranslateError("expected ',' in diff()")
            kind, val = self.next()
            if kind == "name":
                directions.append([self.ctx.ivars[val], 1])
            elif kind == "num":
                directions[-1][1] = val
            else:
                raise TranslateError("bad diff argument")
        for var, count in directions:
            e = sp.diff(e, var, count)
        return e


def read(ctx: Context, text: str):
    return Reader(ctx, text).parse()
