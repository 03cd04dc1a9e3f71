"""Recursive-descent parser for modal mu-calculus formulas with data.

The concrete syntax follows the mCRL2 conventions: ``%`` comments,
``=>`` binding weakest, quantifiers and fixpoints extending as far right as
possible, regular formulas inside ``[..]`` and ``<..>``.  The parser checks
variable binding and fixpoint arity; :func:`parse_formula` additionally
converts to negation normal form and checks monotonicity.
"""

from __future__ import annotations

import re
from typing import Optional

from machina.mucalc.ast import (
    BOOL, LIST_NAT, NAT, AAct, ABin, AFalse, ANot, AQuant, ATrue, AVal, DBin, DConst, DList,
    DNot, DVar, FAnd, FBox, FDiamond, FFalse, FFix, FImp, FNot, FOr, FQuant, FTrue, FVal, FVar,
    RAct, RAlt, RPlus, RSeq, RStar, VarDecl,
)


class FormulaError(ValueError):
    def __init__(self, code: str, message: str, line: int = 0, col: int = 0):
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{code}: {message}")
        self.code = code
        self.line = line
        self.col = col


_TOKEN = re.compile(
    r"(?P<ws>\s+|%[^\n]*)"
    r"|(?P<num>\d+)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<op>=>|&&|\|\||==|!=|:=|[<>\[\]().,:*+!=])"
)

_KEYWORDS = {"true", "false", "val", "mu", "nu", "forall", "exists"}


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def _tokenize(src: str) -> list[_Tok]:
    toks, pos, line, lstart = [], 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise FormulaError("SYNTAX", f"unexpected character {src[pos]!r}", line, pos - lstart + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, line, pos - lstart + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            lstart = pos + text.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - lstart + 1))
    return toks


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.pos = 0
        self.data_scope: list[dict[str, str]] = [{}]
        self.fix_scope: list[dict[str, int]] = [{}]

    # -- helpers ------------------------------------------------------------

    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "id") and t.text in texts

    def error(self, message: str, code: str = "SYNTAX", tok: Optional[_Tok] = None):
        t = tok or self.tok
        return FormulaError(code, message, t.line, t.col)

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        t = self.tok
        self.pos += 1
        return t

    def ident(self) -> _Tok:
        t = self.tok
        if t.kind != "id" or t.text in _KEYWORDS:
            raise self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.pos += 1
        return t

    def data_var(self, name: str) -> Optional[str]:
        return self.data_scope[-1].get(name)

    def push(self, decls=(), fix: Optional[tuple[str, int]] = None):
        d = dict(self.data_scope[-1])
        for v in decls:
            d[v.name] = v.sort
        self.data_scope.append(d)
        f = dict(self.fix_scope[-1])
        if fix:
            f[fix[0]] = fix[1]
        self.fix_scope.append(f)

    def pop(self):
        self.data_scope.pop()
        self.fix_scope.pop()

    # -- sorts and declarations --------------------------------------------

    def sort(self) -> str:
        t = self.ident()
        if t.text == "Bool":
            return BOOL
        if t.text in ("Nat", "Pos", "Int"):
            return NAT
        if t.text == "List":
            self.expect("(")
            inner = self.sort()
            self.expect(")")
            if inner != NAT:
                raise self.error("only List(Nat) is supported", tok=t)
            return LIST_NAT
        raise self.error(f"unsupported sort {t.text!r}", tok=t)

    def decls(self) -> tuple:
        out = []
        while True:
            names = [self.ident().text]
            while self.at(","):
                self.pos += 1
                names.append(self.ident().text)
            self.expect(":")
            s = self.sort()
            out.extend(VarDecl(n, s) for n in names)
            if not self.at(","):
                return tuple(out)
            self.pos += 1

    # -- data expressions ---------------------------------------------------

    def data(self):
        left = self.data_or()
        if self.at("=>"):
            self.pos += 1
            return DBin("=>", left, self.data())
        return left

    def data_or(self):
        left = self.data_and()
        while self.at("||"):
            self.pos += 1
            left = DBin("||", left, self.data_and())
        return left

    def data_and(self):
        left = self.data_eq()
        while self.at("&&"):
            self.pos += 1
            left = DBin("&&", left, self.data_eq())
        return left

    def data_eq(self):
        left = self.data_unary()
        if self.at("==", "!="):
            op = self.tok.text
            self.pos += 1
            return DBin(op, left, self.data_unary())
        return left

    def data_unary(self):
        t = self.tok
        if self.at("!"):
            self.pos += 1
            return DNot(self.data_unary())
        if self.at("("):
            self.pos += 1
            d = self.data()
            self.expect(")")
            return d
        if self.at("["):
            self.pos += 1
            items = []
            if not self.at("]"):
                items.append(self.data())
                while self.at(","):
                    self.pos += 1
                    items.append(self.data())
            self.expect("]")
            if all(isinstance(i, DConst) for i in items):
                return DConst(tuple(i.value for i in items))
            return DList(tuple(items))
        if t.kind == "num":
            self.pos += 1
            return DConst(int(t.text))
        if t.kind == "id":
            if t.text in ("true", "false"):
                self.pos += 1
                return DConst(t.text == "true")
            if self.data_var(t.text) is not None:
                self.pos += 1
                return DVar(t.text)
            raise self.error(f"unbound data variable {t.text!r}", "UNBOUND")
        raise self.error(f"expected data expression, found {t.text or 'end of input'!r}")

    # -- action formulas ----------------------------------------------------

    def action(self):
        left = self.action_or()
        if self.at("=>"):
            self.pos += 1
            return ABin("=>", left, self.action())
        return left

    def action_or(self):
        left = self.action_and()
        while self.at("||"):
            self.pos += 1
            left = ABin("||", left, self.action_and())
        return left

    def action_and(self):
        left = self.action_unary()
        while self.at("&&"):
            self.pos += 1
            left = ABin("&&", left, self.action_unary())
        return left

    def action_unary(self):
        t = self.tok
        if self.at("!"):
            self.pos += 1
            return ANot(self.action_unary())
        if self.at("("):
            self.pos += 1
            a = self.action()
            self.expect(")")
            return a
        if self.at("exists", "forall"):
            self.pos += 1
            ds = self.decls()
            self.expect(".")
            self.push(ds)
            try:
                body = self.action()
            finally:
                self.pop()
            return AQuant(t.text, ds, body)
        if self.at("true"):
            self.pos += 1
            return ATrue()
        if self.at("false"):
            self.pos += 1
            return AFalse()
        if self.at("val"):
            self.pos += 1
            self.expect("(")
            d = self.data()
            self.expect(")")
            return AVal(d)
        name = self.ident().text
        args = ()
        if self.at("("):
            self.pos += 1
            items = [self.data()]
            while self.at(","):
                self.pos += 1
                items.append(self.data())
            self.expect(")")
            args = tuple(items)
        return AAct(name, args)

    # -- regular formulas ---------------------------------------------------

    def regular(self):
        left = self.reg_seq()
        while self.at("+") and self._starts_reg(self.peek()):
            self.pos += 1
            left = RAlt(left, self.reg_seq())
        return left

    def reg_seq(self):
        left = self.reg_postfix()
        while self.at("."):
            self.pos += 1
            left = RSeq(left, self.reg_postfix())
        return left

    @staticmethod
    def _starts_reg(t: _Tok) -> bool:
        if t.kind in ("id", "num"):
            return True
        return t.kind == "op" and t.text in ("(", "!")

    def reg_postfix(self):
        r = self.reg_atom()
        while True:
            if self.at("*"):
                self.pos += 1
                r = RStar(r)
            elif self.at("+") and not self._starts_reg(self.peek()):
                self.pos += 1
                r = RPlus(r)
            else:
                return r

    def reg_atom(self):
        if self.at("("):
            save = self.pos
            try:
                af = self.action()
                if not self.at("*", "+", ".", "]", ">", ")"):
                    raise _Backtrack
                return RAct(af)
            except (FormulaError, _Backtrack):
                self.pos = save
            self.pos += 1
            r = self.regular()
            self.expect(")")
            return r
        return RAct(self.action())

    # -- state formulas -----------------------------------------------------

    def formula(self):
        left = self.f_or()
        if self.at("=>"):
            self.pos += 1
            return FImp(left, self.formula())
        return left

    def f_or(self):
        left = self.f_and()
        while self.at("||"):
            self.pos += 1
            left = FOr(left, self.f_and())
        return left

    def f_and(self):
        left = self.f_unary()
        while self.at("&&"):
            self.pos += 1
            left = FAnd(left, self.f_unary())
        return left

    def f_unary(self):
        t = self.tok
        if self.at("!"):
            self.pos += 1
            return FNot(self.f_unary())
        if self.at("["):
            self.pos += 1
            r = self.regular()
            self.expect("]")
            return FBox(r, self.f_unary())
        if self.at("<"):
            self.pos += 1
            r = self.regular()
            self.expect(">")
            return FDiamond(r, self.f_unary())
        if self.at("("):
            self.pos += 1
            f = self.formula()
            self.expect(")")
            return f
        if self.at("true"):
            self.pos += 1
            return FTrue()
        if self.at("false"):
            self.pos += 1
            return FFalse()
        if self.at("val"):
            self.pos += 1
            self.expect("(")
            d = self.data()
            self.expect(")")
            return FVal(d)
        if self.at("forall", "exists"):
            self.pos += 1
            ds = self.decls()
            self.expect(".")
            self.push(ds)
            try:
                body = self.formula()
            finally:
                self.pop()
            return FQuant(t.text, ds, body)
        if self.at("mu", "nu"):
            return self.fixpoint()
        if t.kind == "id":
            arity = self.fix_scope[-1].get(t.text)
            if arity is None:
                raise self.error(f"unbound fixpoint variable {t.text!r}", "UNBOUND")
            self.pos += 1
            args = ()
            if self.at("("):
                self.pos += 1
                items = [self.data()]
                while self.at(","):
                    self.pos += 1
                    items.append(self.data())
                self.expect(")")
                args = tuple(items)
            if len(args) != arity:
                raise self.error(
                    f"{t.text} expects {arity} argument(s), got {len(args)}", "ARITY", t
                )
            return FVar(t.text, args)
        raise self.error(f"expected formula, found {t.text or 'end of input'!r}")

    def fixpoint(self):
        kind = self.tok.text
        self.pos += 1
        var = self.ident().text
        params = []
        if self.at("("):
            self.pos += 1
            while True:
                name = self.ident().text
                self.expect(":")
                s = self.sort()
                if not self.at("=", ":="):
                    raise self.error("expected '=' or ':=' with an initial value")
                self.pos += 1
                params.append((VarDecl(name, s), self.data()))
                if not self.at(","):
                    break
                self.pos += 1
            self.expect(")")
        self.expect(".")
        self.push([d for d, _ in params], (var, len(params)))
        try:
            body = self.formula()
        finally:
            self.pop()
        return FFix(kind, var, tuple(params), body)


def parse_raw(source: str):
    """Parse without normalisation; binding and arity are still checked."""
    p = _Parser(source)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after formula")
    return f


def parse_action(source: str, variables: dict[str, str] | None = None):
    p = _Parser(source)
    p.data_scope = [dict(variables or {})]
    a = p.action()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after action formula")
    return a


# -- negation normal form ---------------------------------------------------

_DUAL = {"mu": "nu", "nu": "mu", "forall": "exists", "exists": "forall"}


def to_nnf(f, neg: bool = False, flipped: frozenset = frozenset()):
    """Push negations down to data conditions and eliminate ``=>``.

    A fixpoint variable that still ends up under a negation is returned as
    ``FNot(FVar)`` so :func:`check_monotone` can report it."""
    if isinstance(f, FNot):
        return to_nnf(f.arg, not neg, flipped)
    if isinstance(f, FImp):
        return to_nnf(FOr(FNot(f.left), f.right), neg, flipped)
    if isinstance(f, FTrue):
        return FFalse() if neg else f
    if isinstance(f, FFalse):
        return FTrue() if neg else f
    if isinstance(f, FVal):
        return FVal(DNot(f.cond)) if neg else f
    if isinstance(f, (FAnd, FOr)):
        l, r = to_nnf(f.left, neg, flipped), to_nnf(f.right, neg, flipped)
        if isinstance(f, FAnd) != neg:
            return FAnd(l, r)
        return FOr(l, r)
    if isinstance(f, (FBox, FDiamond)):
        b = to_nnf(f.body, neg, flipped)
        if isinstance(f, FBox) != neg:
            return FBox(f.reg, b)
        return FDiamond(f.reg, b)
    if isinstance(f, FQuant):
        return FQuant(_DUAL[f.kind] if neg else f.kind, f.decls, to_nnf(f.body, neg, flipped))
    if isinstance(f, FFix):
        fl = flipped | {f.var} if neg else flipped - {f.var}
        return FFix(_DUAL[f.kind] if neg else f.kind, f.var, f.params, to_nnf(f.body, neg, fl))
    if isinstance(f, FVar):
        return FNot(f) if neg != (f.name in flipped) else f
    raise TypeError(f"not a formula: {f!r}")


def check_monotone(f) -> None:
    if isinstance(f, FNot):
        raise FormulaError(
            "NON_MONOTONE", f"fixpoint variable {f.arg.name!r} occurs under an odd number of negations"
        )
    for c in _kids(f):
        check_monotone(c)


def _kids(f):
    if isinstance(f, (FAnd, FOr, FImp)):
        return (f.left, f.right)
    if isinstance(f, (FBox, FDiamond, FQuant, FFix)):
        return (f.body,)
    return ()


def parse_formula(source: str):
    """Parse, normalise to negation normal form and check monotonicity."""
    f = to_nnf(parse_raw(source))
    check_monotone(f)
    return f
