"""Elimination of regular formulas in modalities.

After :func:`expand_regular` every ``FBox``/``FDiamond`` carries a plain
action formula (``RAct``)."""

from __future__ import annotations

from itertools import count

from machina.mucalc.ast import (
    FAnd, FBox, FDiamond, FFix, FNot, FOr, FImp, FQuant, FVar, RAct, RAlt, RPlus, RSeq, RStar,
)


class RegularError(ValueError):
    code = "UNSUPPORTED_REGULAR"


def _names(f, acc: set) -> set:
    if isinstance(f, FFix):
        acc.add(f.var)
    elif isinstance(f, FVar):
        acc.add(f.name)
    for attr in ("arg", "left", "right", "body"):
        c = getattr(f, attr, None)
        if c is not None and not isinstance(c, (RAct,)):
            _names(c, acc)
    return acc


class _Fresh:
    def __init__(self, used: set):
        self.used = used
        self.counter = count(1)

    def __call__(self) -> str:
        for cand in ("X", "Y", "Z"):
            if cand not in self.used:
                self.used.add(cand)
                return cand
        while True:
            cand = f"X{next(self.counter)}"
            if cand not in self.used:
                self.used.add(cand)
                return cand


def expand_regular(f):
    """Rewrite ``[R]phi``/``<R>phi`` with compound *R* into plain modalities
    and fixpoints (``[R*]phi`` becomes ``nu Z. phi && [R]Z`` and
    ``<R*>phi`` becomes ``mu Z. phi || <R>Z``)."""
    return _expand(f, _Fresh(_names(f, set())))


def _expand(f, fresh):
    if isinstance(f, (FBox, FDiamond)):
        return _modal(isinstance(f, FBox), f.reg, _expand(f.body, fresh), fresh)
    if isinstance(f, FNot):
        return FNot(_expand(f.arg, fresh))
    if isinstance(f, (FAnd, FOr, FImp)):
        return type(f)(_expand(f.left, fresh), _expand(f.right, fresh))
    if isinstance(f, FQuant):
        return FQuant(f.kind, f.decls, _expand(f.body, fresh))
    if isinstance(f, FFix):
        return FFix(f.kind, f.var, f.params, _expand(f.body, fresh))
    return f


def _modal(box: bool, r, body, fresh):
    node = FBox if box else FDiamond
    join = FAnd if box else FOr
    if isinstance(r, RAct):
        return node(r, body)
    if isinstance(r, RSeq):
        return _modal(box, r.left, _modal(box, r.right, body, fresh), fresh)
    if isinstance(r, RAlt):
        return join(_modal(box, r.left, body, fresh), _modal(box, r.right, body, fresh))
    if isinstance(r, RStar):
        z = fresh()
        return FFix("nu" if box else "mu", z, (), join(body, _modal(box, r.arg, FVar(z), fresh)))
    if isinstance(r, RPlus):
        return _modal(box, r.arg, _modal(box, RStar(r.arg), body, fresh), fresh)
    raise RegularError(f"unsupported regular operator {type(r).__name__}")


def alpha_equal(a, b, env: tuple = ()) -> bool:
    """Structural equality up to renaming of fixpoint variables."""
    if type(a) is not type(b):
        return False
    if isinstance(a, FFix):
        return (
            a.kind == b.kind
            and a.params == b.params
            and alpha_equal(a.body, b.body, ((a.var, b.var),) + env)
        )
    if isinstance(a, FVar):
        for x, y in env:
            if x == a.name or y == b.name:
                return x == a.name and y == b.name and a.args == b.args
        return a == b
    if isinstance(a, (FBox, FDiamond)):
        return a.reg == b.reg and alpha_equal(a.body, b.body, env)
    if isinstance(a, FNot):
        return alpha_equal(a.arg, b.arg, env)
    if isinstance(a, (FAnd, FOr, FImp)):
        return alpha_equal(a.left, b.left, env) and alpha_equal(a.right, b.right, env)
    if isinstance(a, FQuant):
        return a.kind == b.kind and a.decls == b.decls and alpha_equal(a.body, b.body, env)
    return a == b
