"""Syntax trees for data expressions, action formulas, regular formulas and
state formulas.  All nodes are frozen dataclasses, so structural equality and
hashing come for free."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

# -- sorts and data ---------------------------------------------------------

BOOL = "Bool"
NAT = "Nat"
LIST_NAT = "List(Nat)"


@dataclass(frozen=True)
class VarDecl:
    name: str
    sort: str


@dataclass(frozen=True)
class DConst:
    value: object  # bool, int or tuple of int


@dataclass(frozen=True)
class DVar:
    name: str


@dataclass(frozen=True)
class DNot:
    arg: "Data"


@dataclass(frozen=True)
class DBin:
    op: str  # "&&", "||", "=>", "==", "!="
    left: "Data"
    right: "Data"


@dataclass(frozen=True)
class DList:
    items: tuple


Data = Union[DConst, DVar, DNot, DBin, DList]

# -- action formulas --------------------------------------------------------


@dataclass(frozen=True)
class ATrue:
    pass


@dataclass(frozen=True)
class AFalse:
    pass


@dataclass(frozen=True)
class AAct:
    name: str
    args: tuple  # of Data


@dataclass(frozen=True)
class AVal:
    cond: Data


@dataclass(frozen=True)
class ANot:
    arg: "Action"


@dataclass(frozen=True)
class ABin:
    op: str  # "&&", "||", "=>"
    left: "Action"
    right: "Action"


@dataclass(frozen=True)
class AQuant:
    kind: str  # "exists" or "forall"
    decls: tuple  # of VarDecl
    body: "Action"


Action = Union[ATrue, AFalse, AAct, AVal, ANot, ABin, AQuant]

# -- regular formulas -------------------------------------------------------


@dataclass(frozen=True)
class RAct:
    af: Action


@dataclass(frozen=True)
class RSeq:
    left: "Regular"
    right: "Regular"


@dataclass(frozen=True)
class RAlt:
    left: "Regular"
    right: "Regular"


@dataclass(frozen=True)
class RStar:
    arg: "Regular"


@dataclass(frozen=True)
class RPlus:
    arg: "Regular"


Regular = Union[RAct, RSeq, RAlt, RStar, RPlus]

# -- state formulas ---------------------------------------------------------


@dataclass(frozen=True)
class FTrue:
    pass


@dataclass(frozen=True)
class FFalse:
    pass


@dataclass(frozen=True)
class FVal:
    cond: Data


@dataclass(frozen=True)
class FNot:
    arg: "Formula"


@dataclass(frozen=True)
class FAnd:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class FOr:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class FImp:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class FBox:
    reg: Regular
    body: "Formula"


@dataclass(frozen=True)
class FDiamond:
    reg: Regular
    body: "Formula"


@dataclass(frozen=True)
class FQuant:
    kind: str  # "forall" or "exists"
    decls: tuple
    body: "Formula"


@dataclass(frozen=True)
class FFix:
    kind: str  # "mu" or "nu"
    var: str
    params: tuple  # of (VarDecl, Data initial value)
    body: "Formula"


@dataclass(frozen=True)
class FVar:
    name: str
    args: tuple = ()


Formula = Union[FTrue, FFalse, FVal, FNot, FAnd, FOr, FImp, FBox, FDiamond, FQuant, FFix, FVar]


def children(f) -> tuple:
    if isinstance(f, (FNot,)):
        return (f.arg,)
    if isinstance(f, (FAnd, FOr, FImp)):
        return (f.left, f.right)
    if isinstance(f, (FBox, FDiamond, FQuant, FFix)):
        return (f.body,)
    return ()


# -- pretty printing --------------------------------------------------------


def _lit(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "[" + ", ".join(_lit(x) for x in v) + "]"
    return str(v)


def show_data(d) -> str:
    if isinstance(d, DConst):
        return _lit(d.value)
    if isinstance(d, DVar):
        return d.name
    if isinstance(d, DNot):
        return f"!{_atom_data(d.arg)}"
    if isinstance(d, DList):
        return "[" + ", ".join(show_data(x) for x in d.items) + "]"
    return f"({show_data(d.left)} {d.op} {show_data(d.right)})"


def _atom_data(d) -> str:
    s = show_data(d)
    return s if isinstance(d, (DConst, DVar, DList, DBin)) else f"({s})"


def _decls(decls) -> str:
    return ", ".join(f"{d.name}: {d.sort}" for d in decls)


def show_action(a) -> str:
    if isinstance(a, ATrue):
        return "true"
    if isinstance(a, AFalse):
        return "false"
    if isinstance(a, AAct):
        if not a.args:
            return a.name
        return f"{a.name}(" + ", ".join(show_data(x) for x in a.args) + ")"
    if isinstance(a, AVal):
        return f"val({show_data(a.cond)})"
    if isinstance(a, ANot):
        return f"!({show_action(a.arg)})"
    if isinstance(a, ABin):
        return f"({show_action(a.left)} {a.op} {show_action(a.right)})"
    return f"({a.kind} {_decls(a.decls)} . {show_action(a.body)})"


def show_regular(r) -> str:
    if isinstance(r, RAct):
        return show_action(r.af)
    if isinstance(r, RSeq):
        return f"({show_regular(r.left)} . {show_regular(r.right)})"
    if isinstance(r, RAlt):
        return f"({show_regular(r.left)} + {show_regular(r.right)})"
    if isinstance(r, RStar):
        return f"({show_regular(r.arg)})*"
    return f"({show_regular(r.arg)})+"


def show(f) -> str:
    """Concrete syntax accepted back by the parser."""
    if isinstance(f, FTrue):
        return "true"
    if isinstance(f, FFalse):
        return "false"
    if isinstance(f, FVal):
        return f"val({show_data(f.cond)})"
    if isinstance(f, FNot):
        return f"!({show(f.arg)})"
    if isinstance(f, FAnd):
        return f"({show(f.left)} && {show(f.right)})"
    if isinstance(f, FOr):
        return f"({show(f.left)} || {show(f.right)})"
    if isinstance(f, FImp):
        return f"({show(f.left)} => {show(f.right)})"
    if isinstance(f, FBox):
        return f"[{show_regular(f.reg)}]({show(f.body)})"
    if isinstance(f, FDiamond):
        return f"<{show_regular(f.reg)}>({show(f.body)})"
    if isinstance(f, FQuant):
        return f"({f.kind} {_decls(f.decls)} . {show(f.body)})"
    if isinstance(f, FFix):
        ps = ""
        if f.params:
            ps = "(" + ", ".join(f"{d.name}: {d.sort} = {show_data(v)}" for d, v in f.params) + ")"
        return f"({f.kind} {f.var}{ps} . {show(f.body)})"
    if f.args:
        return f"{f.name}(" + ", ".join(show_data(x) for x in f.args) + ")"
    return f.name
