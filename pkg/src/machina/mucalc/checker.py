"""Explicit-state evaluation of first-order modal mu-calculus formulas.

State sets are numpy boolean vectors.  Fixpoints with data parameters are
instantiated over finite domains and solved by nested Tarski iteration;
inner fixpoints are recomputed from scratch whenever an approximation they
depend on changes.  Results of modalities, quantifiers and fixpoints are
memoised together with the versions of the fixpoint approximations they
read, so subformulas that do not depend on a changed variable are reused.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from machina.engine import ActionLabel
from machina.lts import Lts
from machina.mucalc.ast import (
    BOOL, LIST_NAT, AAct, ABin, AFalse, ANot, AQuant, ATrue, AVal, DBin, DConst, DList, DNot,
    DVar, FAnd, FBox, FDiamond, FFalse, FFix, FImp, FNot, FOr, FQuant, FTrue, FVal, FVar, RAct,
)
from machina.mucalc.parser import check_monotone, to_nnf
from machina.mucalc.regular import expand_regular


class CheckError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# -- data -------------------------------------------------------------------


def eval_data(d, env: dict):
    if isinstance(d, DConst):
        return d.value
    if isinstance(d, DVar):
        return env[d.name]
    if isinstance(d, DNot):
        return not eval_data(d.arg, env)
    if isinstance(d, DList):
        return tuple(eval_data(x, env) for x in d.items)
    op = d.op
    if op == "&&":
        return bool(eval_data(d.left, env)) and bool(eval_data(d.right, env))
    if op == "||":
        return bool(eval_data(d.left, env)) or bool(eval_data(d.right, env))
    if op == "=>":
        return (not eval_data(d.left, env)) or bool(eval_data(d.right, env))
    left, right = eval_data(d.left, env), eval_data(d.right, env)
    same = left == right and type(left) is type(right)
    return same if op == "==" else not same


def _values(v, ints: set, lists: set):
    if isinstance(v, bool):
        return
    if isinstance(v, int):
        ints.add(v)
    elif isinstance(v, tuple):
        lists.add(v)
        for x in v:
            _values(x, ints, lists)


def _formula_consts(f, ints: set, lists: set):
    if isinstance(f, DConst):
        _values(f.value, ints, lists)
        return
    if isinstance(f, tuple):
        for x in f:
            _formula_consts(x, ints, lists)
        return
    for name in getattr(f, "__dataclass_fields__", ()):
        _formula_consts(getattr(f, name), ints, lists)


class Domains:
    """Finite carriers for quantified variables.

    Data only occurs in equality tests, so two values that appear neither in
    a label nor in the formula are interchangeable; one fresh representative
    per sort suffices."""

    def __init__(self, labels: list, formula=None):
        ints: set = set()
        lists: set = set()
        for lab in labels:
            for a in getattr(lab, "args", ()):
                _values(a, ints, lists)
        self.label_ints, self.label_lists = set(ints), set(lists)
        if formula is not None:
            _formula_consts(formula, ints, lists)
        self.fresh_int = max(ints, default=-1) + 1
        self.fresh_list = (self.fresh_int,)
        self.ints = sorted(ints) + [self.fresh_int]
        self.lists = sorted(lists) + [self.fresh_list]
        self.const_ints, self.const_lists = set(), set()
        if formula is not None:
            _formula_consts(formula, self.const_ints, self.const_lists)

    def carrier(self, sort: str) -> list:
        if sort == BOOL:
            return [False, True]
        if sort == LIST_NAT:
            return self.lists
        return self.ints

    def local_carrier(self, sort: str, label, env: dict) -> list:
        """Carrier restricted to values relevant for matching one label."""
        if sort == BOOL:
            return [False, True]
        ints, lists = set(self.const_ints), set(self.const_lists)
        for a in label.args:
            _values(a, ints, lists)
        for v in env.values():
            _values(v, ints, lists)
        if sort == LIST_NAT:
            return sorted(lists) + [self.fresh_list]
        return sorted(ints) + [self.fresh_int]


# -- action formulas --------------------------------------------------------


def _value_eq(a, b) -> bool:
    return a == b and type(a) is type(b)


def match_action(af, label: ActionLabel, env: dict, dom: Domains) -> bool:
    """Does *label* belong to the set denoted by *af* under *env*?"""
    if isinstance(af, ATrue):
        return True
    if isinstance(af, AFalse):
        return False
    if isinstance(af, AAct):
        if af.name != label.name or len(af.args) != len(label.args):
            return False
        return all(_value_eq(eval_data(d, env), v) for d, v in zip(af.args, label.args))
    if isinstance(af, AVal):
        return bool(eval_data(af.cond, env))
    if isinstance(af, ANot):
        return not match_action(af.arg, label, env, dom)
    if isinstance(af, ABin):
        if af.op == "||":
            return match_action(af.left, label, env, dom) or match_action(af.right, label, env, dom)
        if af.op == "&&":
            return match_action(af.left, label, env, dom) and match_action(af.right, label, env, dom)
        return (not match_action(af.left, label, env, dom)) or match_action(af.right, label, env, dom)
    # quantifier
    if af.kind == "exists":
        body = af.body
        if isinstance(body, ABin) and body.op == "||":
            return match_action(AQuant("exists", af.decls, body.left), label, env, dom) or match_action(
                AQuant("exists", af.decls, body.right), label, env, dom
            )
        if isinstance(body, AAct):
            r = _unify(body, af.decls, label, env)
            if r is not None:
                return r
    names = [d.name for d in af.decls]
    carriers = [dom.local_carrier(d.sort, label, env) for d in af.decls]
    want = af.kind == "exists"
    for combo in itertools.product(*carriers):
        inner = dict(env)
        inner.update(zip(names, combo))
        if match_action(af.body, label, inner, dom) == want:
            return want
    return not want


def _unify(act: AAct, decls, label: ActionLabel, env: dict) -> Optional[bool]:
    """Decide ``exists decls . act`` by matching arguments directly; returns
    None when an argument is not a plain variable or closed expression."""
    if act.name != label.name or len(act.args) != len(label.args):
        return False
    bound = {d.name: d.sort for d in decls}
    binding: dict = {}
    for d, v in zip(act.args, label.args):
        if isinstance(d, DVar) and d.name in bound:
            sort = bound[d.name]
            if sort == BOOL and not isinstance(v, bool):
                return False
            if sort == LIST_NAT and not isinstance(v, tuple):
                return False
            if sort not in (BOOL, LIST_NAT) and (isinstance(v, bool) or not isinstance(v, int)):
                return False
            if d.name in binding and not _value_eq(binding[d.name], v):
                return False
            binding[d.name] = v
        elif _free_data(d) & bound.keys():
            return None
        elif not _value_eq(eval_data(d, env), v):
            return False
    return True


def _free_data(d) -> set:
    if isinstance(d, DVar):
        return {d.name}
    if isinstance(d, DNot):
        return _free_data(d.arg)
    if isinstance(d, DBin):
        return _free_data(d.left) | _free_data(d.right)
    if isinstance(d, DList):
        out = set()
        for x in d.items:
            out |= _free_data(x)
        return out
    return set()


# -- free variables ---------------------------------------------------------


def _free_action(a) -> set:
    if isinstance(a, AAct):
        out = set()
        for d in a.args:
            out |= _free_data(d)
        return out
    if isinstance(a, AVal):
        return _free_data(a.cond)
    if isinstance(a, ANot):
        return _free_action(a.arg)
    if isinstance(a, ABin):
        return _free_action(a.left) | _free_action(a.right)
    if isinstance(a, AQuant):
        return _free_action(a.body) - {d.name for d in a.decls}
    return set()


class _Info:
    __slots__ = ("data", "fix", "key_data", "key_fix")

    def __init__(self, data: frozenset, fix: frozenset):
        self.data = data
        self.fix = fix
        self.key_data = tuple(sorted(data))
        self.key_fix = tuple(sorted(fix))


def annotate(f, table: dict) -> _Info:
    """Record free data and fixpoint variables of every node (by identity)."""
    if isinstance(f, (FTrue, FFalse)):
        info = _Info(frozenset(), frozenset())
    elif isinstance(f, FVal):
        info = _Info(frozenset(_free_data(f.cond)), frozenset())
    elif isinstance(f, FVar):
        d = set()
        for a in f.args:
            d |= _free_data(a)
        info = _Info(frozenset(d), frozenset({f.name}))
    elif isinstance(f, (FAnd, FOr)):
        l, r = annotate(f.left, table), annotate(f.right, table)
        info = _Info(l.data | r.data, l.fix | r.fix)
    elif isinstance(f, (FBox, FDiamond)):
        b = annotate(f.body, table)
        info = _Info(b.data | _free_action(f.reg.af), b.fix)
    elif isinstance(f, FQuant):
        b = annotate(f.body, table)
        info = _Info(b.data - {d.name for d in f.decls}, b.fix)
    elif isinstance(f, FFix):
        b = annotate(f.body, table)
        d = set(b.data - {p.name for p, _ in f.params})
        for _, init in f.params:
            d |= _free_data(init)
        info = _Info(frozenset(d), b.fix - {f.var})
    else:
        raise CheckError("NOT_NORMALISED", f"unexpected node {type(f).__name__}")
    table[id(f)] = info
    return info


# -- edge views -------------------------------------------------------------


class EdgeView:
    """Edges of an Lts split into self-loops and proper edges.

    Self-loops are folded into a per-state flag for each action mask, which
    keeps modalities cheap on LTSs carrying many observation loops."""

    def __init__(self, lts: Lts, cache_bytes: int = 1 << 30):
        self.lts = lts
        self.n = lts.n_states
        loop = lts.src == lts.dst
        self.loop_src = lts.src[loop]
        self.loop_lab = lts.lab[loop]
        proper = ~loop
        self.src = lts.src[proper]
        self.lab = lts.lab[proper]
        self.dst = lts.dst[proper]
        self._cache: dict[bytes, tuple] = {}
        self._bytes = 0
        self._limit = cache_bytes

    def select(self, mask: np.ndarray) -> tuple:
        key = mask.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        lmask = mask[self.loop_lab]
        if lmask.any():
            flag = np.zeros(self.n, dtype=bool)
            flag[self.loop_src[lmask]] = True
        else:
            flag = None
        sel = mask[self.lab]
        out = (flag, self.src[sel], self.dst[sel])
        size = out[1].nbytes + out[2].nbytes + (self.n if flag is not None else 0)
        if self._bytes + size > self._limit:
            self._cache.clear()
            self._bytes = 0
        self._cache[key] = out
        self._bytes += size
        return out

    def box(self, mask: np.ndarray, phi: np.ndarray) -> np.ndarray:
        flag, a_src, a_dst = self.select(mask)
        if flag is None:
            res = np.ones(self.n, dtype=bool)
        else:
            res = ~(flag & ~phi)
        res[a_src[~phi[a_dst]]] = False
        return res

    def diamond(self, mask: np.ndarray, phi: np.ndarray) -> np.ndarray:
        flag, a_src, a_dst = self.select(mask)
        if flag is None:
            res = np.zeros(self.n, dtype=bool)
        else:
            res = flag & phi
        res[a_src[phi[a_dst]]] = True
        return res


# -- evaluation -------------------------------------------------------------


@dataclass(eq=False)
class FixState:
    node: FFix
    env: dict
    fenv: dict
    names: tuple
    instances: list
    table: dict
    version: int = 0


@dataclass
class Verdict:
    holds: bool
    witness: Optional[object] = None
    witness_error: Optional[str] = None
    stats: dict = field(default_factory=dict)


def prepare(f):
    """Normalise a parsed formula for evaluation."""
    g = expand_regular(f)
    g = to_nnf(g)
    check_monotone(g)
    return g


class Evaluator:
    def __init__(
        self,
        lts: Lts,
        formula,
        view: Optional[EdgeView] = None,
        max_instances: int = 1 << 12,
    ):
        self.lts = lts
        self.formula = formula
        self.view = view or EdgeView(lts)
        self.n = lts.n_states
        self.dom = Domains(lts.labels, formula)
        self.max_instances = max_instances
        self.info: dict[int, _Info] = {}
        annotate(formula, self.info)
        self._masks: dict = {}
        self._memo: dict = {}
        self.iterations = 0
        self._deadline: Optional[float] = None

    # action masks ----------------------------------------------------------

    def mask(self, af, env: dict) -> np.ndarray:
        free = tuple(sorted(_free_action(af)))
        key = (id(af), tuple(env[v] for v in free))
        m = self._masks.get(key)
        if m is None:
            sub = {v: env[v] for v in free}
            m = np.fromiter(
                (match_action(af, lab, sub, self.dom) for lab in self.lts.labels),
                dtype=bool,
                count=len(self.lts.labels),
            )
            self._masks[key] = m
        return m

    # state formulas --------------------------------------------------------

    def _stamp(self, info: _Info, fenv: dict) -> tuple:
        return tuple((id(fenv[x]), fenv[x].version) for x in info.key_fix)

    def eval(self, f, env: dict, fenv: dict) -> np.ndarray:
        if isinstance(f, FTrue):
            return np.ones(self.n, dtype=bool)
        if isinstance(f, FFalse):
            return np.zeros(self.n, dtype=bool)
        if isinstance(f, FVal):
            return np.full(self.n, bool(eval_data(f.cond, env)))
        if isinstance(f, FVar):
            fs = fenv[f.name]
            return fs.table[tuple(eval_data(a, env) for a in f.args)]
        if isinstance(f, FAnd):
            left = self.eval(f.left, env, fenv)
            if not left.any():
                return left
            return left & self.eval(f.right, env, fenv)
        if isinstance(f, FOr):
            left = self.eval(f.left, env, fenv)
            if left.all():
                return left
            return left | self.eval(f.right, env, fenv)
        info = self.info[id(f)]
        key = (id(f), tuple(env[v] for v in info.key_data))
        stamp = self._stamp(info, fenv)
        hit = self._memo.get(key)
        if hit is not None and hit[0] == stamp:
            return hit[1]
        if isinstance(f, FBox):
            res = self.view.box(self.mask(f.reg.af, env), self.eval(f.body, env, fenv))
        elif isinstance(f, FDiamond):
            res = self.view.diamond(self.mask(f.reg.af, env), self.eval(f.body, env, fenv))
        elif isinstance(f, FQuant):
            res = self._quant(f, env, fenv)
        elif isinstance(f, FFix):
            fs = self.solve(f, env, fenv)
            res = fs.table[tuple(eval_data(v, env) for _, v in f.params)]
        else:
            raise CheckError("NOT_NORMALISED", f"unexpected node {type(f).__name__}")
        self._memo[key] = (stamp, res)
        return res

    def _quant(self, f: FQuant, env: dict, fenv: dict) -> np.ndarray:
        names = [d.name for d in f.decls]
        carriers = [self.dom.carrier(d.sort) for d in f.decls]
        total = 1
        for c in carriers:
            total *= len(c)
        if total > self.max_instances:
            raise CheckError("DOMAIN_LIMIT", f"quantifier over {names} has {total} instances")
        is_all = f.kind == "forall"
        acc = np.full(self.n, is_all)
        for combo in itertools.product(*carriers):
            inner = dict(env)
            inner.update(zip(names, combo))
            v = self.eval(f.body, inner, fenv)
            if is_all:
                acc &= v
                if not acc.any():
                    break
            else:
                acc |= v
                if acc.all():
                    break
        return acc

    def solve(self, f: FFix, env: dict, fenv: dict) -> FixState:
        """Solve all parameter instances of fixpoint *f* simultaneously."""
        info = self.info[id(f)]
        key = ("fix", id(f), tuple(env[v] for v in info.key_data))
        stamp = self._stamp(info, fenv)
        hit = self._memo.get(key)
        if hit is not None and hit[0] == stamp:
            return hit[1]
        names = tuple(p.name for p, _ in f.params)
        carriers = [self.dom.carrier(p.sort) for p, _ in f.params]
        instances = list(itertools.product(*carriers))
        if len(instances) > self.max_instances:
            raise CheckError(
                "DOMAIN_LIMIT", f"fixpoint {f.var} has {len(instances)} parameter instances"
            )
        start = f.kind == "nu"
        table = {inst: np.full(self.n, start) for inst in instances}
        fs = FixState(f, dict(env), dict(fenv), names, instances, table)
        inner_fenv = dict(fenv)
        inner_fenv[f.var] = fs
        changed = True
        while changed:
            changed = False
            self.iterations += 1
            if self._deadline is not None and time.perf_counter() > self._deadline:
                raise CheckError("TIMEOUT", "formula evaluation exceeded its time budget")
            for inst in instances:
                inner = dict(env)
                inner.update(zip(names, inst))
                new = self.eval(f.body, inner, inner_fenv)
                if not np.array_equal(new, table[inst]):
                    table[inst] = new
                    fs.version += 1
                    changed = True
        self._memo[key] = (stamp, fs)
        return fs

    def run(self, timeout_s: Optional[float] = None) -> np.ndarray:
        if timeout_s is not None:
            self._deadline = time.perf_counter() + timeout_s
        return self.eval(self.formula, {}, {})


def check(
    lts: Lts,
    formula,
    view: Optional[EdgeView] = None,
    witness: bool = True,
    timeout_s: Optional[float] = None,
) -> Verdict:
    """Decide whether the initial state satisfies *formula*.

    *formula* may be raw parser output; it is expanded and normalised here.
    When it fails and matches a supported template, a witness is attached.
    """
    t0 = time.perf_counter()
    g = prepare(formula)
    ev = Evaluator(lts, g, view)
    sat = ev.run(timeout_s)
    holds = bool(sat[0]) if lts.n_states else True
    v = Verdict(holds, stats={"iterations": ev.iterations})
    if not holds and witness:
        from machina.mucalc.witness import UnsupportedTemplate, extract_counterexample

        try:
            v.witness = extract_counterexample(ev)
        except UnsupportedTemplate as e:
            v.witness_error = str(e)
    v.stats["ms"] = round((time.perf_counter() - t0) * 1000, 1)
    return v
