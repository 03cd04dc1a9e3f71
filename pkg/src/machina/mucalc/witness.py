"""Counterexample extraction for failing formulas.

Two shapes are produced.  A refutation that bottoms out in a local fact
(``false``, a false ``val``, a missing or present action) yields a finite
path from the initial state.  A refutation that reaches a least fixpoint of
the inevitability shape ``mu X . [A]X || psi`` yields a lasso whose loop
only follows ``A`` edges inside the region where the fixpoint is false.

The path to that point is found by a shortest-path search over refutation
positions ``(state, subformula, data environment)``.  Costs are ordered by
number of LTS steps first, then by the number of fixpoint parameters that
change on unfolding, so the witness tracks values that stay put where it can.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from machina.mucalc.ast import (
    FAnd, FBox, FDiamond, FFalse, FFix, FOr, FQuant, FTrue, FVal, FVar,
)


class UnsupportedTemplate(Exception):
    code = "UNSUPPORTED_TEMPLATE"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")


@dataclass
class Witness:
    """``stem`` starts in state 0; each entry is ``(label text, target)``.

    For a lasso, ``loop`` is non-empty and ends in the state where it starts
    (the last state of the stem, or 0 if the stem is empty)."""

    kind: str  # "path" or "lasso"
    stem: list = field(default_factory=list)
    loop: list = field(default_factory=list)

    @property
    def loop_start(self) -> int:
        return self.stem[-1][1] if self.stem else 0

    def labels(self) -> list[str]:
        return [l for l, _ in self.stem] + [l for l, _ in self.loop]

    def to_json(self) -> dict:
        d = {"kind": self.kind, "stem": [[l, s] for l, s in self.stem]}
        if self.kind == "lasso":
            d["loop"] = [[l, s] for l, s in self.loop]
        return d

    def rotate(self, start_pred) -> "Witness":
        """Rotate the loop so it begins at the first loop position whose
        outgoing label satisfies *start_pred*."""
        if self.kind != "lasso":
            return self
        for k, (label, _) in enumerate(self.loop):
            if start_pred(label):
                if k == 0:
                    return self
                return Witness("lasso", self.stem + self.loop[:k], self.loop[k:] + self.loop[:k])
        return self


def _disjuncts(f) -> list:
    if isinstance(f, FOr):
        return _disjuncts(f.left) + _disjuncts(f.right)
    return [f]


def _mentions(f, var: str) -> bool:
    if isinstance(f, FVar):
        return f.name == var
    if isinstance(f, FFix) and f.var == var:
        return False
    for attr in ("left", "right", "body"):
        c = getattr(f, attr, None)
        if c is not None and _mentions(c, var):
            return True
    return False


def inevitability_box(f: FFix) -> Optional[FBox]:
    """The ``[A]X`` disjunct if *f* has the shape ``mu X . [A]X || psi``."""
    if f.kind != "mu" or f.params:
        return None
    found = None
    for d in _disjuncts(f.body):
        if isinstance(d, FBox) and isinstance(d.body, FVar) and d.body.name == f.var:
            if found is not None:
                return None
            found = d
        elif _mentions(d, f.var):
            return None
    return found


def _recursive(f) -> bool:
    if isinstance(f, (FVar, FFix)):
        return True
    return any(
        _recursive(c)
        for c in (getattr(f, "left", None), getattr(f, "right", None), getattr(f, "body", None))
        if c is not None
    )


def _env_key(env: dict) -> tuple:
    return tuple(sorted(env.items()))


def _fenv_key(fenv: dict) -> tuple:
    return tuple(sorted((k, id(v)) for k, v in fenv.items()))


def extract_counterexample(ev, max_positions: int = 2_000_000) -> Witness:
    """Witness for ``not ev.formula`` at state 0 (see module docstring)."""
    lts = ev.lts
    off = lts._offsets
    lab, dst = lts.lab, lts.dst
    texts = lts.label_text
    truth_memo: dict = {}

    def truth(f, env, fenv) -> np.ndarray:
        if isinstance(f, FVar):
            fs = fenv[f.name]
            from machina.mucalc.checker import eval_data

            return fs.table[tuple(eval_data(a, env) for a in f.args)]
        k = (id(f), _env_key(env), _fenv_key(fenv))
        r = truth_memo.get(k)
        if r is None:
            r = truth_memo[k] = ev.eval(f, env, fenv)
        return r

    from machina.mucalc.checker import eval_data

    counter = itertools.count()
    info: dict = {}
    parent: dict = {}
    best: dict = {}
    heap: list = []

    def push(cost, s, f, env, fenv, prev, edge):
        key = (s, id(f), _env_key(env), _fenv_key(fenv))
        if key in best and best[key] <= cost:
            return
        best[key] = cost
        info[key] = (s, f, env, fenv)
        parent[key] = (prev, edge)
        heapq.heappush(heap, (cost, next(counter), key))

    def path_to(key) -> list:
        edges = []
        while key is not None:
            prev, edge = parent[key]
            if edge is not None:
                edges.append(edge)
            key = prev
        edges.reverse()
        return edges

    push((0, 0), 0, ev.formula, {}, {}, None, None)
    done: set = set()
    while heap:
        cost, _, key = heapq.heappop(heap)
        if key in done or best.get(key) != cost:
            continue
        done.add(key)
        if len(done) > max_positions:
            raise UnsupportedTemplate("refutation search exceeded its position budget")
        s, f, env, fenv = info[key]
        steps, changes = cost
        if isinstance(f, (FFalse, FVal)):
            return Witness("path", [(texts[l], t) for l, t in path_to(key)])
        if isinstance(f, FTrue):
            continue
        if isinstance(f, FAnd):
            for c in (f.left, f.right):
                if not truth(c, env, fenv)[s]:
                    push(cost, s, c, env, fenv, key, None)
        elif isinstance(f, FOr):
            # every disjunct is false; the ones carrying fixpoint structure are
            # the interesting branch, the others are side conditions
            parts = _disjuncts(f)
            main = [c for c in parts if _recursive(c)] or parts
            for c in main:
                push(cost, s, c, env, fenv, key, None)
        elif isinstance(f, (FBox, FDiamond)):
            mask = ev.mask(f.reg.af, env)
            if isinstance(f, FDiamond) and not mask[lab[off[s]:off[s + 1]]].any():
                return Witness("path", [(texts[l], t) for l, t in path_to(key)])
            body = truth(f.body, env, fenv)
            for i in range(off[s], off[s + 1]):
                l, t = int(lab[i]), int(dst[i])
                if mask[l] and not body[t]:
                    push((steps + 1, changes), t, f.body, env, fenv, key, (l, t))
        elif isinstance(f, FQuant):
            names = [d.name for d in f.decls]
            carriers = [ev.dom.carrier(d.sort) for d in f.decls]
            for combo in itertools.product(*carriers):
                inner = dict(env)
                inner.update(zip(names, combo))
                if not truth(f.body, inner, fenv)[s]:
                    push(cost, s, f.body, inner, fenv, key, None)
        elif isinstance(f, FFix):
            if f.kind == "mu":
                box = inevitability_box(f)
                if box is None:
                    raise UnsupportedTemplate(
                        f"least fixpoint {f.var} is not of the form mu X . [A]X || psi"
                    )
                stem = [(texts[l], t) for l, t in path_to(key)]
                return _lasso(ev, f, box, s, env, fenv, stem)
            fs = ev.solve(f, env, fenv)
            inner = dict(env)
            inner.update(zip(fs.names, (eval_data(v, env) for _, v in f.params)))
            inner_fenv = dict(fenv)
            inner_fenv[f.var] = fs
            push(cost, s, f.body, inner, inner_fenv, key, None)
        elif isinstance(f, FVar):
            fs = fenv[f.name]
            args = tuple(eval_data(a, env) for a in f.args)
            delta = sum(1 for n, v in zip(fs.names, args) if env.get(n) != v)
            inner = dict(fs.env)
            inner.update(zip(fs.names, args))
            inner_fenv = dict(fs.fenv)
            inner_fenv[f.name] = fs
            push((steps, changes + delta), s, fs.node.body, inner, inner_fenv, key, None)
    raise UnsupportedTemplate("no refutation found")


def _lasso(ev, f: FFix, box: FBox, s: int, env: dict, fenv: dict, stem: list) -> Witness:
    lts = ev.lts
    n = lts.n_states
    fs = ev.solve(f, env, fenv)
    bad = ~fs.table[()]
    mask = ev.mask(box.reg.af, env)
    sel = mask[lts.lab] & bad[lts.src] & bad[lts.dst]
    e_idx = np.flatnonzero(sel)
    e_src, e_dst = lts.src[e_idx], lts.dst[e_idx]
    graph = csr_matrix((np.ones(len(e_idx), dtype=np.int8), (e_src, e_dst)), shape=(n, n))
    order, pred = breadth_first_order(graph, s, directed=True, return_predecessors=True)
    _, comp = connected_components(graph, directed=True, connection="strong")
    sizes = np.bincount(comp, minlength=comp.max() + 1 if len(comp) else 0)
    self_loop = np.zeros(n, dtype=bool)
    self_loop[e_src[e_src == e_dst]] = True
    cyclic = (sizes[comp] > 1) | self_loop
    hits = order[cyclic[order]]
    if len(hits) == 0:
        raise UnsupportedTemplate("no cycle in the failing region")
    c = int(hits[0])

    def label_between(u: int, v: int) -> str:
        i = e_idx[(e_src == u) & (e_dst == v)][0]
        return lts.label_text[int(lts.lab[i])]

    def walk(pred_arr, start: int, end: int) -> list[int]:
        seq = [end]
        while seq[-1] != start:
            seq.append(int(pred_arr[seq[-1]]))
        seq.reverse()
        return seq

    to_c = walk(pred, s, c)
    stem = stem + [(label_between(u, v), v) for u, v in zip(to_c, to_c[1:])]
    if self_loop[c]:
        return Witness("lasso", stem, [(label_between(c, c), c)])
    same = comp[e_src] == comp[c]
    sub = csr_matrix(
        (np.ones(int(same.sum()), dtype=np.int8), (e_src[same], e_dst[same])), shape=(n, n)
    )
    order_c, pred_c = breadth_first_order(sub, c, directed=True, return_predecessors=True)
    into_c = set(e_src[same & (e_dst == c)].tolist())
    last = next(int(u) for u in order_c if int(u) in into_c)
    cyc = walk(pred_c, c, last) + [c]
    loop = [(label_between(u, v), v) for u, v in zip(cyc, cyc[1:])]
    return Witness("lasso", stem, loop)
