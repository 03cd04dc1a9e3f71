"""Explicit state-space construction and Aldebaran (``.aut``) I/O."""

from __future__ import annotations

import json
import re
import time
from array import array
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Union

import numpy as np

from machina.engine import ActionLabel, Configuration, Engine
from machina.model import ModelSpec


class LimitExceeded(Exception):
    code = "LIMIT_EXCEEDED"

    def __init__(self, message: str, stats: dict):
        super().__init__(f"{self.code}: {message}")
        self.stats = stats


class AutParseError(ValueError):
    code = "PARSE_ERROR"

    def __init__(self, line: int, message: str):
        super().__init__(f"{self.code}: line {line}: {message}")
        self.line = line


@dataclass
class Lts:
    """Finite labelled graph; state 0 is initial.

    Edges are stored column-wise and sorted by source state; within one
    source the order is the successor order of the engine (micro-steps
    first, then observation loops).
    """

    n_states: int
    labels: list
    src: np.ndarray
    lab: np.ndarray
    dst: np.ndarray
    configs: Optional[list] = None
    depth: int = 0
    elapsed_ms: float = 0.0
    _label_text: Optional[list] = field(default=None, repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def label_text(self) -> list[str]:
        if self._label_text is None:
            self._label_text = [str(x) for x in self.labels]
        return self._label_text

    def stats(self) -> dict:
        return {
            "states": self.n_states,
            "edges": self.n_edges,
            "depth": self.depth,
            "elapsed_ms": round(self.elapsed_ms, 1),
        }

    def out_edges(self, s: int) -> list[tuple[int, int]]:
        """``(label id, target)`` pairs leaving *s*, in stored order."""
        lo, hi = self._offsets[s], self._offsets[s + 1]
        return list(zip(self.lab[lo:hi].tolist(), self.dst[lo:hi].tolist()))

    @property
    def _offsets(self) -> np.ndarray:
        off = getattr(self, "_off", None)
        if off is None:
            counts = np.bincount(self.src, minlength=self.n_states)
            off = np.zeros(self.n_states + 1, dtype=np.int64)
            np.cumsum(counts, out=off[1:])
            self._off = off
        return off

    def same_structure(self, other: "Lts") -> bool:
        if self.n_states != other.n_states or self.n_edges != other.n_edges:
            return False
        mine = np.array(self.label_text, dtype=object)[self.lab]
        theirs = np.array(other.label_text, dtype=object)[other.lab]
        return bool(
            np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(mine, theirs)
        )


def from_edges(n_states: int, edges: Iterable[tuple[int, str, int]]) -> Lts:
    """Build an :class:`Lts` from ``(src, label text, dst)`` triples."""
    ids: dict[str, int] = {}
    src, lab, dst = [], [], []
    for s, text, t in edges:
        if text not in ids:
            ids[text] = len(ids)
        src.append(s)
        lab.append(ids[text])
        dst.append(t)
    order = np.argsort(np.asarray(src, dtype=np.int64), kind="stable")
    labels = [parse_label(t) for t in ids]
    return Lts(
        n_states,
        labels,
        np.asarray(src, dtype=np.int32)[order],
        np.asarray(lab, dtype=np.int32)[order],
        np.asarray(dst, dtype=np.int32)[order],
    )


def build_lts(
    spec: ModelSpec,
    max_states: Optional[int] = None,
    max_edges: Optional[int] = None,
    timeout_s: Optional[float] = None,
    engine: Optional[Engine] = None,
    keep_configs: bool = True,
) -> Lts:
    """Breadth-first exploration from the initial configuration.

    States are numbered in discovery order, successors are visited in the
    engine's fixed order, so numbering is canonical.  Observation self-loops
    are attached to every state.
    """
    eng = engine or Engine(spec)
    t0 = time.perf_counter()
    label_ids: dict[ActionLabel, int] = {}
    labels: list[ActionLabel] = []

    def lid(label: ActionLabel) -> int:
        i = label_ids.get(label)
        if i is None:
            i = label_ids[label] = len(labels)
            labels.append(label)
        return i

    init = eng.initial()
    index: dict[Configuration, int] = {init: 0}
    queue: list[Configuration] = [init]
    depth = array("i", [0])
    obs_sets: dict[tuple, int] = {}
    obs_table: list[tuple] = []
    obs_of = array("i")
    e_src, e_lab, e_dst = array("i"), array("i"), array("i")
    step = eng.step
    observations = eng.observations
    n_obs = None
    head = 0

    def stats():
        return {
            "states": len(queue),
            "edges": len(e_src) + len(queue) * (n_obs or 0),
            "depth": max(depth) if depth else 0,
            "elapsed_ms": round((time.perf_counter() - t0) * 1000, 1),
        }

    while head < len(queue):
        c = queue[head]
        obs = tuple(lid(x) for x in observations(c))
        if n_obs is None:
            n_obs = len(obs)
        k = obs_sets.get(obs)
        if k is None:
            k = obs_sets[obs] = len(obs_table)
            obs_table.append(obs)
        obs_of.append(k)
        d = depth[head] + 1
        for label, nxt in step(c):
            j = index.get(nxt)
            if j is None:
                j = index[nxt] = len(queue)
                queue.append(nxt)
                depth.append(d)
                if max_states is not None and len(queue) > max_states:
                    raise LimitExceeded(f"more than {max_states} states", stats())
            e_src.append(head)
            e_lab.append(lid(label))
            e_dst.append(j)
        if max_edges is not None and len(e_src) + len(queue) * n_obs > max_edges:
            raise LimitExceeded(f"more than {max_edges} edges", stats())
        if timeout_s is not None and head % 4096 == 0 and time.perf_counter() - t0 > timeout_s:
            raise LimitExceeded(f"exploration exceeded {timeout_s} s", stats())
        head += 1

    n = len(queue)
    table = np.asarray(obs_table, dtype=np.int32).reshape(len(obs_table), n_obs or 0)
    o_lab = table[np.frombuffer(obs_of, dtype=np.int32)].reshape(-1)
    o_src = np.repeat(np.arange(n, dtype=np.int32), n_obs or 0)
    s_src = np.frombuffer(e_src, dtype=np.int32)
    src = np.concatenate([s_src, o_src])
    order = np.argsort(src, kind="stable")
    lab = np.concatenate([np.frombuffer(e_lab, dtype=np.int32), o_lab])[order]
    dst = np.concatenate([np.frombuffer(e_dst, dtype=np.int32), o_src])[order]
    src = src[order]
    return Lts(
        n,
        labels,
        src,
        lab,
        dst,
        configs=queue if keep_configs else None,
        depth=int(max(depth)),
        elapsed_ms=(time.perf_counter() - t0) * 1000,
    )


# -- Aldebaran format -------------------------------------------------------


def export_aut(lts: Lts, sink: IO[str], tau_labels: Iterable[str] = ()) -> None:
    """Write *lts* in Aldebaran format; labels in *tau_labels* become ``tau``."""
    taus = set(tau_labels)
    quoted = ["tau" if t in taus else f'"{t}"' for t in lts.label_text]
    sink.write(f"des (0,{lts.n_edges},{lts.n_states})\n")
    src = lts.src.tolist()
    lab = lts.lab.tolist()
    dst = lts.dst.tolist()
    chunk = 1 << 16
    for lo in range(0, len(src), chunk):
        hi = lo + chunk
        sink.write(
            "".join(
                f"({s},{quoted[l]},{t})\n" for s, l, t in zip(src[lo:hi], lab[lo:hi], dst[lo:hi])
            )
        )


_HEADER_RE = re.compile(r"^\s*des\s*\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")
_EDGE_RE = re.compile(r'^\s*\(\s*(\d+)\s*,\s*(?:"(.*)"|([^,"]*?))\s*,\s*(\d+)\s*\)\s*$')


def import_aut(source: Union[IO[str], str]) -> Lts:
    """Parse Aldebaran text; inverse of :func:`export_aut`."""
    lines = source.splitlines() if isinstance(source, str) else source
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise AutParseError(1, "missing 'des' header") from None
    m = _HEADER_RE.match(header)
    if m is None:
        raise AutParseError(1, "malformed header, expected 'des (<initial>,<edges>,<states>)'")
    initial, n_edges, n_states = (int(g) for g in m.groups())
    if initial != 0:
        raise AutParseError(1, "initial state must be 0")
    ids: dict[str, int] = {}
    src, lab, dst = array("i"), array("i"), array("i")
    match = _EDGE_RE.match
    lineno = 1
    for line in it:
        lineno += 1
        if not line.strip():
            continue
        m = match(line)
        if m is None:
            raise AutParseError(lineno, "malformed edge")
        s, quoted, bare, t = m.groups()
        text = quoted if quoted is not None else bare
        i = ids.get(text)
        if i is None:
            i = ids[text] = len(ids)
        s, t = int(s), int(t)
        if s >= n_states or t >= n_states:
            raise AutParseError(lineno, f"state out of range (header declares {n_states})")
        src.append(s)
        lab.append(i)
        dst.append(t)
    if len(src) != n_edges:
        raise AutParseError(1, f"header declares {n_edges} edges, found {len(src)}")
    s_arr = np.frombuffer(src, dtype=np.int32) if len(src) else np.zeros(0, dtype=np.int32)
    l_arr = np.frombuffer(lab, dtype=np.int32) if len(lab) else np.zeros(0, dtype=np.int32)
    d_arr = np.frombuffer(dst, dtype=np.int32) if len(dst) else np.zeros(0, dtype=np.int32)
    texts = list(ids)
    return Lts(n_states, [parse_label(t) for t in texts], s_arr.copy(), l_arr.copy(), d_arr.copy(), _label_text=texts)


def write_stats(lts: Lts, sink: IO[str]) -> None:
    json.dump(lts.stats(), sink, sort_keys=True)
    sink.write("\n")


# -- label text -------------------------------------------------------------

_LABEL_TOKEN = re.compile(r"\s*(\[|\]|,|\(|\)|[^\s\[\](),]+)")


def parse_label(text: str) -> ActionLabel:
    """Inverse of ``str(ActionLabel)``: ``tt``/``ff`` become booleans,
    digits integers, ``[..]`` tuples.  Unparseable text becomes a bare name."""
    p = text.find("(")
    if p < 0 or not text.endswith(")"):
        return ActionLabel(text)
    name = text[:p]
    toks = _LABEL_TOKEN.findall(text[p + 1:-1])
    pos = 0

    def value():
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok == "[":
            items = []
            if toks[pos] == "]":
                pos += 1
                return ()
            while True:
                items.append(value())
                sep = toks[pos]
                pos += 1
                if sep == "]":
                    return tuple(items)
        if tok == "tt":
            return True
        if tok == "ff":
            return False
        if tok.isdigit():
            return int(tok)
        return tok

    try:
        args = []
        while pos < len(toks):
            args.append(value())
            if pos < len(toks):
                if toks[pos] != ",":
                    return ActionLabel(text)
                pos += 1
        return ActionLabel(name, tuple(args))
    except IndexError:
        return ActionLabel(text)
