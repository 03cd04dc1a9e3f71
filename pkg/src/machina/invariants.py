"""Whole-LTS checks of the cyclic execution semantics.

Each check scans every state or edge of an LTS built with
``keep_configs=True`` and returns a list of violation messages (empty when
the invariant holds).  Guards are re-evaluated with :func:`eval_expr`, not
with the engine's compiled closures, so the priority check is independent
of the code under test.
"""

from __future__ import annotations

import itertools

import numpy as np

from machina.engine import NO_COMMAND, Phase
from machina.lts import Lts
from machina.model import ModelSpec, effective_guard, eval_expr, timers_in

_MAX_REPORTED = 20


def _state_arrays(lts: Lts, spec: ModelSpec):
    if lts.configs is None:
        raise ValueError("the LTS was built without configurations")
    idx = spec.index
    n_mp = len(spec.machineparts)
    n = lts.n_states
    phase = np.empty(n, dtype=np.int8)
    cursor = np.empty(n, dtype=np.int16)
    values = np.empty((n, len(idx.props)), dtype=bool)
    cmd = np.empty((n, n_mp), dtype=np.int32)
    acc = np.empty((n, n_mp), dtype=bool)
    ready = np.empty((n, n_mp), dtype=bool)
    for s, c in enumerate(lts.configs):
        phase[s] = c.phase
        cursor[s] = c.cursor
        values[s] = c.values
        for m, (k, a, r) in enumerate(c.cmds):
            cmd[s, m], acc[s, m], ready[s, m] = k, a, r
    return phase, cursor, values, cmd, acc, ready


def _label_kinds(lts: Lts) -> np.ndarray:
    return np.array([l.name for l in lts.labels], dtype=object)


def _steps(lts: Lts) -> np.ndarray:
    """Edge selector for micro-steps (observation loops excluded)."""
    obs = np.array([l.is_observation for l in lts.labels], dtype=bool)
    return ~obs[lts.lab]


def _report(msgs: list, what: str, bad: np.ndarray, lts: Lts, edges: np.ndarray) -> None:
    for e in np.flatnonzero(bad)[:_MAX_REPORTED]:
        i = edges[e]
        msgs.append(f"{what}: edge {lts.src[i]} -{lts.label_text[lts.lab[i]]}-> {lts.dst[i]}")


def cycle_masks(lts: Lts, spec: ModelSpec) -> np.ndarray:
    """Bitmask of machines that have already stepped in the current cycle,
    derived from each configuration's control position."""
    idx = spec.index
    mp_of = np.array(idx.mp_of_machine, dtype=np.int64)
    n_m = len(mp_of)
    before_mp = [sum(1 << p for p in range(n_m) if mp_of[p] < m) for m in range(len(spec.machineparts) + 1)]
    upto_mp = [sum(1 << p for p in range(n_m) if mp_of[p] <= m) for m in range(len(spec.machineparts))]
    masks = np.zeros(lts.n_states, dtype=np.int64)
    for s, c in enumerate(lts.configs):
        ph = c.phase
        if ph in (Phase.SET_INPUTS, Phase.SET_FREE_INPUT_SIGNALS):
            masks[s] = 0
        elif ph == Phase.MACHINE_STEP:
            m = mp_of[c.cursor]
            masks[s] = before_mp[m] | sum(1 << p for p in range(c.cursor) if mp_of[p] == m)
        elif ph == Phase.TRANSITION_BEHAVIORS:
            m = mp_of[c.cursor]
            masks[s] = before_mp[m] | sum(1 << p for p in range(c.cursor + 1) if mp_of[p] == m)
        elif ph == Phase.POSTSTATE:
            masks[s] = upto_mp[c.cursor]
        else:
            masks[s] = before_mp[c.cursor]
    return masks


def one_step_per_machine(lts: Lts, spec: ModelSpec) -> list[str]:
    """Every cycle contains exactly one ``trans``/``tau_no_trans`` step per
    top-level or referenced machine, in machine order.

    Checked inductively over edges: the set of machines already stepped is
    empty at the start of a cycle, grows by exactly the stepping machine on
    each machine step, is unchanged by all other steps, and is complete when
    the cycle closes."""
    msgs: list[str] = []
    n_m = len(spec.index.machines)
    full = (1 << n_m) - 1
    masks = cycle_masks(lts, spec)
    phase = np.array([c.phase for c in lts.configs], dtype=np.int8)
    cursor = np.array([c.cursor for c in lts.configs], dtype=np.int64)
    sel = np.flatnonzero(_steps(lts))
    src, dst, lab = lts.src[sel], lts.dst[sel], lts.lab[sel]
    kinds = _label_kinds(lts)[lab]
    is_step = (kinds == "trans") | (kinds == "tau_no_trans")
    from_machine = phase[src] == Phase.MACHINE_STEP
    _report(msgs, "machine step outside MACHINE_STEP", is_step & ~from_machine, lts, sel)
    _report(msgs, "MACHINE_STEP state left without a step", ~is_step & from_machine, lts, sel)
    bit = np.where(is_step, np.left_shift(1, cursor[src]), 0)
    _report(msgs, "machine stepped twice", is_step & ((masks[src] & bit) != 0), lts, sel)
    closes = phase[dst] == Phase.SET_INPUTS
    expected = np.where(closes, 0, masks[src] | bit)
    _report(msgs, "cycle mask mismatch", masks[dst] != expected, lts, sel)
    _report(msgs, "cycle closed before every machine stepped", closes & (masks[src] != full), lts, sel)
    return msgs


def free_variable_phases(lts: Lts, spec: ModelSpec) -> list[str]:
    """Inputs change only on ``inputs``, free input signals only on
    ``free_input_signals``; commands appear only on ``freecmd``."""
    msgs: list[str] = []
    idx = spec.index
    _phase, _cursor, values, cmd, _acc, _ready = _state_arrays(lts, spec)
    ins = [i for i, (_, p) in enumerate(idx.props) if p.stereotype == "Input"]
    sigs = [i for i, (_, p) in enumerate(idx.props) if p.is_free and p.stereotype != "Input"]
    sel = np.flatnonzero(_steps(lts))
    src, dst = lts.src[sel], lts.dst[sel]
    kinds = _label_kinds(lts)[lts.lab[sel]]
    if ins:
        changed = (values[src][:, ins] != values[dst][:, ins]).any(axis=1)
        _report(msgs, "input changed outside inputs", changed & (kinds != "inputs"), lts, sel)
    if sigs:
        changed = (values[src][:, sigs] != values[dst][:, sigs]).any(axis=1)
        _report(msgs, "input signal changed outside free_input_signals",
                changed & (kinds != "free_input_signals"), lts, sel)
    appeared = ((cmd[src] == NO_COMMAND) & (cmd[dst] != NO_COMMAND)).any(axis=1)
    _report(msgs, "command appeared outside freecmd", appeared & (kinds != "freecmd"), lts, sel)
    return msgs


def command_lifecycle(lts: Lts, spec: ModelSpec) -> list[str]:
    """The accepted flag implies a command on the interface, and after
    ``post_done`` the interface is empty iff the command was ready (or
    there was none)."""
    msgs: list[str] = []
    _phase, cursor, _values, cmd, acc, ready = _state_arrays(lts, spec)
    bad_states = np.flatnonzero((acc & (cmd == NO_COMMAND)).any(axis=1))
    for s in bad_states[:_MAX_REPORTED]:
        msgs.append(f"accepted flag without a command in state {s}")
    sel = np.flatnonzero(_label_kinds(lts)[lts.lab] == "post_done")
    src, dst = lts.src[sel], lts.dst[sel]
    mp = cursor[src].astype(np.int64)
    empty_after = cmd[dst, mp] == NO_COMMAND
    expect = (cmd[src, mp] == NO_COMMAND) | ready[src, mp]
    _report(msgs, "post_done interface mismatch", empty_after != expect, lts, sel)
    return msgs


def priority_soundness(lts: Lts, spec: ModelSpec) -> list[str]:
    """Re-enumerate the enabled transitions at every machine step.

    For ``trans(k)`` some timer valuation must enable ``k`` while no
    transition with a strictly outer source is enabled, and, when ``k`` is a
    self-loop, no non-self-loop from the same source.  For ``tau_no_trans``
    on a running machine some timer valuation must enable nothing."""
    idx = spec.index
    if any(n.continuous is not None for n in idx.node.values()):
        raise ValueError("priority check does not model continuous behavior")
    msgs: list[str] = []
    guards = {t.id: effective_guard(t, spec) for t in spec.transitions()}
    timers = {k: timers_in(g) for k, g in guards.items()}
    by_source: dict[int, list] = {}
    for t in spec.transitions():
        by_source.setdefault(t.source_node, []).append(t)
    kinds = _label_kinds(lts)
    sel = np.flatnonzero((kinds[lts.lab] == "trans") | (kinds[lts.lab] == "tau_no_trans"))
    seen: set = set()
    for i in sel:
        c = lts.configs[lts.src[i]]
        label = lts.labels[lts.lab[i]]
        pos = c.cursor
        chain = c.active[pos]
        key = (label, pos, chain, c.values, c.cmds)
        if key in seen:
            continue
        seen.add(key)
        mp = idx.mp_of_machine[pos]
        cands = [t for n in chain for t in by_source.get(n, ())]
        names = sorted({x for t in cands for x in timers[t.id]})

        def enabled(t, tv):
            return eval_expr(guards[t.id], c, spec, mp, tv)

        valuations = [dict(zip(names, bits)) for bits in itertools.product((False, True), repeat=len(names))]
        if label.name == "tau_no_trans":
            if chain and not any(not any(enabled(t, tv) for t in cands) for tv in valuations):
                msgs.append(f"tau_no_trans although a transition is always enabled (state {lts.src[i]})")
            continue
        k = label.args[0]
        t = idx.transition[k]
        if t.source_node not in chain:
            msgs.append(f"trans({k}) fired from an inactive source (state {lts.src[i]})")
            continue
        d = idx.depth(t.source_node)
        outer = [u for u in cands if idx.depth(u.source_node) < d]
        same = [u for u in cands if u.source_node == t.source_node and not u.is_self_loop] if t.is_self_loop else []
        ok = any(
            enabled(t, tv) and not any(enabled(u, tv) for u in outer + same)
            for tv in valuations
        )
        if not ok:
            msgs.append(f"trans({k}) violates priority (state {lts.src[i]})")
        if len(msgs) >= _MAX_REPORTED:
            break
    return msgs


def check_all_invariants(lts: Lts, spec: ModelSpec) -> dict[str, list[str]]:
    return {
        "priority": priority_soundness(lts, spec),
        "one_step_per_machine": one_step_per_machine(lts, spec),
        "command_lifecycle": command_lifecycle(lts, spec),
        "free_variable_phase": free_variable_phases(lts, spec),
    }
