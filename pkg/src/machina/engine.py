"""Small-step execution of the cyclic semantics.

One cycle: ``inputs`` -> ``free_input_signals`` -> per machinepart
(``freecmd``/``no_freecmd`` -> prestate -> command step -> one step per state
machine -> poststate -> ``post_done``).  Every micro-step carries one
:class:`ActionLabel`.  Guards and behaviors are compiled to Python closures
once per spec, so :meth:`Engine.step` is cheap enough for exhaustive
exploration.
"""

from __future__ import annotations

import itertools
import re
from enum import IntEnum
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from machina.model import (
    And,
    CmdChk,
    Const,
    Eq,
    Expr,
    InpSignal,
    InState,
    ModelSpec,
    Not,
    Or,
    Ref,
    TimerElapsed,
    effective_guard,
    timers_in,
)


class Phase(IntEnum):
    SET_INPUTS = 0
    SET_FREE_INPUT_SIGNALS = 1
    SET_FREE_COMMANDS = 2
    PRESTATE = 3
    COMMAND_STEP = 4
    COMMAND_BEHAVIORS = 5
    MACHINE_STEP = 6
    TRANSITION_BEHAVIORS = 7
    POSTSTATE = 8


NO_COMMAND = -1


class Configuration(NamedTuple):
    """One semantic state.

    ``active[i]`` is the root-to-leaf chain of node ids of machine ``i`` (empty
    while a substatemachine is not running); ``values`` follows the global
    property order of :attr:`ModelIndex.props`; ``cmds[mp]`` is
    ``(command index or -1, accepted, ready)``.  ``cursor`` is a machinepart
    position, or a machine position during machine phases.
    """

    phase: int
    cursor: int
    active: tuple
    values: tuple
    cmds: tuple
    pending: tuple


def _fmt_arg(a) -> str:
    if isinstance(a, bool):
        return "tt" if a else "ff"
    if isinstance(a, (tuple, list)):
        return "[" + ",".join(_fmt_arg(x) for x in a) + "]"
    return str(a)


class ActionLabel(NamedTuple):
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({','.join(_fmt_arg(a) for a in self.args)})"

    @property
    def is_observation(self) -> bool:
        return self.name == "states" or self.name.startswith("state_M")


TAU_NO_TRANS = ActionLabel("tau_no_trans")


class InternalInvariantError(RuntimeError):
    pass


class TraceError(Exception):
    """A scripted choice is not enabled (code ``CHOICE_NOT_ENABLED``)."""

    code = "CHOICE_NOT_ENABLED"

    def __init__(self, step: int, choice: str, enabled: Sequence[str]):
        self.step = step
        self.choice = choice
        self.enabled = list(enabled)
        super().__init__(
            f"{self.code}: step {step}: '{choice}' is not enabled (enabled: {', '.join(self.enabled) or 'nothing'})"
        )


# -- compilation ------------------------------------------------------------


def _expr_src(e: Expr, spec: ModelSpec, mp: int) -> str:
    idx = spec.index
    if isinstance(e, Const):
        return "True" if e.value else "False"
    if isinstance(e, (Ref, InpSignal)):
        return f"v[{idx.prop_pos[(mp, e.name)]}]"
    if isinstance(e, Not):
        return f"(not {_expr_src(e.operand, spec, mp)})"
    if isinstance(e, And):
        return f"({_expr_src(e.left, spec, mp)} and {_expr_src(e.right, spec, mp)})"
    if isinstance(e, Or):
        return f"({_expr_src(e.left, spec, mp)} or {_expr_src(e.right, spec, mp)})"
    if isinstance(e, Eq):
        op = "!=" if e.negated else "=="
        return f"({_expr_src(e.left, spec, mp)} {op} {_expr_src(e.right, spec, mp)})"
    if isinstance(e, InState):
        return f"({e.node} in a[{idx.machine_of[e.node]}])"
    if isinstance(e, CmdChk):
        cmd = spec.machineparts[mp].command(e.name)
        return f"(cm[{mp}][0] == {cmd.index} and cm[{mp}][1])"
    if isinstance(e, TimerElapsed):
        return f"t.get({e.name!r}, False)"
    raise TypeError(f"not an expression: {e!r}")


def compile_expr(e: Expr, spec: ModelSpec, mp: int = 0):
    """Return ``f(values, active, cmds, timers=None) -> bool``."""
    src = f"lambda v, a, cm, t=None: bool({_expr_src(e, spec, mp)})"
    return eval(src, {})  # noqa: S307 - source is generated from a validated AST


def compile_block(stmts, spec: ModelSpec, mp: int):
    """Return ``f(values, active, cmds) -> values`` applying assignments in order."""
    idx = spec.index
    lines = ["def f(v, a, cm):", "    v = list(v)"]
    for s in stmts:
        lines.append(f"    v[{idx.prop_pos[(mp, s.target)]}] = bool({_expr_src(s.value, spec, mp)})")
    lines.append("    return tuple(v)")
    ns: dict = {}
    exec("\n".join(lines), ns)  # noqa: S102
    return ns["f"]


class _Trans(NamedTuple):
    id: int
    depth_key: int
    dest: tuple
    lca: int
    guard: object
    timers: tuple
    pending: tuple


# -- engine -----------------------------------------------------------------


class Engine:
    """Successor relation for one validated :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        idx = self.idx = spec.index
        self.n_machines = len(idx.machines)
        self.machine_mp = idx.mp_of_machine
        self.input_pos = [i for i, (_, p) in enumerate(idx.props) if p.stereotype == "Input"]
        self.signal_pos = [
            i for i, (_, p) in enumerate(idx.props) if p.stereotype in ("InputSignal", "InOutSignal")
        ]
        self.input_labels = [
            (ActionLabel("inputs", vals), vals)
            for vals in itertools.product((True, False), repeat=len(self.input_pos))
        ]
        self.signal_labels = [
            (ActionLabel("free_input_signals", vals), vals)
            for vals in itertools.product((True, False), repeat=len(self.signal_pos))
        ]
        self.behaviors = {}
        for bid, block in idx.behavior.items():
            self.behaviors[bid] = compile_block(block.statements, spec, idx.behavior_mp[bid])
        self.commands = []
        for mpi, mp in enumerate(spec.machineparts):
            entries = {}
            for c in mp.commands:
                entries[c.index] = (
                    compile_expr(c.guard_condition, spec, mpi),
                    compile_expr(c.ready_condition, spec, mpi),
                    c.accept_action.id if c.accept_action is not None else None,
                    c.reject_action.id if c.reject_action is not None else None,
                )
            self.commands.append(entries)
        self.mp_commands = [[c.index for c in mp.commands] for mp in spec.machineparts]
        self.prestate = [(mp.prestate.id,) if mp.prestate is not None else () for mp in spec.machineparts]
        self.poststate = [(mp.poststate.id,) if mp.poststate is not None else () for mp in spec.machineparts]
        self.first_machine = []
        for mpi in range(len(spec.machineparts)):
            positions = [i for i, m in enumerate(self.machine_mp) if m == mpi]
            self.first_machine.append(positions[0] if positions else None)
        self._compile_machines()
        self.observed = [
            (i, f"state_M{spec.machineparts[mpi].index}'{p.name}")
            for i, (mpi, p) in enumerate(idx.props)
            if p.is_observed
        ]
        self.machine_index = [m.index for m in idx.machines]
        self._obs_cache: dict = {}

    def _compile_machines(self):
        spec, idx = self.spec, self.idx
        # per node: outgoing transitions in priority order (non-self-loop first, then id)
        self.out: dict[int, list[_Trans]] = {}
        self.continuous: dict[int, int] = {}
        self.entry: dict[int, int] = {}
        for node in idx.node.values():
            if node.continuous is not None:
                self.continuous[node.id] = node.continuous.id
            if node.entry is not None:
                self.entry[node.id] = node.entry.id
        for pos, m in enumerate(idx.machines):
            mpi = self.machine_mp[pos]
            for t in m.transitions:
                g = effective_guard(t, spec)
                pending = ((t.behavior.id,) if t.behavior is not None else ()) + tuple(
                    self.entry[n] for n in t.dest if n in self.entry
                )
                ct = _Trans(
                    t.id, 1 if t.is_self_loop else 0, tuple(t.dest), idx.parent[t.dest[0]],
                    compile_expr(g, spec, mpi), tuple(timers_in(g)), pending,
                )
                self.out.setdefault(t.source_node, []).append(ct)
        for lst in self.out.values():
            lst.sort(key=lambda ct: (ct.depth_key, ct.id))
        self.initial_chain = []
        for m in idx.machines:
            init = next(c for c in m.root.children if c.kind == "initial")
            self.initial_chain.append((m.root.id, init.id))
        referenced = set(idx.ref_target.values())
        self.initially_active = [pos not in referenced for pos in range(self.n_machines)]

    # -- configurations ----------------------------------------------------

    def initial(self) -> Configuration:
        active = tuple(
            self.initial_chain[i] if self.initially_active[i] else () for i in range(self.n_machines)
        )
        values = tuple(p.initial for _, p in self.idx.props)
        cmds = tuple((NO_COMMAND, False, False) for _ in self.spec.machineparts)
        return Configuration(Phase.SET_INPUTS, 0, active, values, cmds, ())

    def valuation(self, c: Configuration) -> dict[str, bool]:
        return {p.name: c.values[i] for i, (_, p) in enumerate(self.idx.props)}

    def check_configuration(self, c: Configuration) -> None:
        """Raise :class:`InternalInvariantError` if *c* is ill-formed."""
        idx = self.idx
        for pos, chain in enumerate(c.active):
            for a, b in zip(chain, chain[1:]):
                if idx.parent.get(b) != a:
                    raise InternalInvariantError(f"machine {pos}: {b} is not a child of {a}")
            if chain and chain[0] != idx.machines[pos].root.id:
                raise InternalInvariantError(f"machine {pos}: chain does not start at the root")
        for mpi, (cmd, accepted, _ready) in enumerate(c.cmds):
            if accepted and cmd == NO_COMMAND:
                raise InternalInvariantError(f"machinepart {mpi}: accepted flag without a command")
        if c.pending and c.phase not in (
            Phase.PRESTATE, Phase.COMMAND_BEHAVIORS, Phase.TRANSITION_BEHAVIORS, Phase.POSTSTATE,
        ):
            raise InternalInvariantError(f"pending behaviors in phase {Phase(c.phase).name}")

    # -- successor relation ------------------------------------------------

    def successors(self, c: Configuration) -> list[tuple[ActionLabel, Configuration]]:
        """All labelled successors, observation self-loops last."""
        return self.step(c) + [(lab, c) for lab in self.observations(c)]

    def observations(self, c: Configuration) -> list[ActionLabel]:
        key = (c.active, tuple(c.values[i] for i, _ in self.observed))
        labels = self._obs_cache.get(key)
        if labels is None:
            labels = [ActionLabel(name, (c.values[i],)) for i, name in self.observed]
            labels += [ActionLabel("states", (self.machine_index[i], chain)) for i, chain in enumerate(c.active)]
            self._obs_cache[key] = labels
        return labels

    def step(self, c: Configuration) -> list[tuple[ActionLabel, Configuration]]:
        """Labelled micro-step successors, without observation loops."""
        phase = c.phase
        if phase == Phase.SET_INPUTS:
            return [(lab, c._replace(phase=Phase.SET_FREE_INPUT_SIGNALS, values=self._assign(c.values, self.input_pos, vals)))
                    for lab, vals in self.input_labels]
        if phase == Phase.SET_FREE_INPUT_SIGNALS:
            return [(lab, self._start_machinepart(c._replace(values=self._assign(c.values, self.signal_pos, vals)), 0))
                    for lab, vals in self.signal_labels]
        if phase == Phase.SET_FREE_COMMANDS:
            return self._free_commands(c)
        if phase in (Phase.PRESTATE, Phase.COMMAND_BEHAVIORS, Phase.TRANSITION_BEHAVIORS):
            return [self._pop_behavior(c, "beh")]
        if phase == Phase.COMMAND_STEP:
            return [self._command_step(c)]
        if phase == Phase.MACHINE_STEP:
            return self._machine_step(c)
        if phase == Phase.POSTSTATE:
            if c.pending:
                return [self._pop_behavior(c, "post")]
            return [self._post_done(c)]
        raise InternalInvariantError(f"unknown phase {phase}")

    @staticmethod
    def _assign(values, positions, vals):
        v = list(values)
        for p, x in zip(positions, vals):
            v[p] = x
        return tuple(v)

    def _start_machinepart(self, c: Configuration, mp: int) -> Configuration:
        if mp >= len(self.spec.machineparts):
            return c._replace(phase=Phase.SET_INPUTS, cursor=0, pending=())
        return c._replace(phase=Phase.SET_FREE_COMMANDS, cursor=mp, pending=())

    def _after_free_commands(self, c: Configuration, mp: int) -> Configuration:
        pre = self.prestate[mp]
        if pre:
            return c._replace(phase=Phase.PRESTATE, cursor=mp, pending=pre)
        return c._replace(phase=Phase.COMMAND_STEP, cursor=mp, pending=())

    def _free_commands(self, c: Configuration):
        mp = c.cursor
        out = []
        if c.cmds[mp][0] == NO_COMMAND:
            for ci in self.mp_commands[mp]:
                cmds = c.cmds[:mp] + ((ci, False, False),) + c.cmds[mp + 1:]
                out.append((ActionLabel("freecmd", (ci,)), self._after_free_commands(c._replace(cmds=cmds), mp)))
        out.append((ActionLabel("no_freecmd"), self._after_free_commands(c, mp)))
        return out

    def _command_step(self, c: Configuration):
        mp = c.cursor
        cmd, accepted, _ready = c.cmds[mp]
        if cmd == NO_COMMAND:
            return ActionLabel("command_none"), self._enter_machines(c, mp, ())
        guard, ready, accept_b, reject_b = self.commands[mp][cmd]
        if accepted:
            r = ready(c.values, c.active, c.cmds)
            cmds = c.cmds[:mp] + ((cmd, True, r),) + c.cmds[mp + 1:]
            return ActionLabel("chk_ready"), self._enter_machines(c._replace(cmds=cmds), mp, ())
        ok = guard(c.values, c.active, c.cmds)
        cmds = c.cmds[:mp] + ((cmd, ok, False),) + c.cmds[mp + 1:]
        r = ready(c.values, c.active, cmds)
        cmds = c.cmds[:mp] + ((cmd, ok, r),) + c.cmds[mp + 1:]
        b = accept_b if ok else reject_b
        pending = (b,) if b is not None else ()
        nxt = c._replace(cmds=cmds)
        if pending:
            nxt = nxt._replace(phase=Phase.COMMAND_BEHAVIORS, pending=pending)
        else:
            nxt = self._enter_machines(nxt, mp, ())
        return ActionLabel("command", (cmd, ok)), nxt

    def _enter_machines(self, c: Configuration, mp: int, pending) -> Configuration:
        first = self.first_machine[mp]
        if first is None:
            return c._replace(phase=Phase.POSTSTATE, cursor=mp, pending=self.poststate[mp])
        return c._replace(phase=Phase.MACHINE_STEP, cursor=first, pending=())

    def _after_machine(self, c: Configuration, pos: int) -> Configuration:
        mp = self.machine_mp[pos]
        if pos + 1 < self.n_machines and self.machine_mp[pos + 1] == mp:
            return c._replace(phase=Phase.MACHINE_STEP, cursor=pos + 1, pending=())
        return c._replace(phase=Phase.POSTSTATE, cursor=mp, pending=self.poststate[mp])

    def _pop_behavior(self, c: Configuration, kind: str):
        b = c.pending[0]
        values = self.behaviors[b](c.values, c.active, c.cmds)
        nxt = c._replace(values=values, pending=c.pending[1:])
        if not nxt.pending:
            if c.phase == Phase.PRESTATE:
                nxt = nxt._replace(phase=Phase.COMMAND_STEP)
            elif c.phase == Phase.COMMAND_BEHAVIORS:
                nxt = self._enter_machines(nxt, c.cursor, ())
            elif c.phase == Phase.TRANSITION_BEHAVIORS:
                nxt = self._after_machine(nxt, c.cursor)
        return ActionLabel(kind, (b,)), nxt

    def _post_done(self, c: Configuration):
        mp = c.cursor
        cmd, _accepted, ready = c.cmds[mp]
        cmds = c.cmds
        if cmd != NO_COMMAND and ready:
            cmds = c.cmds[:mp] + ((NO_COMMAND, False, False),) + c.cmds[mp + 1:]
        return ActionLabel("post_done"), self._start_machinepart(c._replace(cmds=cmds), mp + 1)

    def candidates(self, chain) -> list[_Trans]:
        """Transitions whose source is active, in priority order."""
        out = []
        for node in chain:
            out.extend(self.out.get(node, ()))
        return out

    def _machine_step(self, c: Configuration):
        pos = c.cursor
        chain = c.active[pos]
        if not chain:
            return [(TAU_NO_TRANS, self._after_machine(c, pos))]
        values = c.values
        # continuous behavior, innermost active state first
        for node in reversed(chain):
            b = self.continuous.get(node)
            if b is not None:
                values = self.behaviors[b](values, c.active, c.cmds)
        if values is not c.values:
            c = c._replace(values=values)
        cands = self.candidates(chain)
        timer_names = sorted({n for ct in cands for n in ct.timers})
        if not timer_names:
            return [self._fire(c, pos, self._select(c, cands, None))]
        seen = []
        out = []
        for bits in itertools.product((True, False), repeat=len(timer_names)):
            chosen = self._select(c, cands, dict(zip(timer_names, bits)))
            key = chosen.id if chosen is not None else None
            if key not in seen:
                seen.append(key)
                out.append(self._fire(c, pos, chosen))
        return out

    @staticmethod
    def _select(c: Configuration, cands, timers) -> Optional[_Trans]:
        for ct in cands:
            if ct.guard(c.values, c.active, c.cmds, timers):
                return ct
        return None

    def _fire(self, c: Configuration, pos: int, ct: Optional[_Trans]):
        if ct is None:
            return TAU_NO_TRANS, self._after_machine(c, pos)
        chain = c.active[pos]
        cut = chain.index(ct.lca) + 1
        exited = chain[cut:]
        active = list(c.active)
        active[pos] = chain[:cut] + ct.dest
        ref_target = self.idx.ref_target
        for n in exited:
            if n in ref_target:
                self._deactivate(active, ref_target[n])
        for n in ct.dest:
            if n in ref_target:
                t = ref_target[n]
                self._deactivate(active, t)
                active[t] = self.initial_chain[t]
        nxt = c._replace(active=tuple(active))
        if ct.pending:
            nxt = nxt._replace(phase=Phase.TRANSITION_BEHAVIORS, pending=ct.pending)
        else:
            nxt = self._after_machine(nxt, pos)
        return ActionLabel("trans", (ct.id,)), nxt

    def _deactivate(self, active: list, pos: int) -> None:
        ref_target = self.idx.ref_target
        for n in active[pos]:
            if n in ref_target and ref_target[n] != pos:
                self._deactivate(active, ref_target[n])
        active[pos] = ()

    # -- presentation ------------------------------------------------------

    def describe(self, c: Configuration) -> str:
        """One-line human summary of a configuration."""
        idx = self.idx
        parts = []
        for pos, chain in enumerate(c.active):
            name = idx.machines[pos].name
            parts.append(f"{name}={idx.qualified[chain[-1]] if chain else '-'}")
        cmds = []
        for mpi, (cmd, acc, ready) in enumerate(c.cmds):
            if cmd == NO_COMMAND:
                cmds.append("cmd=-")
            else:
                cname = idx.command_by_index[cmd][1].name
                cmds.append(f"cmd={cname}{'+' if acc else ''}{'!' if ready else ''}")
        return f"[{Phase(c.phase).name}] " + " ".join(parts + cmds)


# -- traces -----------------------------------------------------------------

_CHOICE_RE = re.compile(r"^\s*([A-Za-z_][\w']*)\s*(?:\((.*)\))?\s*(.*)$")


def _normalize(text: str, spec: ModelSpec) -> tuple[str, tuple[str, ...]]:
    m = _CHOICE_RE.match(text)
    if m is None:
        return text.strip(), ()
    name, paren, rest = m.groups()
    raw = paren.split(",") if paren is not None else rest.split()
    args = []
    for a in raw:
        a = a.strip()
        if not a:
            continue
        low = a.lower()
        if low in ("true", "tt"):
            a = "tt"
        elif low in ("false", "ff"):
            a = "ff"
        elif name in ("freecmd", "command"):
            for cmd in spec.commands():
                if cmd.name == a:
                    a = str(cmd.index)
        args.append(a)
    return name, tuple(args)


def _label_key(label: ActionLabel) -> tuple[str, tuple[str, ...]]:
    return label.name, tuple(_fmt_arg(a) for a in label.args)


def parse_script(text: str) -> list[str]:
    """Non-empty, non-comment lines of a trace script."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def run_trace(
    spec: ModelSpec,
    script: Iterable[Union[str, ActionLabel]],
    engine: Optional[Engine] = None,
    start: Optional[Configuration] = None,
) -> list[tuple[ActionLabel, Configuration]]:
    """Replay resolved choices from the initial configuration.

    Deterministic micro-steps are taken automatically; each entry of *script*
    resolves one choice point (a phase with more than one successor).  After
    the last entry, execution continues up to the next choice point.
    """
    eng = engine or Engine(spec)
    c = start if start is not None else eng.initial()
    choices = list(script)
    trace: list[tuple[ActionLabel, Configuration]] = []
    if not choices:
        return trace
    i = 0
    idle = 0
    while True:
        succ = eng.step(c)
        if i >= len(choices):
            if len(succ) > 1 or c.phase == Phase.SET_INPUTS:
                break
            trace.append(succ[0])
            c = succ[0][1]
            continue
        want = choices[i]
        key = _label_key(want) if isinstance(want, ActionLabel) else _normalize(want, spec)
        match = [(lab, nxt) for lab, nxt in succ if _label_key(lab) == key]
        if match:
            i += 1
            idle = 0
        elif len(succ) == 1 and idle < _MAX_IDLE_STEPS:
            match = succ
            idle += 1
        else:
            raise TraceError(i, str(want), [str(lab) for lab, _ in succ])
        trace.append(match[0])
        c = match[0][1]
    return trace


_MAX_IDLE_STEPS = 100_000


def replay_labels(
    spec: ModelSpec,
    labels: Iterable[ActionLabel],
    engine: Optional[Engine] = None,
    start: Optional[Configuration] = None,
) -> list[tuple[ActionLabel, Configuration]]:
    """Follow *labels* edge by edge (observation loops included)."""
    eng = engine or Engine(spec)
    c = start if start is not None else eng.initial()
    trace = []
    for i, want in enumerate(labels):
        key = _label_key(want)
        succ = eng.successors(c)
        match = [nxt for lab, nxt in succ if _label_key(lab) == key]
        if not match:
            raise TraceError(i, str(want), [str(lab) for lab, _ in succ])
        c = match[0]
        trace.append((want, c))
    return trace
