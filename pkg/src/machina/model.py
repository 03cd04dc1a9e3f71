"""Domain model for machineparts, state machines, expressions and behaviors.

A :class:`ModelSpec` is built by :mod:`machina.dsl` and treated as read-only
afterwards.  Lookup tables that the engine and emitter need are computed once
and cached on the model (see :attr:`ModelSpec.index`).
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Optional, Sequence, Union

# -- properties -------------------------------------------------------------

STEREOTYPES = ("Input", "Output", "InputSignal", "OutputSignal", "InOutSignal", "Var")

#: Stereotypes chosen by the environment each cycle.
FREE_STEREOTYPES = frozenset({"Input", "InputSignal", "InOutSignal"})
#: Stereotypes exposed through observation self-loops.
OBSERVED_STEREOTYPES = frozenset({"Output", "OutputSignal"})
#: Stereotypes the model itself may assign.
WRITABLE_STEREOTYPES = frozenset({"Output", "OutputSignal", "InOutSignal", "Var"})


@dataclass(frozen=True)
class Location:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


def _loc():
    return field(default=None, compare=False, repr=False)


@dataclass
class Property:
    name: str
    stereotype: str
    initial: bool = False
    loc: Optional[Location] = _loc()

    @property
    def is_free(self) -> bool:
        return self.stereotype in FREE_STEREOTYPES

    @property
    def is_observed(self) -> bool:
        return self.stereotype in OBSERVED_STEREOTYPES


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Ref:
    """Plain reference to a property of the enclosing machinepart."""

    name: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Eq:
    left: "Expr"
    right: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class InState:
    """``State(path)``: the resolved node is part of its machine's active chain."""

    path: str
    node: int
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class InpSignal:
    name: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class CmdChk:
    """The named command is on the interface and has been accepted."""

    name: str
    loc: Optional[Location] = _loc()


@dataclass(frozen=True)
class TimerElapsed:
    name: str
    loc: Optional[Location] = _loc()


Expr = Union[Const, Ref, Not, And, Or, Eq, InState, InpSignal, CmdChk, TimerElapsed]

TRUE = Const(True)
FALSE = Const(False)


def conjunction(parts: Sequence[Expr]) -> Expr:
    if not parts:
        return TRUE
    result = parts[0]
    for p in parts[1:]:
        result = And(result, p)
    return result


def walk_expr(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Not):
        yield from walk_expr(e.operand)
    elif isinstance(e, (And, Or, Eq)):
        yield from walk_expr(e.left)
        yield from walk_expr(e.right)


def timers_in(e: Expr) -> list[str]:
    names = []
    for sub in walk_expr(e):
        if isinstance(sub, TimerElapsed) and sub.name not in names:
            names.append(sub.name)
    return names


# -- behaviors --------------------------------------------------------------


@dataclass
class Assign:
    target: str
    value: Expr
    loc: Optional[Location] = _loc()


@dataclass
class BehaviorBlock:
    id: int
    statements: list[Assign] = field(default_factory=list)


# -- state machines ---------------------------------------------------------

NODE_KINDS = ("simple", "composite", "initial", "final", "choice", "substatemachine-ref")
PSEUDO_KINDS = frozenset({"initial", "final", "choice"})


@dataclass
class StateNode:
    id: int
    name: str
    kind: str
    entry: Optional[BehaviorBlock] = None
    continuous: Optional[BehaviorBlock] = None
    children: list["StateNode"] = field(default_factory=list)
    #: Target machine name for ``substatemachine-ref`` nodes.
    ref: Optional[str] = None
    loc: Optional[Location] = _loc()

    def walk(self) -> Iterator["StateNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def child(self, name: str) -> Optional["StateNode"]:
        for c in self.children:
            if c.name == name:
                return c
        return None


@dataclass
class Transition:
    id: int
    #: Root-to-source node ids.
    source: list[int]
    #: Nodes entered, outermost first, starting below the exited ancestor.
    dest: list[int]
    guard: Optional[Expr]
    behavior: Optional[BehaviorBlock]
    is_self_loop: bool
    #: Node whose body declared the transition (endpoints print relative to it).
    scope: int
    loc: Optional[Location] = _loc()

    @property
    def source_node(self) -> int:
        return self.source[-1]

    @property
    def target_node(self) -> int:
        # the last dest entry may be an implicit initial pseudo-state
        return self.dest[-1]


@dataclass
class StateMachine:
    name: str
    index: int
    root: StateNode
    transitions: list[Transition] = field(default_factory=list)
    loc: Optional[Location] = _loc()


@dataclass
class Command:
    name: str
    index: int
    guard_condition: Expr = TRUE
    accept_action: Optional[BehaviorBlock] = None
    reject_action: Optional[BehaviorBlock] = None
    ready_condition: Expr = TRUE
    loc: Optional[Location] = _loc()


@dataclass
class MachinePart:
    name: str
    index: int
    properties: list[Property] = field(default_factory=list)
    commands: list[Command] = field(default_factory=list)
    top_level_machines: list[StateMachine] = field(default_factory=list)
    prestate: Optional[BehaviorBlock] = None
    poststate: Optional[BehaviorBlock] = None
    loc: Optional[Location] = _loc()

    def prop(self, name: str) -> Optional[Property]:
        for p in self.properties:
            if p.name == name:
                return p
        return None

    def command(self, name: str) -> Optional[Command]:
        for c in self.commands:
            if c.name == name:
                return c
        return None


class UnknownStatePath(LookupError):
    def __init__(self, path: str, suggestion: Optional[str] = None):
        msg = f"unknown state path '{path}'"
        if suggestion:
            msg += f" (did you mean '{suggestion}'?)"
        super().__init__(msg)
        self.path = path
        self.suggestion = suggestion


@dataclass
class ModelSpec:
    machineparts: list[MachinePart]

    @cached_property
    def index(self) -> "ModelIndex":
        return ModelIndex(self)

    def machines(self) -> list[StateMachine]:
        return [m for mp in self.machineparts for m in mp.top_level_machines]

    def machine(self, name: str) -> Optional[StateMachine]:
        for m in self.machines():
            if m.name == name:
                return m
        return None

    def transitions(self) -> list[Transition]:
        return [t for m in self.machines() for t in m.transitions]

    def commands(self) -> list[Command]:
        return [c for mp in self.machineparts for c in mp.commands]

    def behavior_blocks(self) -> list[BehaviorBlock]:
        blocks = []
        for mp in self.machineparts:
            for b in (mp.prestate, mp.poststate):
                if b is not None:
                    blocks.append(b)
            for c in mp.commands:
                for b in (c.accept_action, c.reject_action):
                    if b is not None:
                        blocks.append(b)
            for m in mp.top_level_machines:
                for node in m.root.walk():
                    for b in (node.entry, node.continuous):
                        if b is not None:
                            blocks.append(b)
                for t in m.transitions:
                    if t.behavior is not None:
                        blocks.append(t.behavior)
        return sorted(blocks, key=lambda b: b.id)


class ModelIndex:
    """Derived lookup tables for a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.machines = spec.machines()
        self.machine_pos = {m.name: i for i, m in enumerate(self.machines)}
        self.node: dict[int, StateNode] = {}
        self.parent: dict[int, Optional[int]] = {}
        self.machine_of: dict[int, int] = {}
        self.qualified: dict[int, str] = {}
        self.mp_of_machine: list[int] = []
        for mpi, mp in enumerate(spec.machineparts):
            for _ in mp.top_level_machines:
                self.mp_of_machine.append(mpi)
        for pos, m in enumerate(self.machines):
            self._index_tree(m.root, None, pos, m.name)
        # qualified names also reach into substatemachines through their ref nodes
        self.paths: dict[str, int] = {}
        for pos, m in enumerate(self.machines):
            self._index_paths(m.root, m.name, set())
        self.transition: dict[int, Transition] = {t.id: t for t in spec.transitions()}
        self.transitions_by_source: dict[int, list[Transition]] = {}
        for t in spec.transitions():
            self.transitions_by_source.setdefault(t.source_node, []).append(t)
        self.behavior: dict[int, BehaviorBlock] = {b.id: b for b in spec.behavior_blocks()}
        self.behavior_mp: dict[int, int] = {}
        for mpi, mp in enumerate(spec.machineparts):
            for b in _blocks_of(mp):
                self.behavior_mp[b.id] = mpi
        # global property order: machinepart order, then declaration order
        self.prop_pos: dict[tuple[int, str], int] = {}
        self.props: list[tuple[int, Property]] = []
        for mpi, mp in enumerate(spec.machineparts):
            for p in mp.properties:
                self.prop_pos[(mpi, p.name)] = len(self.props)
                self.props.append((mpi, p))
        self.command_by_index: dict[int, tuple[int, Command]] = {}
        for mpi, mp in enumerate(spec.machineparts):
            for c in mp.commands:
                self.command_by_index[c.index] = (mpi, c)
        # substatemachines activated by each ref node
        self.ref_target: dict[int, int] = {}
        for n in self.node.values():
            if n.kind == "substatemachine-ref" and n.ref in self.machine_pos:
                self.ref_target[n.id] = self.machine_pos[n.ref]

    def _index_tree(self, node: StateNode, parent: Optional[int], pos: int, qual: str):
        self.node[node.id] = node
        self.parent[node.id] = parent
        self.machine_of[node.id] = pos
        self.qualified[node.id] = qual
        for c in node.children:
            self._index_tree(c, node.id, pos, f"{qual}.{c.name}")

    def _index_paths(self, node: StateNode, qual: str, seen: set):
        self.paths.setdefault(qual, node.id)
        if node.kind == "substatemachine-ref" and node.ref not in seen:
            target = self.spec.machine(node.ref) if node.ref else None
            if target is not None:
                for c in target.root.children:
                    self._index_paths(c, f"{qual}.{c.name}", seen | {node.ref})
        for c in node.children:
            self._index_paths(c, f"{qual}.{c.name}", seen)

    def depth(self, node_id: int) -> int:
        d = 0
        p = self.parent[node_id]
        while p is not None:
            d += 1
            p = self.parent[p]
        return d

    def ancestors(self, node_id: int) -> list[int]:
        """Root-to-node path of ids."""
        chain = []
        cur: Optional[int] = node_id
        while cur is not None:
            chain.append(cur)
            cur = self.parent[cur]
        return chain[::-1]

    def siblings_out_of(self, node_id: int) -> list[Transition]:
        return self.transitions_by_source.get(node_id, [])


def _blocks_of(mp: MachinePart) -> Iterator[BehaviorBlock]:
    for b in (mp.prestate, mp.poststate):
        if b is not None:
            yield b
    for c in mp.commands:
        for b in (c.accept_action, c.reject_action):
            if b is not None:
                yield b
    for m in mp.top_level_machines:
        for node in m.root.walk():
            for b in (node.entry, node.continuous):
                if b is not None:
                    yield b
        for t in m.transitions:
            if t.behavior is not None:
                yield t.behavior


def resolve_state_path(spec: ModelSpec, path: str) -> int:
    """Return the id of the node whose qualified name is *path*.

    Paths start at a top-level machine name and may continue through
    substatemachine references, e.g. ``Main.Disabled.Wait_For_Conditioning``.
    """
    paths = spec.index.paths
    try:
        return paths[path]
    except KeyError:
        close = difflib.get_close_matches(path, list(paths), n=1)
        raise UnknownStatePath(path, close[0] if close else None) from None


# -- guards -----------------------------------------------------------------


def effective_guard(t: Transition, spec: ModelSpec) -> Expr:
    """The guard a transition is evaluated with, after applying defaults.

    Unguarded transitions leaving an initial pseudo-state, or entering a
    choice node, are always enabled; an unguarded transition leaving a choice
    node is its *else* branch; every other unguarded transition is disabled.
    """
    if t.guard is not None:
        return t.guard
    idx = spec.index
    src = idx.node[t.source_node]
    target = idx.node[t.dest[0]] if t.dest else None
    if src.kind == "initial" or (target is not None and _enters_choice(t, idx)):
        return TRUE
    if src.kind == "choice":
        others = [s.guard for s in idx.siblings_out_of(src.id) if s.id != t.id and s.guard is not None]
        return conjunction([Not(g) for g in others])
    return FALSE


def _enters_choice(t: Transition, idx: ModelIndex) -> bool:
    return any(idx.node[n].kind == "choice" for n in t.dest[-1:])


# -- evaluation -------------------------------------------------------------


def eval_expr(
    e: Expr,
    c,
    spec: ModelSpec,
    mp: int = 0,
    timers: Optional[Mapping[str, bool]] = None,
) -> bool:
    """Evaluate *e* in configuration *c* from the view of machinepart *mp*.

    *c* only needs ``active``, ``values`` and ``cmds`` attributes (see
    :class:`machina.engine.Configuration`).  Timer oracles default to false.
    """
    idx = spec.index
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Ref, InpSignal)):
        return c.values[idx.prop_pos[(mp, e.name)]]
    if isinstance(e, Not):
        return not eval_expr(e.operand, c, spec, mp, timers)
    if isinstance(e, And):
        return eval_expr(e.left, c, spec, mp, timers) and eval_expr(e.right, c, spec, mp, timers)
    if isinstance(e, Or):
        return eval_expr(e.left, c, spec, mp, timers) or eval_expr(e.right, c, spec, mp, timers)
    if isinstance(e, Eq):
        same = eval_expr(e.left, c, spec, mp, timers) == eval_expr(e.right, c, spec, mp, timers)
        return same != e.negated
    if isinstance(e, InState):
        return e.node in c.active[idx.machine_of[e.node]]
    if isinstance(e, CmdChk):
        cmd, accepted, _ready = c.cmds[mp]
        command = spec.machineparts[mp].command(e.name)
        return command is not None and cmd == command.index and accepted
    if isinstance(e, TimerElapsed):
        return bool(timers and timers.get(e.name, False))
    raise TypeError(f"not an expression: {e!r}")


def format_expr(e: Expr) -> str:
    """Render an expression in the model DSL's concrete syntax."""
    return _fmt(e, 0)


def _fmt(e: Expr, prec: int) -> str:
    if isinstance(e, Const):
        return "true" if e.value else "false"
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, InState):
        return f"State({e.path})"
    if isinstance(e, InpSignal):
        return f"InpSignal({e.name})"
    if isinstance(e, CmdChk):
        return f"CmdChk({e.name})"
    if isinstance(e, TimerElapsed):
        return f"TimerElapsed({e.name})"
    if isinstance(e, Not):
        s = f"NOT {_fmt(e.operand, 3)}"
        return f"({s})" if prec > 3 else s
    if isinstance(e, Eq):
        op = "<>" if e.negated else "="
        s = f"{_fmt(e.left, 4)} {op} {_fmt(e.right, 4)}"
        return f"({s})" if prec > 2 else s
    if isinstance(e, And):
        s = f"{_fmt(e.left, 1)} AND {_fmt(e.right, 2)}"
        return f"({s})" if prec > 1 else s
    if isinstance(e, Or):
        s = f"{_fmt(e.left, 0)} OR {_fmt(e.right, 1)}"
        return f"({s})" if prec > 0 else s
    raise TypeError(f"not an expression: {e!r}")
