"""Textual model language (``.cmdl``): lexer, parser, validator, printer.

Concrete syntax, informally::

    machinepart Cylinder (2) {
        property iZeroPosSensor : Input;
        property oEnabled : OutputSignal = false;
        command CONDITIONING (9) {
            guard State(Main.Disabled);
            ready NOT State(Main.Disabled);
        }
        poststate { oEnabled := State(Main.Enabled); }
        statemachine Main (1) {
            initial InitialState;
            state Disabled submachine Disabled;
            state Enabled { state In_Zero_Pos uses InZeroPosition; }
            transition InitialState -> Disabled;
            transition Enabled -> Disabled [NOT InpSignal(iCompressedAirOK)];
        }
    }

Within every block, state declarations precede transitions; ids are handed
out in that (depth-first, document) order.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from typing import Optional, Union

from machina.model import (
    STEREOTYPES,
    And,
    Assign,
    BehaviorBlock,
    CmdChk,
    Command,
    Const,
    Eq,
    Expr,
    InpSignal,
    InState,
    Location,
    MachinePart,
    ModelSpec,
    Not,
    Or,
    Property,
    Ref,
    StateMachine,
    StateNode,
    TimerElapsed,
    Transition,
    UnknownStatePath,
    _blocks_of,
    format_expr,
    walk_expr,
)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    location: Location
    message: str
    code: str

    def format(self, filename: str = "<model>") -> str:
        return f"{filename}:{self.location.line}:{self.location.col}: {self.severity}[{self.code}]: {self.message}"

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


class ModelError(Exception):
    """Raised when a model fails to parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        first = diagnostics[0] if diagnostics else None
        super().__init__(first.format() if first else "invalid model")


def _error(loc, code, message) -> Diagnostic:
    return Diagnostic("error", loc or Location(1, 1), message, code)


def _warning(loc, code, message) -> Diagnostic:
    return Diagnostic("warning", loc or Location(1, 1), message, code)


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|->|<>|[{}()\[\];:,./=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'ident', 'num', 'op', 'eof'
    text: str
    loc: Location


class _SyntaxError(Exception):
    def __init__(self, loc: Location, message: str):
        super().__init__(message)
        self.loc = loc
        self.message = message


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            loc = Location(line, pos - line_start + 1)
            raise _SyntaxError(loc, f"unexpected character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            col = pos - line_start + 1
            tokens.append(Token(kind, text, Location(line, col, line, col + len(text))))
        pos = m.end()
    tokens.append(Token("eof", "", Location(line, pos - line_start + 1)))
    return tokens


# -- syntax tree ------------------------------------------------------------


@dataclass
class _StateDecl:
    name: str
    kind: str
    loc: Location
    uses: Optional[str] = None
    submachine: Optional[str] = None
    entry: Optional[list[Assign]] = None
    continuous: Optional[list[Assign]] = None
    body: Optional["_Body"] = None


@dataclass
class _TransitionDecl:
    source: str
    target: str
    guard: Optional[Expr]
    behavior: Optional[list[Assign]]
    loc: Location
    source_loc: Location
    target_loc: Location


@dataclass
class _Body:
    states: list[_StateDecl]
    transitions: list[_TransitionDecl]
    prestates: list[list[Assign]]
    poststates: list[list[Assign]]


@dataclass
class _StateRefExpr:
    """Unresolved ``State(path)`` produced by the parser."""

    path: str
    loc: Location


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, message: str) -> _SyntaxError:
        t = self.tok
        found = "end of file" if t.kind == "eof" else repr(t.text)
        return _SyntaxError(t.loc, f"{message}, found {found}")

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def at_kw(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text == word

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail(f"expected '{text}'")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            raise self.fail(f"expected {what}")
        return self.advance()

    def number(self) -> int:
        if self.tok.kind != "num":
            raise self.fail("expected number")
        return int(self.advance().text)

    # file level

    def parse_file(self):
        parts, subdiagrams = [], []
        while self.tok.kind != "eof":
            if self.at_kw("machinepart"):
                parts.append(self.parse_machinepart())
            elif self.at_kw("subdiagram"):
                subdiagrams.append(self.parse_subdiagram())
            else:
                raise self.fail("expected 'machinepart' or 'subdiagram'")
        return parts, subdiagrams

    def parse_machinepart(self):
        start = self.advance().loc
        name = self.ident("machinepart name")
        index = self.parse_index()
        self.expect("{")
        props, commands, machines, subdiagrams = [], [], [], []
        prestates, poststates = [], []
        while not self.at("}"):
            if self.at_kw("property"):
                props.append(self.parse_property())
            elif self.at_kw("command"):
                commands.append(self.parse_command())
            elif self.at_kw("statemachine"):
                machines.append(self.parse_statemachine())
            elif self.at_kw("subdiagram"):
                subdiagrams.append(self.parse_subdiagram())
            elif self.at_kw("prestate"):
                self.advance()
                prestates.append(self.parse_block())
            elif self.at_kw("poststate"):
                self.advance()
                poststates.append(self.parse_block())
            else:
                raise self.fail("expected machinepart member")
        self.expect("}")
        return dict(
            name=name.text, index=index, loc=start, props=props, commands=commands,
            machines=machines, subdiagrams=subdiagrams, prestates=prestates, poststates=poststates,
        )

    def parse_index(self) -> Optional[int]:
        if self.at("("):
            self.advance()
            n = self.number()
            self.expect(")")
            return n
        return None

    def parse_property(self) -> Property:
        start = self.advance().loc
        name = self.ident("property name")
        self.expect(":")
        st = self.ident("stereotype")
        if st.text not in STEREOTYPES:
            raise _SyntaxError(st.loc, f"unknown stereotype '{st.text}' (expected one of {', '.join(STEREOTYPES)})")
        initial = False
        if self.at("="):
            self.advance()
            initial = self.parse_bool()
        self.expect(";")
        return Property(name.text, st.text, initial, loc=name.loc)

    def parse_bool(self) -> bool:
        t = self.ident("'true' or 'false'")
        if t.text.lower() not in ("true", "false"):
            raise _SyntaxError(t.loc, f"expected 'true' or 'false', found '{t.text}'")
        return t.text.lower() == "true"

    def parse_command(self):
        self.advance()
        name = self.ident("command name")
        index = self.parse_index()
        cmd = dict(name=name.text, index=index, loc=name.loc, guard=None, ready=None, accept=None, reject=None)
        if self.at(";"):
            self.advance()
            return cmd
        self.expect("{")
        while not self.at("}"):
            word = self.ident("'guard', 'ready', 'accept' or 'reject'")
            if word.text in ("guard", "ready"):
                if cmd[word.text] is not None:
                    raise _SyntaxError(word.loc, f"duplicate '{word.text}' clause")
                cmd[word.text] = self.parse_expr()
                self.expect(";")
            elif word.text in ("accept", "reject"):
                if cmd[word.text] is not None:
                    raise _SyntaxError(word.loc, f"duplicate '{word.text}' block")
                cmd[word.text] = self.parse_block()
            else:
                raise _SyntaxError(word.loc, f"unexpected '{word.text}' in command")
        self.expect("}")
        return cmd

    def parse_statemachine(self):
        start = self.advance().loc
        name = self.ident("state machine name")
        index = self.parse_index()
        self.expect("{")
        body = self.parse_body()
        self.expect("}")
        return dict(name=name.text, index=index, loc=name.loc, body=body, start=start)

    def parse_subdiagram(self):
        self.advance()
        name = self.ident("subdiagram name")
        self.expect("{")
        body = self.parse_body()
        self.expect("}")
        return dict(name=name.text, loc=name.loc, body=body)

    def parse_body(self) -> _Body:
        body = _Body([], [], [], [])
        while not self.at("}") and self.tok.kind != "eof":
            if self.at_kw("transition"):
                body.transitions.append(self.parse_transition())
            elif self.at_kw("prestate"):
                self.advance()
                body.prestates.append(self.parse_block())
            elif self.at_kw("poststate"):
                self.advance()
                body.poststates.append(self.parse_block())
            elif self.tok.kind == "ident" and self.tok.text in ("state", "initial", "final", "choice"):
                if body.transitions:
                    raise self.fail("state declarations must precede transitions")
                body.states.append(self.parse_state())
            else:
                raise self.fail("expected state, transition, prestate or poststate")
        return body

    def parse_state(self) -> _StateDecl:
        kw = self.advance()
        name = self.ident("state name")
        if kw.text != "state":
            self.expect(";")
            return _StateDecl(name.text, kw.text, name.loc)
        decl = _StateDecl(name.text, "simple", name.loc)
        if self.at_kw("uses"):
            self.advance()
            decl.uses = self.ident("subdiagram name").text
        elif self.at_kw("submachine"):
            self.advance()
            decl.submachine = self.ident("state machine name").text
        if self.at(";"):
            self.advance()
            return decl
        self.expect("{")
        while self.at_kw("entry") or self.at_kw("continuous"):
            word = self.advance()
            block = self.parse_block()
            if getattr(decl, word.text) is not None:
                raise _SyntaxError(word.loc, f"duplicate '{word.text}' block")
            setattr(decl, word.text, block)
        body = self.parse_body()
        self.expect("}")
        if body.states or body.transitions or body.prestates or body.poststates:
            if decl.uses or decl.submachine:
                raise _SyntaxError(name.loc, "a referencing state cannot declare its own substates")
            decl.body = body
        return decl

    def parse_transition(self) -> _TransitionDecl:
        start = self.advance().loc
        src_loc = self.tok.loc
        src = self.parse_path()
        self.expect("->")
        dst_loc = self.tok.loc
        dst = self.parse_path()
        guard = None
        if self.at("["):
            self.advance()
            guard = self.parse_expr()
            self.expect("]")
        behavior = None
        if self.at("/"):
            self.advance()
            behavior = self.parse_block()
        self.expect(";")
        return _TransitionDecl(src, dst, guard, behavior, start, src_loc, dst_loc)

    def parse_path(self) -> str:
        parts = [self.ident("state name").text]
        while self.at("."):
            self.advance()
            parts.append(self.ident("state name").text)
        return ".".join(parts)

    def parse_block(self) -> list[Assign]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            target = self.ident("assignment target")
            self.expect(":=")
            value = self.parse_expr()
            self.expect(";")
            stmts.append(Assign(target.text, value, loc=target.loc))
        self.expect("}")
        return stmts

    # expressions: OR < AND < NOT < comparison < atoms

    def parse_expr(self):
        left = self.parse_and()
        while self.at_kw("OR") or self.at_kw("or"):
            self.advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.at_kw("AND") or self.at_kw("and"):
            self.advance()
            left = And(left, self.parse_not())
        return left

    def parse_not(self):
        if self.at_kw("NOT") or self.at_kw("not"):
            self.advance()
            return Not(self.parse_not())
        left = self.parse_atom()
        if self.at("=") or self.at("<>"):
            negated = self.advance().text == "<>"
            return Eq(left, self.parse_atom(), negated)
        return left

    def parse_atom(self):
        t = self.tok
        if t.text == "(":
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind != "ident":
            raise self.fail("expected expression")
        self.advance()
        low = t.text.lower()
        if low in ("true", "false"):
            return Const(low == "true")
        if t.text in ("State", "InpSignal", "CmdChk", "TimerElapsed") and self.at("("):
            self.advance()
            if t.text == "State":
                arg_loc = self.tok.loc
                arg = self.parse_path()
                self.expect(")")
                return _StateRefExpr(arg, arg_loc)
            arg = self.ident("name")
            self.expect(")")
            cls = {"InpSignal": InpSignal, "CmdChk": CmdChk, "TimerElapsed": TimerElapsed}[t.text]
            return cls(arg.text, loc=arg.loc)
        if t.text in ("AND", "OR", "NOT", "and", "or", "not"):
            raise _SyntaxError(t.loc, f"unexpected operator '{t.text}'")
        return Ref(t.text, loc=t.loc)


# -- elaboration ------------------------------------------------------------


class _Builder:
    """Turns the syntax tree into a ModelSpec: inlines subdiagrams, assigns ids."""

    def __init__(self, parts, subdiagrams):
        self.parts = parts
        self.global_subdiagrams = subdiagrams
        self.diags: list[Diagnostic] = []
        self.next_node = 1
        self.next_transition = 1
        self.pending_state_refs: list[tuple[object, str, Location]] = []

    def build(self) -> ModelSpec:
        spec = ModelSpec([])
        self.state_refs: list[tuple[dict, _StateRefExpr]] = []
        # command and machine indices default to model-wide counters
        next_cmd, next_machine = 1, 1
        for pi, raw in enumerate(self.parts):
            mp = MachinePart(raw["name"], raw["index"] if raw["index"] is not None else pi + 1, loc=raw["loc"])
            mp.properties = raw["props"]
            for rc in raw["commands"]:
                idx = rc["index"] if rc["index"] is not None else next_cmd
                next_cmd = max(next_cmd, idx + 1)
                mp.commands.append(
                    Command(
                        rc["name"], idx,
                        guard_condition=rc["guard"] if rc["guard"] is not None else Const(True),
                        accept_action=_block(rc["accept"]),
                        reject_action=_block(rc["reject"]),
                        ready_condition=rc["ready"] if rc["ready"] is not None else Const(True),
                        loc=rc["loc"],
                    )
                )
            subdiagrams = {s["name"]: s for s in self.global_subdiagrams}
            for s in raw["subdiagrams"]:
                subdiagrams[s["name"]] = s
            self.subdiagrams = subdiagrams
            prestates = list(raw["prestates"])
            poststates = list(raw["poststates"])
            for rm in raw["machines"]:
                idx = rm["index"] if rm["index"] is not None else next_machine
                next_machine = max(next_machine, idx + 1)
                root = StateNode(self._node_id(), rm["name"], "composite", loc=rm["loc"])
                machine = StateMachine(rm["name"], idx, root, loc=rm["loc"])
                self._build_body(machine, root, rm["body"], (), prestates, poststates)
                mp.top_level_machines.append(machine)
            mp.prestate = _block([s for block in prestates for s in block]) if prestates else None
            mp.poststate = _block([s for block in poststates for s in block]) if poststates else None
            spec.machineparts.append(mp)
        self._number_behaviors(spec)
        self._resolve_state_refs(spec)
        return spec

    def _node_id(self) -> int:
        n = self.next_node
        self.next_node += 1
        return n

    def _build_body(self, machine, scope: StateNode, body: _Body, expanding: tuple, prestates, poststates):
        prestates.extend(body.prestates)
        poststates.extend(body.poststates)
        seen = set()
        for decl in body.states:
            if decl.name in seen:
                self.diags.append(_error(decl.loc, "DUPLICATE_NAME", f"duplicate state '{decl.name}' in '{scope.name}'"))
                continue
            seen.add(decl.name)
            node = StateNode(self._node_id(), decl.name, decl.kind, loc=decl.loc)
            node.entry = _block(decl.entry)
            node.continuous = _block(decl.continuous)
            scope.children.append(node)
            if decl.submachine:
                node.kind = "substatemachine-ref"
                node.ref = decl.submachine
            elif decl.uses:
                sub = self.subdiagrams.get(decl.uses)
                if sub is None:
                    self.diags.append(_error(decl.loc, "UNKNOWN_NAME", f"unknown subdiagram '{decl.uses}'"))
                elif decl.uses in expanding:
                    self.diags.append(_error(decl.loc, "RECURSIVE_SUBDIAGRAM", f"subdiagram '{decl.uses}' refers to itself"))
                else:
                    node.kind = "composite"
                    self._build_body(machine, node, copy.deepcopy(sub["body"]), expanding + (decl.uses,), prestates, poststates)
            elif decl.body is not None:
                node.kind = "composite"
                self._build_body(machine, node, decl.body, expanding, prestates, poststates)
        for td in body.transitions:
            self._build_transition(machine, scope, td)

    def _lookup(self, scope: StateNode, path: str, loc: Location) -> Optional[list[StateNode]]:
        chain = []
        node = scope
        for part in path.split("."):
            nxt = node.child(part)
            if nxt is None:
                names = [c.name for c in node.children]
                hint = f" (known: {', '.join(names)})" if names else ""
                self.diags.append(_error(loc, "UNKNOWN_STATE", f"no state '{part}' in '{node.name}' while resolving '{path}'{hint}"))
                return None
            chain.append(nxt)
            node = nxt
        return chain

    def _build_transition(self, machine: StateMachine, scope: StateNode, td: _TransitionDecl):
        src = self._lookup(scope, td.source, td.source_loc)
        dst = self._lookup(scope, td.target, td.target_loc)
        tid = self.next_transition
        self.next_transition += 1
        if src is None or dst is None:
            return
        src_node, dst_node = src[-1], dst[-1]
        if src_node.kind == "final":
            self.diags.append(_error(td.loc, "FINAL_SOURCE", f"final state '{td.source}' cannot have outgoing transitions"))
        if dst_node.kind == "initial":
            self.diags.append(_error(td.loc, "INITIAL_TARGET", f"initial pseudo-state '{td.target}' cannot be a target"))
        # common prefix below scope; the exited ancestor is strictly above both
        common = 0
        while common < min(len(src), len(dst)) - 1 and src[common] is dst[common]:
            common += 1
        if src_node is dst_node:
            common = len(src) - 1
        dest_nodes = dst[common:]
        entered = list(dest_nodes)
        last = entered[-1]
        if last.kind == "composite":
            inits = [c for c in last.children if c.kind == "initial"]
            if not inits:
                self.diags.append(_error(td.target_loc, "MISSING_INITIAL", f"composite state '{td.target}' has no initial pseudo-state"))
            else:
                entered.append(inits[0])
        source_path = _root_path(machine.root, scope) + [n.id for n in src]
        guard = td.guard
        t = Transition(
            tid, source_path, [n.id for n in entered], guard, _block(td.behavior),
            src_node is dst_node, scope.id, loc=td.loc,
        )
        machine.transitions.append(t)

    def _number_behaviors(self, spec: ModelSpec):
        n = 1
        for mp in spec.machineparts:
            for b in _blocks_of(mp):
                b.id = n
                n += 1

    def _resolve_state_refs(self, spec: ModelSpec):
        def fix(e):
            if isinstance(e, _StateRefExpr):
                try:
                    node = resolve(spec, e.path)
                except UnknownStatePath as exc:
                    self.diags.append(_error(e.loc, "UNKNOWN_STATE", str(exc)))
                    node = -1
                return InState(e.path, node, loc=e.loc)
            if isinstance(e, Not):
                return Not(fix(e.operand))
            if isinstance(e, And):
                return And(fix(e.left), fix(e.right))
            if isinstance(e, Or):
                return Or(fix(e.left), fix(e.right))
            if isinstance(e, Eq):
                return Eq(fix(e.left), fix(e.right), e.negated)
            return e

        from machina.model import resolve_state_path as resolve

        for mp in spec.machineparts:
            for c in mp.commands:
                c.guard_condition = fix(c.guard_condition)
                c.ready_condition = fix(c.ready_condition)
            for m in mp.top_level_machines:
                for t in m.transitions:
                    if t.guard is not None:
                        t.guard = fix(t.guard)
            for b in _blocks_of(mp):
                for s in b.statements:
                    s.value = fix(s.value)


def _root_path(root: StateNode, scope: StateNode) -> list[int]:
    def find(node, trail):
        trail = trail + [node.id]
        if node is scope:
            return trail
        for c in node.children:
            r = find(c, trail)
            if r:
                return r
        return None

    return find(root, []) or [root.id]


def _block(stmts: Optional[list[Assign]]) -> Optional[BehaviorBlock]:
    if stmts is None:
        return None
    return BehaviorBlock(0, list(stmts))


# -- public API -------------------------------------------------------------


def parse_model(source: Union[str, bytes], filename: str = "<model>") -> ModelSpec:
    """Parse and validate *source*; raise :class:`ModelError` on any error.

    Warnings are available afterwards through :func:`validate`.
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelError([_error(Location(1, exc.start + 1), "ENCODING", "source is not valid UTF-8")]) from None
    try:
        parser = _Parser(tokenize(source))
        parts, subdiagrams = parser.parse_file()
    except _SyntaxError as exc:
        raise ModelError([_error(exc.loc, "SYNTAX", exc.message)]) from None
    except RecursionError:
        raise ModelError([_error(Location(1, 1), "SYNTAX", "nesting too deep")]) from None
    if not parts:
        raise ModelError([_error(Location(1, 1), "NO_MACHINEPART", "model declares no machinepart")])
    builder = _Builder(parts, subdiagrams)
    try:
        spec = builder.build()
    except RecursionError:
        raise ModelError([_error(Location(1, 1), "SYNTAX", "nesting too deep")]) from None
    errors = [d for d in builder.diags if d.is_error]
    if errors:
        raise ModelError(errors)
    errors = [d for d in validate(spec) if d.is_error]
    if errors:
        raise ModelError(errors)
    return spec


def load_model(path) -> ModelSpec:
    with open(path, "rb") as fh:
        return parse_model(fh.read(), str(path))


def validate(spec: ModelSpec) -> list[Diagnostic]:
    """Check model invariants; returns errors and warnings (empty if clean)."""
    out: list[Diagnostic] = []
    if not spec.machineparts:
        return [_error(None, "NO_MACHINEPART", "model declares no machinepart")]
    _unique(out, [(mp.index, mp.loc) for mp in spec.machineparts], "DUPLICATE_INDEX", "machinepart index")
    _unique(out, [(m.index, m.loc) for m in spec.machines()], "DUPLICATE_INDEX", "state machine index")
    _unique(out, [(m.name, m.loc) for m in spec.machines()], "DUPLICATE_NAME", "state machine")
    _unique(out, [(c.index, c.loc) for c in spec.commands()], "DUPLICATE_INDEX", "command index")
    nodes = [n for m in spec.machines() for n in m.root.walk()]
    _unique(out, [(n.id, n.loc) for n in nodes], "DUPLICATE_ID", "state id")
    _unique(out, [(t.id, t.loc) for t in spec.transitions()], "DUPLICATE_ID", "transition id")
    _unique(out, [(b.id, None) for b in spec.behavior_blocks()], "DUPLICATE_ID", "behavior id")
    if out:
        return out
    idx = spec.index
    machine_names = {m.name for m in spec.machines()}
    incoming = {n for t in spec.transitions() for n in t.dest}

    for mpi, mp in enumerate(spec.machineparts):
        _unique(out, [(p.name, p.loc) for p in mp.properties], "DUPLICATE_NAME", "property")
        _unique(out, [(c.name, c.loc) for c in mp.commands], "DUPLICATE_NAME", "command")
        props = {p.name: p for p in mp.properties}
        cmds = {c.name for c in mp.commands}

        def check_expr(e, where, allow_timers=False):
            for sub in walk_expr(e):
                if isinstance(sub, (Ref, InpSignal)) and sub.name not in props:
                    out.append(_error(sub.loc, "UNKNOWN_NAME", f"unknown property '{sub.name}' in {where}"))
                elif isinstance(sub, CmdChk) and sub.name not in cmds:
                    out.append(_error(sub.loc, "UNKNOWN_NAME", f"unknown command '{sub.name}' in {where}"))
                elif isinstance(sub, InState) and sub.node not in idx.node:
                    out.append(_error(sub.loc, "UNKNOWN_STATE", f"unknown state '{sub.path}' in {where}"))
                elif isinstance(sub, TimerElapsed) and not allow_timers:
                    out.append(_error(sub.loc, "TIMER_OUTSIDE_GUARD", f"TimerElapsed is only allowed in transition guards ({where})"))

        def check_block(b, where):
            if b is None:
                return
            for s in b.statements:
                check_expr(s.value, where)
                p = props.get(s.target)
                if p is None:
                    out.append(_error(s.loc, "UNKNOWN_NAME", f"assignment to unknown property '{s.target}' in {where}"))
                elif p.stereotype in ("Input", "InputSignal"):
                    out.append(_error(s.loc, "WRITE_TO_INPUT", f"cannot assign to {p.stereotype} property '{p.name}' in {where}"))

        for c in mp.commands:
            check_expr(c.guard_condition, f"guard of command {c.name}")
            check_expr(c.ready_condition, f"ready condition of command {c.name}")
            check_block(c.accept_action, f"accept action of command {c.name}")
            check_block(c.reject_action, f"reject action of command {c.name}")
        check_block(mp.prestate, "prestate")
        check_block(mp.poststate, "poststate")
        for m in mp.top_level_machines:
            inits = [c for c in m.root.children if c.kind == "initial"]
            if len(inits) != 1:
                out.append(_error(m.loc, "MISSING_INITIAL" if not inits else "MULTIPLE_INITIAL",
                                  f"state machine '{m.name}' needs exactly one initial pseudo-state"))
            for node in m.root.walk():
                if node.kind in ("initial", "final", "choice") and (node.entry or node.continuous):
                    out.append(_error(node.loc, "PSEUDO_BEHAVIOR", f"{node.kind} node '{node.name}' cannot carry behavior"))
                if node.kind == "composite" and node is not m.root:
                    ninit = sum(1 for c in node.children if c.kind == "initial")
                    if ninit > 1:
                        out.append(_error(node.loc, "MULTIPLE_INITIAL", f"state '{node.name}' has {ninit} initial pseudo-states"))
                if node.kind == "substatemachine-ref" and node.ref not in machine_names:
                    out.append(_error(node.loc, "UNKNOWN_NAME", f"unknown state machine '{node.ref}'"))
                check_block(node.entry, f"entry of {idx.qualified[node.id]}")
                check_block(node.continuous, f"continuous behavior of {idx.qualified[node.id]}")
                if node.kind == "choice":
                    elses = [t for t in idx.siblings_out_of(node.id) if t.guard is None]
                    if len(elses) > 1:
                        out.append(_error(node.loc, "MULTIPLE_ELSE", f"choice node '{idx.qualified[node.id]}' has {len(elses)} unguarded outgoing transitions"))
                if (
                    node is not m.root
                    and node.kind != "initial"
                    and node.id not in incoming
                ):
                    out.append(_warning(node.loc, "UNREACHABLE_STATE", f"state '{idx.qualified[node.id]}' has no incoming transition"))
            for t in m.transitions:
                if t.guard is not None:
                    check_expr(t.guard, f"guard of transition {t.id}", allow_timers=True)
                check_block(t.behavior, f"behavior of transition {t.id}")
    return out


def _unique(out, items, code, what):
    seen = set()
    for key, loc in items:
        if key in seen:
            out.append(_error(loc, code, f"duplicate {what} '{key}'"))
        seen.add(key)


# -- printer ----------------------------------------------------------------


def format_model(spec: ModelSpec) -> str:
    """Pretty-print *spec*; subdiagrams appear inlined."""
    idx = spec.index
    lines: list[str] = []
    w = lines.append

    def block(stmts, indent):
        if not stmts:
            return "{ }"
        inner = " ".join(f"{s.target} := {format_expr(s.value)};" for s in stmts)
        return "{ " + inner + " }"

    def rel(scope_id, node_id):
        scope_q = idx.qualified[scope_id]
        return idx.qualified[node_id][len(scope_q) + 1:]

    def node_lines(node: StateNode, m: StateMachine, indent: str):
        if node.kind in ("initial", "final", "choice"):
            w(f"{indent}{node.kind} {node.name};")
            return
        head = f"{indent}state {node.name}"
        if node.kind == "substatemachine-ref":
            head += f" submachine {node.ref}"
        has_body = node.entry or node.continuous or node.children
        if not has_body:
            w(head + ";")
            return
        w(head + " {")
        if node.entry:
            w(f"{indent}    entry {block(node.entry.statements, indent)}")
        if node.continuous:
            w(f"{indent}    continuous {block(node.continuous.statements, indent)}")
        scope_lines(node, m, indent + "    ")
        w(indent + "}")

    def scope_lines(scope: StateNode, m: StateMachine, indent: str):
        for c in scope.children:
            node_lines(c, m, indent)
        for t in m.transitions:
            if t.scope != scope.id:
                continue
            target = t.dest[-1]
            last = idx.node[target]
            if last.kind == "initial" and len(t.dest) > 1:
                target = t.dest[-2]
            s = f"{indent}transition {rel(scope.id, t.source_node)} -> {rel(scope.id, target)}"
            if t.guard is not None:
                s += f" [{format_expr(t.guard)}]"
            if t.behavior is not None:
                s += f" / {block(t.behavior.statements, indent)}"
            w(s + ";")

    for mp in spec.machineparts:
        w(f"machinepart {mp.name} ({mp.index}) {{")
        for p in mp.properties:
            init = " = true" if p.initial else ""
            w(f"    property {p.name} : {p.stereotype}{init};")
        for c in mp.commands:
            w(f"    command {c.name} ({c.index}) {{")
            w(f"        guard {format_expr(c.guard_condition)};")
            w(f"        ready {format_expr(c.ready_condition)};")
            if c.accept_action is not None:
                w(f"        accept {block(c.accept_action.statements, '')}")
            if c.reject_action is not None:
                w(f"        reject {block(c.reject_action.statements, '')}")
            w("    }")
        if mp.prestate is not None:
            w(f"    prestate {block(mp.prestate.statements, '')}")
        if mp.poststate is not None:
            w(f"    poststate {block(mp.poststate.statements, '')}")
        for m in mp.top_level_machines:
            w(f"    statemachine {m.name} ({m.index}) {{")
            scope_lines(m.root, m, "        ")
            w("    }")
        w("}")
    return "\n".join(lines) + "\n"
