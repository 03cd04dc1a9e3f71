"""Rendering of a model as an mCRL2 process specification.

Every process shares one parameter list (control position, one state list
per machine, the command interface per machinepart, pending behaviors and
all properties), so parameter updates can use the ``P(x = e)`` shorthand.
State lists are stored innermost state first, which makes
``dest(t) ++ remove_prefix(s, rhead(source(t)))`` the successor list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from machina.model import (
    And, CmdChk, Const, Eq, InpSignal, InState, ModelSpec, Not, Or, Ref, TimerElapsed, Transition,
    effective_guard, timers_in,
)


@dataclass(frozen=True)
class EmitterOptions:
    include_observation_loops: bool = True
    relabel_no_trans_to_tau: bool = False


PHASE_PRESTATE, PHASE_COMMAND, PHASE_TRANSITION = 1, 2, 3


class _Emitter:
    def __init__(self, spec: ModelSpec, opts: EmitterOptions):
        self.spec = spec
        self.opts = opts
        self.idx = spec.index
        self.out: list[str] = []
        self.machines = self.idx.machines
        self.mps = spec.machineparts

    # -- naming ------------------------------------------------------------

    def prop(self, mpi: int, name: str) -> str:
        return f"M{self.mps[mpi].index}'{name}"

    def svar(self, pos: int) -> str:
        return f"s{self.machines[pos].index}"

    def cmd(self, mpi: int) -> str:
        return f"cmd{self.mps[mpi].index}"

    def cmd_sort(self, mpi: int) -> str:
        return f"Command{self.mps[mpi].index}"

    def cmd_const(self, mpi: int, name: str) -> str:
        return f"M{self.mps[mpi].index}'{name}"

    def cmd_rec(self, mpi: int, name: str) -> str:
        return f"isCommand{self.mps[mpi].index}_{name}"

    def none_const(self, mpi: int) -> str:
        return f"M{self.mps[mpi].index}'NO_COMMAND"

    def params(self) -> list[tuple[str, str]]:
        ps = [("state_machine", "Nat"), ("machinepart", "Nat"), ("phase", "Nat")]
        ps += [(self.svar(p), "List(State)") for p in range(len(self.machines))]
        for mpi in range(len(self.mps)):
            c = self.cmd(mpi)
            ps += [(c, self.cmd_sort(mpi)), (f"{c}_ready", "Bool"), (f"{c}_accepted", "Bool")]
        ps.append(("behaviors", "List(Nat)"))
        ps += [(self.prop(mpi, p.name), "Bool") for mpi, p in self.idx.props]
        return ps

    # -- expressions -------------------------------------------------------

    def expr(self, e, mpi: int, accepted: Optional[str] = None, prec: int = 0) -> str:
        """Render a guard; *accepted* overrides the accepted flag."""
        if isinstance(e, Const):
            return "true" if e.value else "false"
        if isinstance(e, (Ref, InpSignal)):
            return self.prop(mpi, e.name)
        if isinstance(e, Not):
            return "!" + self.expr(e.operand, mpi, accepted, 4)
        if isinstance(e, InState):
            s = f"S{e.node} in {self.svar(self.idx.machine_of[e.node])}"
            return f"({s})" if prec >= 3 else s
        if isinstance(e, TimerElapsed):
            return f"tm_{e.name}"
        if isinstance(e, CmdChk):
            acc = accepted or f"{self.cmd(mpi)}_accepted"
            s = f"{self.cmd_rec(mpi, e.name)}({self.cmd(mpi)}) && {acc}"
            return f"({s})" if prec > 1 else s
        if isinstance(e, Eq):
            op = "!=" if e.negated else "=="
            s = f"{self.expr(e.left, mpi, accepted, 3)} {op} {self.expr(e.right, mpi, accepted, 3)}"
            return f"({s})" if prec >= 3 else s
        if isinstance(e, And):
            s = f"{self.expr(e.left, mpi, accepted, 1)} && {self.expr(e.right, mpi, accepted, 1)}"
            return f"({s})" if prec > 1 else s
        if isinstance(e, Or):
            s = f"{self.expr(e.left, mpi, accepted, 0)} || {self.expr(e.right, mpi, accepted, 0)}"
            return f"({s})" if prec > 0 else s
        raise TypeError(f"not an expression: {e!r}")

    # -- output helpers ----------------------------------------------------

    def w(self, line: str = "") -> None:
        self.out.append(line)

    def obs_summands(self, proc: str) -> list[str]:
        if not self.opts.include_observation_loops:
            return []
        out = []
        for mpi, p in self.idx.props:
            if p.is_observed:
                v = self.prop(mpi, p.name)
                out.append(f"state_{v}({v}) . {proc}()")
        for pos, m in enumerate(self.machines):
            out.append(f"states({m.index}, ids({self.svar(pos)})) . {proc}()")
        return out

    def proc(self, name: str, summands: list[str], observe: bool = True) -> None:
        if observe:
            summands = summands + self.obs_summands(name)
        self.w(f"  {name}({self.param_decl}) =")
        for i, s in enumerate(summands):
            lead = "      " if i == 0 else "    + "
            self.w(f"{lead}{s}")
        self.out[-1] += ";"
        self.w()

    @staticmethod
    def call(name: str, updates: list[tuple[str, str]] = ()) -> str:
        if not updates:
            return f"{name}()"
        return f"{name}(" + ", ".join(f"{k} = {v}" for k, v in updates) + ")"

    # -- sections ----------------------------------------------------------

    def emit(self) -> str:
        ps = self.params()
        groups: list[tuple[list[str], str]] = []
        for n, s in ps:
            if groups and groups[-1][1] == s:
                groups[-1][0].append(n)
            else:
                groups.append(([n], s))
        self.param_decl = ", ".join(f"{', '.join(ns)}: {s}" for ns, s in groups)
        self.sorts()
        self.maps()
        self.acts()
        self.w("proc")
        self.processes()
        self.init()
        return "\n".join(self.out) + "\n"

    def sorts(self) -> None:
        self.w("sort")
        self.w("  State = struct State_(state: Nat, entry: List(Nat), cont: List(Nat));")
        self.w("  Transition = struct Transition_(source: List(State), dest: List(State), behavior: List(Nat));")
        for mpi, mp in enumerate(self.mps):
            alts = [f"{self.none_const(mpi)}?{self.cmd_rec(mpi, 'NO_COMMAND')}"]
            alts += [f"{self.cmd_const(mpi, c.name)}?{self.cmd_rec(mpi, c.name)}" for c in mp.commands]
            self.w(f"  {self.cmd_sort(mpi)} = struct " + " | ".join(alts) + ";")
        self.w()

    def _state(self, nid: int) -> str:
        n = self.idx.node[nid]
        entry = f"[{n.entry.id}]" if n.entry is not None else "[]"
        cont = f"[{n.continuous.id}]" if n.continuous is not None else "[]"
        return f"State_({nid}, {entry}, {cont})"

    def exited(self, t: Transition) -> list[int]:
        lca = self.idx.parent[t.dest[0]]
        cut = t.source.index(lca) + 1
        return list(reversed(t.source[cut:]))

    def maps(self) -> None:
        nodes = sorted(self.idx.node)
        trans = self.spec.transitions()
        self.w("map")
        for nid in nodes:
            self.w(f"  S{nid}: State;")
        for t in trans:
            self.w(f"  t{t.id}: Transition;")
        self.w("  remove_prefix: List(State) # State -> List(State);")
        self.w("  ids: List(State) -> List(Nat);")
        self.w("  entries: List(State) -> List(Nat);")
        self.w()
        self.w("var")
        self.w("  l: List(State);")
        self.w("  s, x: State;")
        self.w()
        self.w("eqn")
        for nid in nodes:
            self.w(f"  S{nid} = {self._state(nid)};")
        for t in trans:
            src = ", ".join(f"S{n}" for n in self.exited(t))
            dst = ", ".join(f"S{n}" for n in reversed(t.dest))
            beh = f"[{t.behavior.id}]" if t.behavior is not None else "[]"
            self.w(f"  t{t.id} = Transition_([{src}], [{dst}], {beh});")
        self.w("  remove_prefix([], x) = [];")
        self.w("  remove_prefix(s |> l, x) = if(s == x, l, remove_prefix(l, x));")
        self.w("  ids([]) = [];")
        self.w("  ids(s |> l) = ids(l) <| state(s);")
        self.w("  entries([]) = [];")
        self.w("  entries(s |> l) = entries(l) ++ entry(s);")
        self.w()

    def acts(self) -> None:
        n_in = sum(1 for _, p in self.idx.props if p.stereotype == "Input")
        n_sig = sum(1 for _, p in self.idx.props if p.stereotype in ("InputSignal", "InOutSignal"))
        self.w("act")
        self.w("  inputs" + (": " + " # ".join(["Bool"] * n_in) if n_in else "") + ";")
        self.w("  free_input_signals" + (": " + " # ".join(["Bool"] * n_sig) if n_sig else "") + ";")
        self.w("  freecmd, trans, beh, post: Nat;")
        self.w("  command: Nat # Bool;")
        plain = "no_freecmd, chk_ready, command_none, post_done"
        if not self.opts.relabel_no_trans_to_tau:
            plain += ", tau_no_trans"
        self.w(f"  {plain};")
        obs = [f"state_{self.prop(mpi, p.name)}" for mpi, p in self.idx.props if p.is_observed]
        if obs:
            self.w(f"  {', '.join(obs)}: Bool;")
        self.w("  states: Nat # List(Nat);")
        self.w()

    # -- processes ---------------------------------------------------------

    def _machines_of(self, mpi: int) -> list[int]:
        return [p for p, m in enumerate(self.idx.mp_of_machine) if m == mpi]

    def after_machinepart(self, mpi: int) -> str:
        if mpi + 1 < len(self.mps):
            nxt = mpi + 1
            return self.call(f"P_set_free_commands_{self.mps[nxt].index}", [("machinepart", str(self.mps[nxt].index))])
        return "P_set_inputs()"

    def enter_machines(self, mpi: int, updates=()) -> str:
        return self.call(f"P_statemachines_M{self.mps[mpi].index}", list(updates))

    def poststate_call(self, mpi: int) -> str:
        mp = self.mps[mpi]
        beh = f"[{mp.poststate.id}]" if mp.poststate is not None else "[]"
        return self.call(f"P_poststate_M{mp.index}", [("behaviors", beh)])

    def after_machine(self, pos: int, updates=()) -> str:
        mpi = self.idx.mp_of_machine[pos]
        ms = self._machines_of(mpi)
        k = ms.index(pos)
        if k + 1 < len(ms):
            nxt = self.machines[ms[k + 1]].index
            return self.call(f"P_transitions_S{nxt}", [("state_machine", str(nxt))] + list(updates))
        return self.poststate_call(mpi)

    def processes(self) -> None:
        first_mp = self.mps[0].index if self.mps else 0
        self.proc("P_main", ["P_set_inputs()"], observe=False)
        ins = [self.prop(mpi, p.name) for mpi, p in self.idx.props if p.stereotype == "Input"]
        sigs = [
            self.prop(mpi, p.name)
            for mpi, p in self.idx.props
            if p.stereotype in ("InputSignal", "InOutSignal")
        ]
        self.proc("P_set_inputs", [self._sum_assign("inputs", ins, "P_set_free_input_signals", [])])
        start = (
            self.call(f"P_set_free_commands_{first_mp}", [("machinepart", str(first_mp))])
            if self.mps else "P_set_inputs()"
        )
        nxt_name, nxt_upd = start.split("(", 1)
        upd = [("machinepart", str(first_mp))] if self.mps else []
        self.proc(
            "P_set_free_input_signals",
            [self._sum_assign("free_input_signals", sigs, nxt_name, upd)],
        )
        for mpi in range(len(self.mps)):
            self.machinepart_processes(mpi)
        for pos in range(len(self.machines)):
            self.transition_process(pos)
        for bid, block in sorted(self.idx.behavior.items()):
            self.behavior_process(bid, block)

    def _sum_assign(self, act: str, names: list[str], target: str, extra) -> str:
        if not names:
            return f"{act} . {self.call(target, extra)}"
        primed = [f"{n}'" for n in names]
        body = self.call(target, list(zip(names, primed)) + list(extra))
        return f"sum {', '.join(primed)}: Bool . {act}({', '.join(primed)}) . {body}"

    def machinepart_processes(self, mpi: int) -> None:
        mp = self.mps[mpi]
        i = mp.index
        c = self.cmd(mpi)
        is_none = f"{self.cmd_rec(mpi, 'NO_COMMAND')}({c})"
        # free commands
        summands = [
            f"{is_none} -> freecmd({cmd.index}) . "
            + self.call(
                f"P_prestate_M{i}",
                [(c, self.cmd_const(mpi, cmd.name)), (f"{c}_ready", "false"), (f"{c}_accepted", "false")],
            )
            for cmd in mp.commands
        ]
        summands.append(f"no_freecmd . P_prestate_M{i}()")
        self.proc(f"P_set_free_commands_{i}", summands)
        # prestate
        if mp.prestate is not None:
            body = self.call(
                f"P_execute_behaviors_M{i}",
                [("phase", str(PHASE_PRESTATE)), ("behaviors", f"[{mp.prestate.id}]")],
            )
        else:
            body = f"P_command_M{i}()"
        self.proc(f"P_prestate_M{i}", [body], observe=False)
        # command step
        summands = [f"{is_none} -> command_none . {self.enter_machines(mpi)}"]
        summands += [f"P_command_{cmd.index}()" for cmd in mp.commands]
        self.proc(f"P_command_M{i}", summands, observe=False)
        for cmd in mp.commands:
            self.command_process(mpi, cmd)
        # generic behavior execution
        blocks = [
            bid for bid, m in sorted(self.idx.behavior_mp.items())
            if m == mpi and (mp.poststate is None or bid != mp.poststate.id)
        ]
        summands = [
            f"(behaviors != [] && head(behaviors) == {b}) -> beh({b}) . P_{b}(behaviors = tail(behaviors))"
            for b in blocks
        ]
        summands.append(f"(behaviors == [] && phase == {PHASE_PRESTATE}) -> P_command_M{i}()")
        summands.append(f"(behaviors == [] && phase == {PHASE_COMMAND}) -> {self.enter_machines(mpi)}")
        for pos in self._machines_of(mpi):
            j = self.machines[pos].index
            summands.append(
                f"(behaviors == [] && phase == {PHASE_TRANSITION} && state_machine == {j}) -> "
                + self.after_machine(pos)
            )
        self.proc(f"P_execute_behaviors_M{i}", summands)
        # state machines
        ms = self._machines_of(mpi)
        if ms:
            j = self.machines[ms[0]].index
            body = self.call(f"P_transitions_S{j}", [("state_machine", str(j))])
        else:
            body = self.poststate_call(mpi)
        self.proc(f"P_statemachines_M{i}", [body], observe=False)
        # poststate
        summands = [f"(behaviors == []) -> post_done . P_remove_command_M{i}()"]
        if mp.poststate is not None:
            b = mp.poststate.id
            summands.append(
                f"(behaviors != [] && head(behaviors) == {b}) -> post({b}) . P_{b}(behaviors = tail(behaviors))"
            )
        self.proc(f"P_poststate_M{i}", summands)
        reset = [(c, self.none_const(mpi)), (f"{c}_ready", "false"), (f"{c}_accepted", "false")]
        nxt = self.after_machinepart(mpi)
        name, _ = nxt.split("(", 1)
        upd = [("machinepart", str(self.mps[mpi + 1].index))] if mpi + 1 < len(self.mps) else []
        self.proc(
            f"P_remove_command_M{i}",
            [
                f"(!{is_none} && {c}_ready) -> {self.call(name, reset + upd)}",
                f"!(!{is_none} && {c}_ready) -> {self.call(name, upd)}",
            ],
            observe=False,
        )

    def command_process(self, mpi: int, cmd) -> None:
        c = self.cmd(mpi)
        rec = f"{self.cmd_rec(mpi, cmd.name)}({c})"
        guard = self.expr(cmd.guard_condition, mpi)
        i = self.mps[mpi].index

        def branch(ok: bool) -> str:
            block = cmd.accept_action if ok else cmd.reject_action
            beh = f"[{block.id}]" if block is not None else "[]"
            acc = "true" if ok else "false"
            ready = self.expr(cmd.ready_condition, mpi, accepted=acc)
            cond = f"({rec} && !{c}_accepted && {'' if ok else '!'}({guard}))"
            target = self.call(
                f"P_execute_behaviors_M{i}",
                [("phase", str(PHASE_COMMAND)), ("behaviors", beh), (f"{c}_accepted", acc), (f"{c}_ready", ready)],
            )
            return f"{cond} -> command({cmd.index}, {acc}) . {target}"

        ready = self.expr(cmd.ready_condition, mpi)
        summands = [
            branch(True),
            branch(False),
            f"({rec} && {c}_accepted) -> chk_ready . " + self.enter_machines(mpi, [(f"{c}_ready", ready)]),
        ]
        self.proc(f"P_command_{cmd.index}", summands)

    # -- transitions -------------------------------------------------------

    def _priority(self, pos: int) -> list[tuple[Transition, int, tuple]]:
        m = self.machines[pos]
        out = []
        for t in m.transitions:
            out.append((t, self.idx.depth(t.source_node), (1 if t.is_self_loop else 0, t.id)))
        return out

    def _enabled(self, t: Transition, pos: int, mpi: int) -> str:
        g = effective_guard(t, self.spec)
        head = f"head(source(t{t.id})) in {self.svar(pos)}"
        if isinstance(g, Const) and g.value:
            return head
        return f"{head} && " + self.expr(g, mpi, prec=1)

    def _refs_below(self, nid: int) -> list[int]:
        return [n.id for n in self.idx.node[nid].walk() if n.id in self.idx.ref_target]

    def _deactivation(self, pos: int, roots: list[int]) -> dict[int, list[str]]:
        """Machines possibly deactivated when the subtrees *roots* are exited,
        with the conditions under which that happens."""
        conds: dict[int, list[str]] = {}
        work = [(pos, r) for r in roots]
        seen = set()
        while work:
            p, root = work.pop(0)
            for ref in self._refs_below(root):
                target = self.idx.ref_target[ref]
                if (p, ref) in seen:
                    continue
                seen.add((p, ref))
                conds.setdefault(target, []).append(f"S{ref} in {self.svar(p)}")
                work.append((target, self.machines[target].root.id))
        return conds

    def transition_process(self, pos: int) -> None:
        m = self.machines[pos]
        mpi = self.idx.mp_of_machine[pos]
        sv = self.svar(pos)
        j = m.index
        head = f"state_machine == {j}"
        ranked = self._priority(pos)
        summands = [f"({head} && {sv} == []) -> {self._no_trans(pos)}"]
        guards = []
        for t, depth, key in ranked:
            higher = [
                u for u, du, ku in ranked
                if u.id != t.id and (du < depth or (u.source_node == t.source_node and ku < key))
            ]
            parts = [head, f"(head(source(t{t.id})) in {sv})"]
            g = effective_guard(t, self.spec)
            if not (isinstance(g, Const) and g.value):
                parts.append(f"({self.expr(g, mpi)})")
            for u in higher:
                parts.append(f"!({self._enabled(u, pos, mpi)})")
            timers = sorted({x for tt in [t] + higher for x in timers_in(effective_guard(tt, self.spec))})
            cond = " && ".join(parts)
            updates = [
                ("phase", str(PHASE_TRANSITION)),
                ("behaviors", f"behavior(t{t.id}) ++ entries(dest(t{t.id}))"),
                (sv, f"dest(t{t.id}) ++ remove_prefix({sv}, rhead(source(t{t.id})))"),
            ]
            lca = self.idx.parent[t.dest[0]]
            exited_root = t.source[t.source.index(lca) + 1]
            off = self._deactivation(pos, [exited_root])
            on = {self.idx.ref_target[n] for n in t.dest if n in self.idx.ref_target}
            for target in sorted(set(off) | on):
                tsv = self.svar(target)
                if target in on:
                    init = next(c for c in self.machines[target].root.children if c.kind == "initial")
                    updates.append((tsv, f"[S{init.id}, S{self.machines[target].root.id}]"))
                else:
                    updates.append((tsv, f"if({' || '.join(off[target])}, [], {tsv})"))
            call = self.call(f"P_execute_behaviors_M{self.mps[mpi].index}", updates)
            prefix = f"sum {', '.join('tm_' + x for x in timers)}: Bool . " if timers else ""
            summands.append(f"{prefix}({cond})\n        -> trans({t.id}) . {call}")
            guards.append((t, timers))
        all_timers = sorted({x for t, ts in guards for x in ts})
        none = [head, f"{sv} != []"] + [f"!({self._enabled(t, pos, mpi)})" for t, _ in guards]
        prefix = f"sum {', '.join('tm_' + x for x in all_timers)}: Bool . " if all_timers else ""
        summands.append(f"{prefix}({' && '.join(none)})\n        -> {self._no_trans(pos)}")
        self.proc(f"P_transitions_S{j}", summands)

    def _no_trans(self, pos: int) -> str:
        act = "tau" if self.opts.relabel_no_trans_to_tau else "tau_no_trans"
        return f"{act} . {self.after_machine(pos)}"

    def behavior_process(self, bid: int, block) -> None:
        mpi = self.idx.behavior_mp[bid]
        mp = self.mps[mpi]
        subst: dict[str, str] = {}
        for st in block.statements:
            rendered = self.expr(st.value, mpi)
            for k, v in subst.items():
                rendered = _replace_ident(rendered, k, f"({v})")
            subst[self.prop(mpi, st.target)] = rendered
        target = f"P_poststate_M{mp.index}" if mp.poststate is not None and bid == mp.poststate.id else f"P_execute_behaviors_M{mp.index}"
        self.proc(f"P_{bid}", [self.call(target, list(subst.items()))], observe=False)

    def init(self) -> None:
        vals = []
        first_machine = self.machines[0].index if self.machines else 0
        first_mp = self.mps[0].index if self.mps else 0
        referenced = set(self.idx.ref_target.values())
        for name, sort in self.params():
            if name == "state_machine":
                vals.append(str(first_machine))
            elif name == "machinepart":
                vals.append(str(first_mp))
            elif name == "phase":
                vals.append("0")
            elif sort == "List(State)":
                pos = next(p for p in range(len(self.machines)) if self.svar(p) == name)
                m = self.machines[pos]
                if pos in referenced:
                    vals.append("[]")
                else:
                    init = next(c for c in m.root.children if c.kind == "initial")
                    vals.append(f"[S{init.id}, S{m.root.id}]")
            elif sort.startswith("Command"):
                mpi = next(k for k in range(len(self.mps)) if self.cmd(k) == name)
                vals.append(self.none_const(mpi))
            elif name == "behaviors":
                vals.append("[]")
            elif sort == "Bool" and "'" in name:
                mpi_name = name.split("'", 1)
                mpi = next(k for k, mp in enumerate(self.mps) if f"M{mp.index}" == mpi_name[0])
                p = self.mps[mpi].prop(mpi_name[1])
                vals.append("true" if p.initial else "false")
            else:
                vals.append("false")
        self.w(f"init P_main({', '.join(vals)});")


def _replace_ident(text: str, ident: str, repl: str) -> str:
    import re

    return re.sub(rf"(?<![\w']){re.escape(ident)}(?![\w'])", lambda _m: repl, text)


def emit_mcrl2(spec: ModelSpec, opts: EmitterOptions = EmitterOptions()) -> str:
    """Render *spec* (assumed validated) as mCRL2 text; deterministic."""
    return _Emitter(spec, opts).emit()
