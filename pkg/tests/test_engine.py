import pytest

from conftest import CYLINDER
from machina.dsl import parse_model
from machina.engine import ActionLabel, Engine, Phase, TraceError, parse_script, run_trace
from machina.model import resolve_state_path

from test_model_dsl import MINIMAL_SRC


def _fig10():
    return parse_script((CYLINDER / "fig10.script").read_text())


def test_initial_cylinder(cylinder_spec):
    eng = Engine(cylinder_spec)
    c = eng.initial()
    idx = cylinder_spec.index
    main = cylinder_spec.machine("Main")
    chain = c.active[idx.machine_pos["Main"]]
    assert idx.node[chain[-1]].kind == "initial" and chain[0] == main.root.id
    assert not any(c.values)
    # referenced machines start inactive
    for name in ("MovingToZeroPosition", "MovingToEndPosition", "Disabled"):
        assert c.active[idx.machine_pos[name]] == ()


def test_initial_minimal():
    spec = parse_model(MINIMAL_SRC)
    c = Engine(spec).initial()
    root = spec.machines()[0].root
    assert c.active == ((root.id, root.children[0].id),)


def test_initial_value_declared():
    src = MINIMAL_SRC.replace(
        "machinepart Minimal (1) {", "machinepart Minimal (1) {\n    property iAir : InputSignal = true;"
    )
    spec = parse_model(src)
    assert Engine(spec).valuation(Engine(spec).initial())["iAir"] is True


def test_initial_inputs_successors(cylinder_spec):
    eng = Engine(cylinder_spec)
    succ = eng.successors(eng.initial())
    steps = [str(l) for l, _ in succ if not l.is_observation]
    assert sorted(steps) == sorted(f"inputs({a},{b})" for a in ("tt", "ff") for b in ("tt", "ff"))
    assert any(l.is_observation for l, _ in succ)


def test_outer_transition_has_priority(cylinder_spec):
    eng = Engine(cylinder_spec)
    idx = cylinder_spec.index
    main = idx.machine_pos["Main"]
    enabled = resolve_state_path(cylinder_spec, "Main.Enabled")
    in_zero = resolve_state_path(cylinder_spec, "Main.Enabled.In_Zero_Pos")
    init = next(n.id for n in idx.node[in_zero].children if n.kind == "initial")
    disabled = resolve_state_path(cylinder_spec, "Main.Disabled")
    active = list(eng.initial().active)
    active[main] = (cylinder_spec.machine("Main").root.id, enabled, in_zero, init)
    c = eng.initial()._replace(phase=Phase.MACHINE_STEP, cursor=main, active=tuple(active))
    (k,) = [t.id for t in cylinder_spec.transitions() if t.source_node == enabled and t.dest[0] == disabled]
    succ = eng.step(c)
    assert [str(l) for l, _ in succ] == [f"trans({k})"]
    assert succ[0][1].active[main][:2] == (active[main][0], disabled)


def test_no_enabled_transition_is_tau():
    spec = parse_model(MINIMAL_SRC)
    eng = Engine(spec)
    done = resolve_state_path(spec, "Main.Done")
    root = spec.machines()[0].root.id
    c = eng.initial()._replace(phase=Phase.MACHINE_STEP, cursor=0, active=((root, done),))
    ((label, nxt),) = eng.step(c)
    assert label == ActionLabel("tau_no_trans")
    assert nxt.active == c.active


def test_fig10_cycle1(cylinder_spec):
    trace = run_trace(cylinder_spec, _fig10()[:3])
    labels = [str(l) for l, _ in trace]
    assert labels[:4] == ["inputs(tt,tt)", "free_input_signals(ff,tt,tt,tt,tt,tt)", "no_freecmd", "command_none"]
    eng = Engine(cylinder_spec)
    assert "Disabled=Disabled.Wait_For_Conditioning" in eng.describe(trace[-1][1])


def test_fig10_cycle2(cylinder_spec):
    trace = run_trace(cylinder_spec, _fig10()[:6])
    labels = [str(l) for l, _ in trace]
    cond = cylinder_spec.machineparts[0].command("CONDITIONING").index
    assert f"command({cond},tt)" in labels
    assert "Disabled=Disabled.Conditioning" in Engine(cylinder_spec).describe(trace[-1][1])


def test_empty_script(cylinder_spec):
    assert run_trace(cylinder_spec, []) == []


def test_choice_not_enabled(cylinder_spec):
    script = _fig10()[:2] + ["freecmd TOGGLE", "freecmd CONDITIONING"]
    with pytest.raises(TraceError) as exc:
        run_trace(cylinder_spec, script)
    assert exc.value.code == "CHOICE_NOT_ENABLED" and exc.value.step == 3


def test_one_step_per_machine_per_cycle(cylinder_spec):
    trace = run_trace(cylinder_spec, _fig10())
    cycles, cur = [], []
    for label, _ in trace:
        if label.name == "inputs" and cur:
            cycles.append(cur)
            cur = []
        cur.append(label.name)
    cycles.append(cur)
    for cyc in cycles:
        assert sum(1 for n in cyc if n in ("trans", "tau_no_trans")) == 4
        assert cyc[-1] == "post_done"


def test_check_configuration_on_trace(cylinder_spec):
    eng = Engine(cylinder_spec)
    for _, c in run_trace(cylinder_spec, _fig10(), engine=eng):
        eng.check_configuration(c)
