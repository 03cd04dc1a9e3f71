import dataclasses

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from machina.dsl import ModelError, format_model, parse_model, tokenize, validate
from machina.engine import Configuration
from machina.model import (
    And, CmdChk, Const, InState, Not, UnknownStatePath, effective_guard, eval_expr, format_expr,
    resolve_state_path,
)

MINIMAL_SRC = """
machinepart Minimal (1) {
    statemachine Main (1) {
        initial InitialState;
        state On;
        final Done;
        transition InitialState -> On;
        transition On -> Done;
    }
}
"""


def _strip(obj):
    """Structural projection without source locations."""
    if dataclasses.is_dataclass(obj):
        return (type(obj).__name__,) + tuple(
            _strip(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name != "loc"
        )
    if isinstance(obj, (list, tuple)):
        return tuple(_strip(x) for x in obj)
    return obj


def _codes(src):
    with pytest.raises(ModelError) as exc:
        parse_model(src)
    return {d.code for d in exc.value.diagnostics}


# -- parsing -----------------------------------------------------------------


def test_minimal_model_shape():
    spec = parse_model(MINIMAL_SRC)
    assert len(spec.machineparts) == 1
    (m,) = spec.machines()
    assert len(list(m.root.walk())) - 1 == 3
    assert len(spec.transitions()) == 2


def test_cylinder_shape(cylinder_spec):
    (mp,) = cylinder_spec.machineparts
    assert [m.name for m in cylinder_spec.machines()] == [
        "Main", "MovingToZeroPosition", "MovingToEndPosition", "Disabled",
    ]
    assert len(mp.commands) == 5
    assert mp.poststate is not None and mp.prestate is None


def test_write_to_input_rejected():
    src = MINIMAL_SRC.replace(
        "machinepart Minimal (1) {",
        "machinepart Minimal (1) {\n    property x : Input;\n    poststate { x := true; }",
    )
    assert "WRITE_TO_INPUT" in _codes(src)


def test_unknown_name_in_guard():
    src = MINIMAL_SRC.replace("transition On -> Done;", "transition On -> Done [nosuch];")
    assert "UNKNOWN_NAME" in _codes(src)


def test_unreachable_state_warning():
    spec = parse_model(MINIMAL_SRC.replace("state On;", "state On;\n        state Orphan;"))
    diags = validate(spec)
    assert [d.code for d in diags if not d.is_error] == ["UNREACHABLE_STATE"]


def test_cylinder_validates_cleanly(cylinder_spec):
    assert [d for d in validate(cylinder_spec) if d.is_error] == []


def test_syntax_error_has_location():
    with pytest.raises(ModelError) as exc:
        parse_model("machinepart X (1) {\n  statemachine M (1) {\n    initial I\n  }\n}")
    (d,) = exc.value.diagnostics
    assert d.code == "SYNTAX" and d.location.line >= 3


def test_round_trip_cylinder(cylinder_spec):
    again = parse_model(format_model(cylinder_spec))
    assert _strip(again.machineparts) == _strip(cylinder_spec.machineparts)


def test_round_trip_minimal():
    spec = parse_model(MINIMAL_SRC)
    assert _strip(parse_model(format_model(spec)).machineparts) == _strip(spec.machineparts)


def test_unique_ids(cylinder_spec):
    nodes = [n.id for m in cylinder_spec.machines() for n in m.root.walk()]
    trans = [t.id for t in cylinder_spec.transitions()]
    cmds = [c.index for c in cylinder_spec.commands()]
    behs = [b.id for b in cylinder_spec.behavior_blocks()]
    for ids in (nodes, trans, cmds, behs):
        assert len(ids) == len(set(ids))


_TOKENS = [
    "machinepart", "statemachine", "state", "initial", "final", "choice", "transition", "->",
    "{", "}", "(", ")", "[", "]", ";", ":", ":=", "M", "X", "1", "2", "AND", "OR", "NOT",
    "true", "State(", "Input", "property", "command", "guard", "ready", "entry", ".",
]


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(st.binary(max_size=200))
def test_parse_total_on_bytes(data):
    try:
        parse_model(data)
    except ModelError as e:
        assert e.diagnostics


@settings(max_examples=300)
@given(st.lists(st.sampled_from(_TOKENS), max_size=60))
def test_parse_total_on_token_soup(toks):
    try:
        parse_model(" ".join(toks))
    except ModelError as e:
        assert e.diagnostics


def test_tokenize_deterministic():
    assert tokenize(MINIMAL_SRC) == tokenize(MINIMAL_SRC)


# -- state paths -------------------------------------------------------------


def test_resolve_nested_path(cylinder_spec):
    nid = resolve_state_path(cylinder_spec, "Main.Disabled.Wait_For_Conditioning")
    assert cylinder_spec.index.node[nid].name == "Wait_For_Conditioning"


def test_resolve_root(cylinder_spec):
    nid = resolve_state_path(cylinder_spec, "Main")
    assert nid == cylinder_spec.machine("Main").root.id


def test_resolve_unknown(cylinder_spec):
    with pytest.raises(UnknownStatePath):
        resolve_state_path(cylinder_spec, "Main.NoSuchState")


# -- expressions -------------------------------------------------------------


def _config(spec, **over):
    idx = spec.index
    active = []
    for m in idx.machines:
        init = next(c for c in m.root.children if c.kind == "initial")
        active.append((m.root.id, init.id))
    c = Configuration(0, 0, tuple(active), tuple(False for _ in idx.props),
                      tuple((-1, False, False) for _ in spec.machineparts), ())
    return c._replace(**over)


def test_eval_constants(cylinder_spec):
    c = _config(cylinder_spec)
    assert eval_expr(And(Const(True), Const(False)), c, cylinder_spec) is False


def test_eval_in_state(cylinder_spec):
    idx = cylinder_spec.index
    dis = resolve_state_path(cylinder_spec, "Main.Disabled")
    main = idx.machine_pos["Main"]
    active = list(_config(cylinder_spec).active)
    active[main] = (cylinder_spec.machine("Main").root.id, dis)
    c = _config(cylinder_spec, active=tuple(active))
    assert eval_expr(InState("Main.Disabled", dis), c, cylinder_spec)
    assert not eval_expr(Not(InState("Main.Disabled", dis)), c, cylinder_spec)


def test_eval_cmdchk(cylinder_spec):
    estop = cylinder_spec.machineparts[0].command("EmergencyStop").index
    c = _config(cylinder_spec, cmds=((estop, True, False),))
    assert eval_expr(CmdChk("EmergencyStop"), c, cylinder_spec)
    c = _config(cylinder_spec, cmds=((estop, False, False),))
    assert not eval_expr(CmdChk("EmergencyStop"), c, cylinder_spec)


def test_eval_deterministic(cylinder_spec):
    c1, c2 = _config(cylinder_spec), _config(cylinder_spec)
    for t in cylinder_spec.transitions():
        g = effective_guard(t, cylinder_spec)
        assert eval_expr(g, c1, cylinder_spec) == eval_expr(g, c2, cylinder_spec)


# -- effective guards ----------------------------------------------------------


def _by_names(spec, src_name, dst_name):
    idx = spec.index
    return [
        t for t in spec.transitions()
        if idx.node[t.source_node].name == src_name and idx.node[t.dest[0]].name == dst_name
    ]


def test_guard_from_initial_is_true():
    spec = parse_model(MINIMAL_SRC)
    (t,) = _by_names(spec, "InitialState", "On")
    assert effective_guard(t, spec) == Const(True)


def test_unguarded_simple_is_false():
    spec = parse_model(MINIMAL_SRC)
    (t,) = _by_names(spec, "On", "Done")
    assert effective_guard(t, spec) == Const(False)


def test_choice_else_negates_siblings(cylinder_spec):
    (t,) = _by_names(cylinder_spec, "SensorChoice", "CondPositionUnknown")
    g = effective_guard(t, cylinder_spec)
    siblings = [
        u.guard for u in cylinder_spec.transitions()
        if u.source_node == t.source_node and u.id != t.id
    ]
    assert len(siblings) == 2
    assert g == And(Not(siblings[0]), Not(siblings[1]))
    assert format_expr(g).count("NOT") >= 2


def test_effective_guard_idempotent(cylinder_spec):
    for t in cylinder_spec.transitions():
        g = effective_guard(t, cylinder_spec)
        again = effective_guard(dataclasses.replace(t, guard=g), cylinder_spec)
        assert again == g
