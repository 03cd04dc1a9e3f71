import re

import pytest

from machina.emitter import EmitterOptions, emit_mcrl2
from machina.mcrl2 import Mcrl2Error, parse_mcrl2


@pytest.fixture(scope="module")
def cyl_text(cylinder_spec):
    return emit_mcrl2(cylinder_spec)


@pytest.fixture(scope="module")
def cyl_parsed(cyl_text):
    return parse_mcrl2(cyl_text)


def test_one_command_process_per_command(cylinder_spec, cyl_parsed):
    procs = sorted(p for p in cyl_parsed.procs if re.fullmatch(r"P_command_\d+", p))
    assert procs == sorted(f"P_command_{c.index}" for c in cylinder_spec.commands())
    assert len(procs) == 5


def test_one_summand_per_transition(cylinder_spec, cyl_text):
    fired = re.findall(r"-> trans\((\d+)\)", cyl_text)
    assert sorted(map(int, fired)) == sorted(t.id for t in cylinder_spec.transitions())


def test_one_process_per_behavior_block(cylinder_spec, cyl_parsed):
    for b in cylinder_spec.behavior_blocks():
        assert f"P_{b.id}" in cyl_parsed.procs


def test_transition_process_per_machine(cylinder_spec, cyl_parsed):
    n = len(cylinder_spec.index.machines)
    assert {p for p in cyl_parsed.procs if p.startswith("P_transitions_S")} == {
        f"P_transitions_S{i}" for i in range(1, n + 1)
    }


def test_guard_rendering(cylinder_spec, cyl_text):
    idx = cylinder_spec.index
    (t,) = [
        t for t in cylinder_spec.transitions()
        if idx.node[t.source_node].name == "Enabled" and idx.node[t.dest[0]].name == "Disabled"
    ]
    line = next(l for l in cyl_text.splitlines() if f"(head(source(t{t.id})) in s1)" in l)
    assert "!M2'iCompressedAirOK || isCommand2_EmergencyStop(cmd2) && cmd2_accepted" in line


def test_command_sort(cyl_text):
    assert re.search(r"Command2 = struct M2'NO_COMMAND\?isCommand2_NO_COMMAND", cyl_text)


def test_actions_declared(cyl_parsed):
    for name in ("inputs", "free_input_signals", "freecmd", "no_freecmd", "command",
                 "chk_ready", "trans", "tau_no_trans", "post_done"):
        assert name in cyl_parsed.acts
    assert cyl_parsed.acts["trans"] == 1 and cyl_parsed.acts["command"] == 2


def test_minimal_has_no_freecmd_only(minimal_spec):
    spec = parse_mcrl2(emit_mcrl2(minimal_spec, EmitterOptions(include_observation_loops=False)))
    assert spec.summands["P_set_free_commands_1"] == 1
    assert "freecmd" not in {a for a, _, _ in spec.action_uses}
    assert not any(re.fullmatch(r"P_command_\d+", p) for p in spec.procs)


def test_observation_loops_optional(minimal_spec):
    with_obs = emit_mcrl2(minimal_spec)
    without = emit_mcrl2(minimal_spec, EmitterOptions(include_observation_loops=False))
    assert "states" in parse_mcrl2(with_obs).acts
    assert "states(" not in without.split("act", 1)[1].split("proc", 1)[1]


def test_tau_relabel(minimal_spec):
    text = emit_mcrl2(minimal_spec, EmitterOptions(relabel_no_trans_to_tau=True))
    assert "tau_no_trans" not in text
    parse_mcrl2(text)


def test_deterministic(cylinder_spec, cyl_text):
    assert emit_mcrl2(cylinder_spec) == cyl_text


# -- conformance parser --------------------------------------------------------


_SMALL = """act a: Nat;
proc P_x(n: Nat) = (n > 0) -> a(n) . P_x(n = 0) <> a(1) . P_x();
init P_x(1);
"""


def test_small_spec_parses():
    s = parse_mcrl2(_SMALL)
    assert s.acts == {"a": 1} and s.procs == {"P_x": ["n"]}


@pytest.mark.parametrize("text", [
    _SMALL.replace("a(n) .", "b(n) ."),  # undeclared action
    _SMALL.replace("a(1)", "a(1, 2)"),  # arity
    _SMALL.replace("P_x(n = 0)", "P_y(n = 0)"),  # undeclared process
    _SMALL.replace("init P_x(1);\n", ""),  # no init
    _SMALL.replace("->", "-"),  # syntax
])
def test_malformed_rejected(text):
    with pytest.raises(Mcrl2Error):
        parse_mcrl2(text)
