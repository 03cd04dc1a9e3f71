import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from machina.engine import Engine
from machina.lts import AutParseError, LimitExceeded, build_lts, export_aut, from_edges, import_aut

# Hand enumeration of the minimal model: one cycle entering On, then On
# idles forever (its outgoing transition defaults to guard false).
MINIMAL_AUT = """des (0,22,11)
(0,"inputs",1)
(0,"states(1,[1,2])",0)
(1,"free_input_signals",2)
(1,"states(1,[1,2])",1)
(2,"no_freecmd",3)
(2,"states(1,[1,2])",2)
(3,"command_none",4)
(3,"states(1,[1,2])",3)
(4,"trans(1)",5)
(4,"states(1,[1,2])",4)
(5,"post_done",6)
(5,"states(1,[1,3])",5)
(6,"inputs",7)
(6,"states(1,[1,3])",6)
(7,"free_input_signals",8)
(7,"states(1,[1,3])",7)
(8,"no_freecmd",9)
(8,"states(1,[1,3])",8)
(9,"command_none",10)
(9,"states(1,[1,3])",9)
(10,"tau_no_trans",5)
(10,"states(1,[1,3])",10)
"""

CYLINDER_GOLDEN = {"states": 1_148_989, "edges": 13_660_921, "depth": 160}


def _aut(lts, **kw) -> str:
    buf = io.StringIO()
    export_aut(lts, buf, **kw)
    return buf.getvalue()


def test_minimal_matches_hand_enumeration(minimal_spec):
    assert _aut(build_lts(minimal_spec)) == MINIMAL_AUT


def test_minimal_deterministic(minimal_spec):
    assert _aut(build_lts(minimal_spec)) == _aut(build_lts(minimal_spec))


def test_tau_relabelling(minimal_spec):
    text = _aut(build_lts(minimal_spec), tau_labels=("tau_no_trans",))
    assert "(10,tau,5)" in text and "tau_no_trans" not in text


def test_cylinder_golden_size(cylinder_lts):
    st_ = cylinder_lts.stats()
    assert {k: st_[k] for k in CYLINDER_GOLDEN} == CYLINDER_GOLDEN


def _dfs_counts(spec):
    """Independent depth-first exploration keyed on configurations."""
    eng = Engine(spec)
    start = eng.initial()
    seen = {start}
    stack = [start]
    edges = 0
    labels = Counter()
    while stack:
        c = stack.pop()
        for label, nxt in eng.successors(c):
            edges += 1
            labels[label.name] += 1
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen), edges, labels


def test_cylinder_cross_checked_by_dfs(cylinder_spec, cylinder_lts):
    n, m, labels = _dfs_counts(cylinder_spec)
    assert (n, m) == (cylinder_lts.n_states, cylinder_lts.n_edges)
    bfs = Counter()
    names = [l.name for l in cylinder_lts.labels]
    for lid, cnt in zip(*np.unique(cylinder_lts.lab, return_counts=True)):
        bfs[names[lid]] += int(cnt)
    assert bfs == labels


def test_every_state_has_an_edge(cylinder_lts):
    assert (np.bincount(cylinder_lts.src, minlength=cylinder_lts.n_states) > 0).all()


def test_bfs_numbering(cylinder_lts):
    n = cylinder_lts.n_states
    g = csr_matrix((np.ones(cylinder_lts.n_edges, dtype=np.int8), (cylinder_lts.src, cylinder_lts.dst)), shape=(n, n))
    dist = shortest_path(g, unweighted=True, indices=0)
    assert np.isfinite(dist).all()
    assert (np.diff(dist) >= 0).all()
    assert int(dist.max()) == cylinder_lts.depth


@pytest.mark.parametrize("limits", [{"max_states": 1}, {"max_states": 10}, {"max_edges": 5}])
def test_limits(cylinder_spec, limits):
    with pytest.raises(LimitExceeded) as exc:
        build_lts(cylinder_spec, **limits)
    assert exc.value.code == "LIMIT_EXCEEDED"


def test_timeout(cylinder_spec):
    with pytest.raises(LimitExceeded):
        build_lts(cylinder_spec, timeout_s=1e-6)


# -- .aut format ---------------------------------------------------------------


def test_export_single_loop():
    assert _aut(from_edges(1, [(0, "a", 0)])) == 'des (0,1,1)\n(0,"a",0)\n'


def test_export_no_edges():
    assert _aut(from_edges(1, [])) == "des (0,0,1)\n"


def test_import_single_loop():
    lts = import_aut('des (0,1,1)\n(0,"a",0)\n')
    assert (lts.n_states, lts.n_edges, lts.label_text) == (1, 1, ["a"])


def test_import_bare_tau():
    lts = import_aut("des (0,1,2)\n(0,tau,1)\n")
    assert lts.label_text == ["tau"]


@pytest.mark.parametrize("text,line", [
    ("des 0,1,1\n", 1),
    ("", 1),
    ('des (0,1,1)\n(0,"a"\n', 2),
    ('des (0,1,1)\n(0,"a",3)\n', 2),
    ('des (0,2,1)\n(0,"a",0)\n', 1),
])
def test_import_errors(text, line):
    with pytest.raises(AutParseError) as exc:
        import_aut(text)
    assert exc.value.code == "PARSE_ERROR" and exc.value.line == line


def test_import_minimal_round_trip(minimal_spec):
    lts = build_lts(minimal_spec)
    again = import_aut(MINIMAL_AUT)
    assert again.same_structure(lts)
    assert _aut(again) == MINIMAL_AUT


_LABELS = st.sampled_from(["a", "b", "c(tt)", "d(1,[2,3])", "states(1,[])"])


@settings(max_examples=200)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), _LABELS, st.integers(0, n - 1)), max_size=60))))
def test_round_trip_property(case):
    n, edges = case
    text = _aut(from_edges(n, edges))
    assert _aut(import_aut(text)) == text
    assert _aut(import_aut(io.StringIO(text))) == text
