import random

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from conftest import CYLINDER
from machina.lts import from_edges
from machina.mucalc import (
    CheckError, EdgeView, Evaluator, FormulaError, alpha_equal, check, check_all, expand_regular,
    parse_action, parse_formula, parse_raw, prepare, to_nnf,
)
from machina.mucalc.ast import (
    AAct, ATrue, FAnd, FBox, FDiamond, FFix, FImp, FNot, FOr, FTrue, FVal, FVar, DConst, RAct,
    show,
)

from oracle import Oracle, gen_action, gen_formula, gen_lts, to_lts


def _count(f, kind):
    n = int(isinstance(f, kind))
    for attr in ("arg", "left", "right", "body"):
        c = getattr(f, attr, None)
        if c is not None and not isinstance(c, RAct):
            n += _count(c, kind)
    return n


# -- parser --------------------------------------------------------------------


def test_requirement1_structure():
    f = parse_raw((CYLINDER / "req01.mcf").read_text())
    assert isinstance(f, FBox)
    assert isinstance(f.body, FImp)
    assert _count(f, FBox) == 1 and _count(f, FImp) == 1 and _count(f, FDiamond) == 2


def test_mu_identity_is_empty():
    f = parse_formula("mu X . X")
    lts = from_edges(3, [(0, "a", 1), (1, "a", 2)])
    assert check(lts, f).holds is False
    assert not Evaluator(lts, prepare(f)).run().any()


def test_non_monotone_rejected():
    with pytest.raises(FormulaError) as exc:
        parse_formula("mu X . !X")
    assert exc.value.code == "NON_MONOTONE"


def test_negation_cancels():
    f = parse_formula("mu X . !!X")
    assert isinstance(f, FFix) and f.body == FVar("X")


@pytest.mark.parametrize("src,code", [
    ("[true*](", "SYNTAX"),
    ("mu X . Y", "UNBOUND"),
    ("<c(n)>true", "UNBOUND"),
    ("nu X(b: Bool = true) . X", "ARITY"),
])
def test_parse_errors(src, code):
    with pytest.raises(FormulaError) as exc:
        parse_formula(src)
    assert exc.value.code == code


def test_all_requirements_parse():
    for p in sorted(CYLINDER.glob("req*.mcf")):
        parse_formula(p.read_text())


def test_show_round_trip_on_requirements():
    for p in sorted(CYLINDER.glob("req*.mcf")):
        f = parse_raw(p.read_text())
        assert parse_raw(show(f)) == f


def test_comments_and_primes():
    f = parse_raw("% comment\n<state_M2'oEnabled(true)>true")
    assert f.reg.af == AAct("state_M2'oEnabled", (DConst(True),))


def test_parse_action_quantifier():
    a = parse_action("exists i: Nat . freecmd(i)")
    assert a.kind == "exists"


# -- regular formulas ----------------------------------------------------------


def test_expand_box_star():
    got = expand_regular(parse_raw("[true*]val(true)"))
    want = parse_raw("nu X . val(true) && [true]X")
    assert alpha_equal(got, want)


def test_expand_diamond_sequence():
    got = expand_regular(parse_raw("<(!a)*.b>true"))
    want = parse_raw("mu X . <b>true || <!a>X")
    assert alpha_equal(got, want)


def test_expand_nested_box_star():
    got = expand_regular(parse_raw("[true*](val(true) => [true*]val(false))"))
    want = parse_raw("nu Y . (val(true) => (nu X . val(false) && [true]X)) && [true]Y")
    assert alpha_equal(got, want)
    assert _count(got, FFix) == 2


def test_expand_avoids_capture():
    got = expand_regular(parse_raw("nu X . [true*]X"))
    assert got.var == "X" and got.body.var != "X"


def test_alpha_equal_distinguishes():
    assert not alpha_equal(parse_raw("mu X . X"), parse_raw("nu X . X"))
    assert alpha_equal(parse_raw("mu X . <a>X"), parse_raw("mu Y . <a>Y"))


# -- checking ------------------------------------------------------------------


def test_inevitability_example():
    # mu Y . [!a]Y || <b>true on a -> b chain
    lts = from_edges(3, [(0, "c", 1), (1, "c", 2), (2, "b", 2)])
    assert check(lts, parse_formula("mu Y . [!a]Y || <b>true")).holds
    lts = from_edges(2, [(0, "c", 1), (1, "c", 0)])
    assert not check(lts, parse_formula("mu Y . [!a]Y || <b>true"), witness=False).holds


def test_data_quantified_action():
    lts = from_edges(2, [(0, "freecmd(7)", 1)])
    assert check(lts, parse_formula("<exists i: Nat . freecmd(i)>true")).holds
    assert check(lts, parse_formula("exists i: Nat . <freecmd(i)>true")).holds
    assert not check(lts, parse_formula("forall i: Nat . <freecmd(i)>true")).holds


def test_parameterised_fixpoint():
    # alternate a/b labels, tracked in a Boolean parameter
    lts = from_edges(2, [(0, "a", 1), (1, "b", 0)])
    f = parse_formula("nu X(p: Bool = true) . (val(p) => [b]false) && (val(!p) => [a]false) && [true]X(!p)")
    assert check(lts, f).holds
    lts2 = from_edges(2, [(0, "a", 1), (1, "a", 0)])
    assert not check(lts2, f, witness=False).holds


def test_check_all_empty():
    assert check_all(from_edges(1, []), []) == []


def test_check_all_reports_errors():
    rep = check_all(from_edges(1, []), [("bad", "mu X ."), ("ok", "true")])
    assert rep[0]["holds"] is None and "error" in rep[0]
    assert rep[1]["holds"] is True


def test_timeout():
    lts = to_lts(*gen_lts(random.Random(3).randint))
    with pytest.raises(CheckError) as exc:
        Evaluator(lts, prepare(parse_formula("nu X . mu Y . [a]X && [b]Y"))).run(timeout_s=0.0)
    assert exc.value.code == "TIMEOUT"


def test_cylinder_req1(cylinder_lts):
    assert check(cylinder_lts, parse_formula((CYLINDER / "req01.mcf").read_text())).holds


# -- properties against the brute-force oracle -------------------------------


@st.composite
def cases(draw):
    ri = lambda lo, hi: draw(st.integers(lo, hi))  # noqa: E731
    n, edges = gen_lts(ri)
    return n, edges, gen_formula(ri)


@settings(max_examples=500, deadline=None, suppress_health_check=list(HealthCheck))
@given(cases())
def test_oracle_equivalence(case):
    n, edges, f = case
    assert check(to_lts(n, edges), f, witness=False).holds == Oracle(n, edges).holds(f), show(f)


@st.composite
def small_cases(draw):
    ri = lambda lo, hi: draw(st.integers(lo, hi))  # noqa: E731
    n, edges = gen_lts(ri, max_states=40)
    return n, edges, gen_action(ri, []), gen_formula(ri, size=3)


def _sat(n, edges, f):
    lts = to_lts(n, edges)
    return Evaluator(lts, prepare(f), EdgeView(lts)).run()


@settings(max_examples=200, deadline=None, suppress_health_check=list(HealthCheck))
@given(small_cases())
def test_box_diamond_duality(case):
    n, edges, a, phi = case
    box = _sat(n, edges, FBox(RAct(a), phi))
    dia = _sat(n, edges, FNot(FDiamond(RAct(a), FNot(phi))))
    assert np.array_equal(box, dia)


@settings(max_examples=200, deadline=None, suppress_health_check=list(HealthCheck))
@given(small_cases())
def test_mu_below_nu(case):
    n, edges, a, phi = case
    body = FOr(FAnd(phi, FDiamond(RAct(a), FVar("Z"))), FBox(RAct(ATrue()), FVar("Z")))
    mu = _sat(n, edges, FFix("mu", "Z", (), body))
    nu = _sat(n, edges, FFix("nu", "Z", (), body))
    assert not (mu & ~nu).any()


@settings(max_examples=200, deadline=None, suppress_health_check=list(HealthCheck))
@given(small_cases())
def test_always_matches_reachability_scan(case):
    n, edges, a, _phi = case
    lts = to_lts(n, edges)
    p = FDiamond(RAct(a), FTrue())
    holds = check(lts, parse_formula(f"[true*]{show(p)}"), witness=False).holds
    local = _sat(n, edges, p)
    g = csr_matrix((np.ones(lts.n_edges), (lts.src, lts.dst)), shape=(n, n))
    reach = breadth_first_order(g, 0, directed=True, return_predecessors=False)
    assert holds == bool(local[reach].all())


def test_val_only_formula_is_constant():
    assert check(from_edges(2, [(0, "a", 1)]), FVal(DConst(True))).holds


def test_nnf_pushes_negation():
    f = to_nnf(parse_raw("!(<a>true && [b]false)"))
    assert isinstance(f, FOr)
