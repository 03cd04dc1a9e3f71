"""First-order modal mu-calculus: parsing, regular-formula expansion,
explicit-state checking and counterexample extraction."""

from machina.mucalc.checker import CheckError, EdgeView, Evaluator, Verdict, check, prepare
from machina.mucalc.parser import FormulaError, parse_action, parse_formula, parse_raw, to_nnf
from machina.mucalc.regular import alpha_equal, expand_regular
from machina.mucalc.suite import check_all, load_manifest, load_suite
from machina.mucalc.witness import UnsupportedTemplate, Witness, extract_counterexample

__all__ = [
    "CheckError", "EdgeView", "Evaluator", "FormulaError", "UnsupportedTemplate", "Verdict",
    "Witness", "alpha_equal", "check", "check_all", "expand_regular", "extract_counterexample",
    "load_manifest", "load_suite", "parse_action", "parse_formula", "parse_raw", "prepare",
    "to_nnf",
]
