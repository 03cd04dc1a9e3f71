"""Verification toolkit for hierarchical machine-control models."""

from pathlib import Path

from machina.dsl import ModelError, load_model, parse_model, validate
from machina.emitter import EmitterOptions, emit_mcrl2
from machina.engine import ActionLabel, Configuration, Engine, TraceError, run_trace
from machina.lts import Lts, LimitExceeded, build_lts, export_aut, import_aut

CORPUS = Path(__file__).parent / "corpus"

__all__ = [
    "ActionLabel", "CORPUS", "Configuration", "EmitterOptions", "Engine", "LimitExceeded", "Lts",
    "ModelError", "TraceError", "build_lts", "emit_mcrl2", "export_aut", "import_aut",
    "load_model", "parse_model", "run_trace", "validate",
]
