"""Named formula suites: manifest loading and batch checking."""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

from machina.lts import Lts
from machina.mucalc.checker import CheckError, EdgeView, check
from machina.mucalc.parser import FormulaError, parse_formula


def load_manifest(path) -> list[tuple[str, Path]]:
    """Read ``name = path`` lines; paths are relative to the manifest."""
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'name = path'")
        name, rel = (x.strip() for x in line.split("=", 1))
        out.append((name, path.parent / rel))
    return out


def load_suite(path) -> list[tuple[str, str]]:
    return [(name, p.read_text()) for name, p in load_manifest(path)]


def check_all(
    lts: Lts,
    suite,
    witness: bool = True,
    timeout_s: Optional[float] = None,
    rotate=None,
) -> list[dict]:
    """Check every ``(name, formula text or AST)`` pair.

    Each entry of the report is ``{name, holds, ms}`` plus ``witness`` when
    a counterexample was extracted and ``error`` when the formula could not
    be parsed or evaluated (``holds`` is then None).  A failing entry never
    aborts the rest of the suite."""
    view = EdgeView(lts)
    report = []
    for name, formula in suite:
        t0 = time.perf_counter()
        entry: dict = {"name": name}
        try:
            f = parse_formula(formula) if isinstance(formula, str) else formula
            v = check(lts, f, view, witness=witness, timeout_s=timeout_s)
            entry["holds"] = v.holds
            if v.witness is not None:
                w = v.witness.rotate(rotate) if rotate else v.witness
                entry["witness"] = w
            elif v.witness_error:
                entry["witness_error"] = v.witness_error
            entry["iterations"] = v.stats.get("iterations", 0)
        except (FormulaError, CheckError, ValueError) as e:
            entry["holds"] = None
            entry["error"] = str(e)
        entry["ms"] = round((time.perf_counter() - t0) * 1000, 1)
        report.append(entry)
    return report
