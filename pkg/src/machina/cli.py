"""``machina`` command-line front end.

Exit codes: 0 when everything holds or succeeded, 1 when a property fails
or a replayed choice is not enabled, 2 on usage or tool errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional

from machina.dsl import ModelError, load_model, validate
from machina.emitter import EmitterOptions, emit_mcrl2
from machina.engine import Engine, TraceError, parse_script, run_trace
from machina.lts import LimitExceeded, build_lts, export_aut
from machina.mucalc import check_all, load_suite

log = logging.getLogger("machina")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors use the tool-error code
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _limits(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-states", type=_positive_int)
    p.add_argument("--max-edges", type=_positive_int)
    p.add_argument("--timeout-s", type=_positive_float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="machina", description="Explore, check and translate machine-control models.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="model-check a formula suite")
    p.add_argument("model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", help="manifest of 'name = file.mcf' lines")
    src.add_argument("--formula", action="append", help="formula file (repeatable)")
    _limits(p)
    p.add_argument("--out", default="machina-out", help="report directory (default: %(default)s)")
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("explore", help="build the LTS and export it in .aut format")
    p.add_argument("model")
    _limits(p)
    p.add_argument("--out", help=".aut output file")
    p.add_argument("--tau-no-trans", action="store_true", help="write tau_no_trans as tau")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("replay", help="replay a trace script")
    p.add_argument("model")
    p.add_argument("script")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("emit", help="write the mCRL2 rendering")
    p.add_argument("model")
    p.add_argument("--out", help=".mcrl2 output file (default: stdout)")
    p.add_argument("--tau-no-trans", action="store_true", help="emit tau_no_trans as tau")
    p.add_argument("--no-observations", action="store_true", help="omit observation self-loops")

    p = sub.add_parser("validate", help="parse and validate a model")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")
    return ap


def _load(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return load_model(path)


def _rotate_at_inputs(label: str) -> bool:
    return label.startswith("inputs")


def _build(spec, args):
    return build_lts(
        spec, max_states=args.max_states, max_edges=args.max_edges, timeout_s=args.timeout_s
    )


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def write_witness(w, path: Path) -> None:
    lines = [l for l, _ in w.stem]
    if w.kind == "lasso":
        lines.append("# loop")
        lines += [l for l, _ in w.loop]
    path.write_text("\n".join(lines) + "\n")


def cmd_check(args) -> int:
    spec = _load(args.model)
    if args.suite:
        suite = load_suite(args.suite)
    else:
        suite = [(Path(f).stem, Path(f).read_text()) for f in args.formula]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"model": str(args.model), "results": []}
    t0 = time.perf_counter()
    try:
        lts = _build(spec, args)
    except LimitExceeded as e:
        report["error"] = str(e)
        report["lts"] = e.stats
        _write_report(out, report, args)
        print(f"machina: {e}", file=sys.stderr)
        return EXIT_ERROR
    report["lts"] = lts.stats()
    entries = check_all(lts, suite, timeout_s=args.timeout_s, rotate=_rotate_at_inputs)
    code = EXIT_OK
    for e in entries:
        r = {"name": e["name"], "holds": e["holds"], "ms": e["ms"]}
        if "witness" in e:
            wpath = out / f"{_safe_name(e['name'])}.trace"
            write_witness(e["witness"], wpath)
            r["witness_path"] = str(wpath)
            r["witness"] = e["witness"].to_json()
        if "witness_error" in e:
            r["witness_error"] = e["witness_error"]
        if "error" in e:
            r["error"] = e["error"]
            code = EXIT_ERROR
        elif not e["holds"] and code == EXIT_OK:
            code = EXIT_FAIL
        report["results"].append(r)
    report["total_ms"] = round((time.perf_counter() - t0) * 1000, 1)
    _write_report(out, report, args)
    if not args.json:
        for r in report["results"]:
            verdict = "error" if r["holds"] is None else ("true" if r["holds"] else "false")
            extra = f"  witness: {r['witness_path']}" if "witness_path" in r else ""
            print(f"{r['name']}: {verdict} ({r['ms']:.0f} ms){extra}")
    return code


def _write_report(out: Path, report: dict, args) -> None:
    text = json.dumps(report, indent=2)
    (out / "report.json").write_text(text + "\n")
    if args.json:
        print(text)


def cmd_explore(args) -> int:
    spec = _load(args.model)
    try:
        lts = _build(spec, args)
    except LimitExceeded as e:
        print(f"machina: {e}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        tau = ("tau_no_trans",) if args.tau_no_trans else ()
        with open(args.out, "w", newline="\n") as fh:
            export_aut(lts, fh, tau_labels=tau)
    st = lts.stats()
    if args.json:
        print(json.dumps(st))
    else:
        print(f"states: {st['states']}  edges: {st['edges']}  depth: {st['depth']}")
    return EXIT_OK


def cmd_replay(args) -> int:
    spec = _load(args.model)
    choices = parse_script(Path(args.script).read_text())
    eng = Engine(spec)
    print(f"# replay {args.model}: {len(choices)} choices")
    try:
        trace = run_trace(spec, choices, engine=eng)
    except TraceError as e:
        print(f"machina: {e}", file=sys.stderr)
        return EXIT_FAIL
    for k, (label, conf) in enumerate(trace, 1):
        if args.json:
            print(json.dumps({"step": k, "label": str(label), "state": eng.describe(conf)}))
        else:
            print(f"{k:4d}  {str(label):40s}  {eng.describe(conf)}")
    return EXIT_OK


def cmd_emit(args) -> int:
    spec = _load(args.model)
    opts = EmitterOptions(
        include_observation_loops=not args.no_observations,
        relabel_no_trans_to_tau=args.tau_no_trans,
    )
    text = emit_mcrl2(spec, opts)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _load(args.model)
    diags = validate(spec)
    if args.json:
        print(json.dumps([
            {"severity": d.severity, "code": d.code, "line": d.location.line,
             "col": d.location.col, "message": d.message}
            for d in diags
        ]))
    else:
        for d in diags:
            print(d.format(args.model))
        print(f"{args.model}: ok")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "explore": cmd_explore, "replay": cmd_replay,
    "emit": cmd_emit, "validate": cmd_validate,
}


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("MACHINA_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ModelError as e:
        for d in e.diagnostics:
            print(d.format(args.model), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as e:
        print(f"machina: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
