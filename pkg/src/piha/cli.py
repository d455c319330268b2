"""Command-line front end.

::

    piha simulate (--model F | --fwr ...) [--x0 a,b,c] [--horizon T] [--spec NAME] [--out PATH]
    piha explore  (--model F | --fwr ...) --spec NAME [--out DIR]
    piha verify   (--model F | --fwr ...) --spec NAME [--max-depth K] [--out DIR]
    piha ingest   --trace F.csv (--model F | --fwr ...) [--spec NAME] [--out PATH]

Exit codes: 0 safe/Pass, 1 violation/Fail, 2 Inconclusive, 3 usage or
model error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .checker import (FAIL, INCONCLUSIVE, PASS, SPLIT_RULES, RefineConfig, VerificationResult, check_trace_safety,
                      explore, verify_safety)
from .flowpipe import ReachConfig, ReachError, write_segments_csv
from .fwr import CircuitParams, build_fwr_piha, fwr_integrator_config, fwr_properties, fwr_reach_dt
from .model import PIHA, ModelError, SafetySpec
from .modelfile import ModelConfigs, ModelFileError, ParsedModel, load_model_file
from .sim import HybridTrace, SimulationError, ingest_external_trace, read_trace_csv, simulate_hybrid, write_trace_csv

__all__ = ["EXIT_CODES", "main", "run_command", "write_result", "read_result", "load_fwr", "UsageError"]

log = logging.getLogger(__name__)

EXIT_CODES = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}
EXIT_USAGE = 3

_FWR_FLAGS = ("amp", "freq", "r", "c", "rf", "i0", "p2_threshold", "ics_vout")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _interval(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}")
    return v[0], v[1]


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_argument_group("model")
    which = src.add_mutually_exclusive_group()
    which.add_argument("--model", metavar="FILE", help="model file")
    which.add_argument("--fwr", action="store_true", help="built-in full-wave rectifier")
    fwr = common.add_argument_group("rectifier overrides (with --fwr)")
    fwr.add_argument("--amp", type=float, help="input amplitude A (V)")
    fwr.add_argument("--freq", type=float, help="input frequency f (Hz)")
    fwr.add_argument("--r", type=float, help="load resistance R (ohm)")
    fwr.add_argument("--c", type=float, help="load capacitance C (F)")
    fwr.add_argument("--rf", type=float, help="diode forward resistance Rf (ohm)")
    fwr.add_argument("--i0", type=float, help="diode leakage current I0 (A)")
    fwr.add_argument("--p2-threshold", type=float, help="P2 voltage threshold (V)")
    fwr.add_argument("--ics-vout", type=_interval, metavar="LO,HI", help="initial vout interval")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="piha", description="Simulate and verify polyhedral-invariant hybrid automata.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="simulate one trace")
    s.add_argument("--x0", type=_floats, help="initial state (default: center of the initial set)")
    s.add_argument("--horizon", type=float, help="end time (default: model horizon)")
    s.add_argument("--spec", help="check the trace against this spec")
    s.add_argument("--out", default="-", help="CSV file, directory, or - for stdout")

    e = sub.add_parser("explore", parents=[common], help="simulate from the initial-set vertices and center")
    e.add_argument("--spec", required=True)
    e.add_argument("--out", default=".", help="output directory")

    v = sub.add_parser("verify", parents=[common], help="flow-pipe verification with refinement")
    v.add_argument("--spec", required=True)
    v.add_argument("--max-depth", type=int, help="refinement depth (default from the model)")
    v.add_argument("--split-rule", choices=SPLIT_RULES)
    v.add_argument("--out", default=".", help="output directory")
    v.add_argument("--dump-segments", metavar="CSV", help="write every flow-pipe segment here")
    v.add_argument("--deterministic", action="store_true", help="report wall time as 0")

    i = sub.add_parser("ingest", parents=[common], help="label and check an external trace")
    i.add_argument("--trace", required=True, metavar="CSV")
    i.add_argument("--spec")
    i.add_argument("--out", default="-", help="CSV file, directory, or - for stdout")
    return p


@dataclass
class _Loaded:
    h: PIHA
    specs: list[SafetySpec]
    configs: ModelConfigs

    def spec(self, name: str) -> SafetySpec:
        return ParsedModel(self.h, self.specs, self.configs).spec(name)


def load_fwr(p: CircuitParams, p2_threshold: float = 3.0, ics_vout=(3.8, 4.2)) -> ParsedModel:
    """The built-in rectifier with the run configuration the CLI uses."""
    icfg = fwr_integrator_config(p)
    cfgs = ModelConfigs(icfg, ReachConfig(dt=fwr_reach_dt(p), integrator=icfg), RefineConfig())
    return ParsedModel(build_fwr_piha(p, ics_vout), list(fwr_properties(p, p2_threshold)), cfgs)


def _load(args) -> _Loaded:
    given = [f for f in _FWR_FLAGS if getattr(args, f) is not None]
    if args.fwr:
        d = CircuitParams()
        p = CircuitParams(R=_pick(args.r, d.R), C=_pick(args.c, d.C), Rf=_pick(args.rf, d.Rf),
                          I0=_pick(args.i0, d.I0), A=_pick(args.amp, d.A), f=_pick(args.freq, d.f))
        m = load_fwr(p, _pick(args.p2_threshold, 3.0), _pick(args.ics_vout, (3.8, 4.2)))
    elif args.model:
        if given:
            raise UsageError(f"--{given[0].replace('_', '-')} only applies with --fwr")
        m = load_model_file(args.model)
    else:
        raise UsageError("one of --model or --fwr is required")
    return _Loaded(m.piha, m.specs, m.configs)


def _pick(v, default):
    return default if v is None else v


def _spec(m: _Loaded, name: str | None) -> SafetySpec | None:
    if name is None:
        return None
    try:
        return m.spec(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _csv_target(out: str, default_name: str) -> Path | None:
    if out == "-":
        return None
    path = Path(out)
    if path.suffix.lower() == ".csv":
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
    path.mkdir(parents=True, exist_ok=True)
    return path / default_name


def _emit_trace(tr: HybridTrace, out: str, default_name: str) -> None:
    target = _csv_target(out, default_name)
    if target is None:
        from .sim import trace_to_csv
        sys.stdout.write(trace_to_csv(tr))
    else:
        write_trace_csv(tr, target)
        print(f"trace: {target}", file=sys.stderr)


def _report_violation(name: str, where) -> None:
    if where is None:
        print(f"{name}: safe", file=sys.stderr)
    else:
        print(f"{name}: violated ({where[1]}) at t={where[0]:.9g}", file=sys.stderr)


def _cmd_simulate(args) -> int:
    m = _load(args)
    spec = _spec(m, args.spec)
    if args.x0 is None:
        x0 = geo.chebyshev_center(m.h.ics)[0]
    else:
        x0 = np.array(args.x0)
        if x0.size != m.h.dim:
            raise UsageError(f"--x0 has {x0.size} entries, the model has {m.h.dim} variables")
    T = m.h.horizon if args.horizon is None else args.horizon
    tr = simulate_hybrid(m.h, x0, T, m.configs.integrator, check_ics=False)
    _emit_trace(tr, args.out, "trace.csv")
    if spec is None:
        return 0
    safe, where = check_trace_safety(tr, spec, m.h)
    _report_violation(spec.name, where)
    return 0 if safe else 1


def _cmd_explore(args) -> int:
    m = _load(args)
    spec = _spec(m, args.spec)
    all_safe, reports = explore(m.h, spec, m.configs.integrator)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    points = []
    for k, r in enumerate(reports):
        entry = {"index": k, "x0": [float(v) for v in r.x0], "safe": r.safe}
        if r.violation is not None:
            entry["violation"] = {"t": r.violation[0], "kind": r.violation[1]}
        if r.error is not None:
            entry["error"] = r.error
        if r.trace is not None:
            name = f"point_{k}.csv"
            write_trace_csv(r.trace, out / name)
            entry["trace_csv_path"] = name
        points.append(entry)
        state = {True: "safe", False: "VIOLATION", None: "error"}[r.safe]
        print(f"point {k} {np.array2string(r.x0, precision=6)}: {state}", file=sys.stderr)
    unknown = any(r.safe is None for r in reports)
    verdict = FAIL if not all_safe else (INCONCLUSIVE if unknown else PASS)
    doc = {"spec_name": spec.name, "all_safe": all_safe, "verdict": verdict, "points": points}
    _write_json(doc, out / "explore.json")
    print(f"{spec.name}: {verdict}", file=sys.stderr)
    return EXIT_CODES[verdict]


def _cmd_verify(args) -> int:
    m = _load(args)
    spec = _spec(m, args.spec)
    refine = m.configs.refine
    try:
        refine = RefineConfig(max_depth=_pick(args.max_depth, refine.max_depth),
                              split_axis_rule=_pick(args.split_rule, refine.split_axis_rule))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    reach = m.configs.reach or ReachConfig(dt=m.h.horizon / 400, integrator=m.configs.integrator)
    res = verify_safety(m.h, spec, reach, refine, m.configs.integrator, keep_segments=bool(args.dump_segments))
    if args.deterministic:
        res.wall_time = 0.0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_result(res, out / "result.json")
    if args.dump_segments:
        write_segments_csv(res.segments, args.dump_segments)
    print(f"{spec.name}: {res.verdict} (partitions {res.partitions_processed}, "
          f"segments {res.segments_total}, {res.wall_time:.2f} s) -> {out / 'result.json'}", file=sys.stderr)
    return EXIT_CODES[res.verdict]


def _cmd_ingest(args) -> int:
    m = _load(args)
    spec = _spec(m, args.spec)
    rows, _ = read_trace_csv(args.trace)
    tr = ingest_external_trace(rows, m.h)
    _emit_trace(tr, args.out, "labeled.csv")
    for ev in tr.events:
        print(f"event t={ev.t:.9g} {ev.source} -> {ev.target}", file=sys.stderr)
    if spec is None:
        return 0
    safe, where = check_trace_safety(tr, spec, m.h)
    _report_violation(spec.name, where)
    return 0 if safe else 1


_COMMANDS = {"simulate": _cmd_simulate, "explore": _cmd_explore, "verify": _cmd_verify, "ingest": _cmd_ingest}


def run_command(argv: list[str] | None = None) -> int:
    """Run one CLI invocation and return its exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"piha {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelFileError as exc:
        print(f"{getattr(args, 'model', None) or 'model'}:{exc.line}:{exc.col}: {exc.reason}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, SimulationError, ReachError, geo.GeometryError, OSError) as exc:
        print(f"piha {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())


def _write_json(doc: dict, path: Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)}: {exc.strerror}") from exc


def write_result(res: VerificationResult, path: str | os.PathLike) -> None:
    """Write ``res`` as JSON; a counterexample goes to a CSV next to it.

    The CSV path is stored relative to the JSON file.
    """
    path = Path(path)
    doc = {
        "spec_name": res.spec_name,
        "verdict": res.verdict,
        "iterations": res.iterations,
        "partitions_processed": res.partitions_processed,
        "segments_total": res.segments_total,
        "wall_time_s": float(res.wall_time),
    }
    if res.counterexample is not None:
        csv_path = path.with_name(path.stem + ".counterexample.csv")
        write_trace_csv(res.counterexample, csv_path)
        doc["counterexample_csv_path"] = csv_path.name
    _write_json(doc, path)


def read_result(path: str | os.PathLike) -> VerificationResult:
    """Inverse of :func:`write_result`, reloading the counterexample trace."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cex = None
    if "counterexample_csv_path" in doc:
        rows, modes = read_trace_csv(path.parent / doc["counterexample_csv_path"])
        cex = HybridTrace(np.array([t for t, _ in rows]), np.array([x for _, x in rows]), modes or [], [], "loaded")
    return VerificationResult(
        spec_name=doc["spec_name"], verdict=doc["verdict"], counterexample=cex,
        iterations=doc["iterations"], segments_total=doc["segments_total"],
        partitions_processed=doc["partitions_processed"], wall_time=doc["wall_time_s"])
