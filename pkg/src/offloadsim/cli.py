"""Command-line front end.

Subcommands: synth, validate, calibrate, reliability, sweep, report, pareto.
Every flag can also come from a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes); command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import calibration, controller, experience, plots, reliability, synth
from .trace import OBJECT_TAGS, Trace, TraceError, load_trace, split_by_tag, validate, write_trace

log = logging.getLogger("offloadsim")


class CLIError(Exception):
    """A user-facing error; the message names the offending flag or field."""


# -- argument helpers -----------------------------------------------------------

def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma-separated list of thresholds."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            k = int(round((b - a) / step))
            grid = [round(a + i * step, 10) for i in range(k + 1)]
        else:
            grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"--grid: cannot parse {text!r}") from None
    if not grid or any(not 0.0 <= g <= 1.0 for g in grid):
        raise CLIError("--grid: thresholds must be non-empty and lie in [0, 1]")
    return grid


def read_config(path) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CLIError(f"--config: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"--config: line {lineno} is not 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load(path) -> Trace:
    if path is None:
        raise CLIError("--trace: a trace file is required")
    try:
        return load_trace(path)
    except FileNotFoundError:
        raise CLIError(f"--trace: file not found: {path}") from None
    except TraceError as exc:
        raise CLIError(f"--trace: {path}: {exc}") from None


def _latency(args) -> experience.LatencyConfig:
    return experience.LatencyConfig(network_rtt_ms=args.rtt_ms, deadline_ms=args.deadline_ms)


def _penalties(args) -> experience.PenaltyTable:
    try:
        return experience.PenaltyTable.parse(args.penalties)
    except ValueError as exc:
        raise CLIError(f"--penalties: {exc}") from None


def _grid(args) -> list[float]:
    return parse_grid(args.grid) if args.grid else controller.default_grid()


# -- commands -----------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.out is None:
        raise CLIError("--out: output trace path is required")
    if args.preset:
        try:
            trace = synth.generate_preset(args.preset, args.n, args.seed,
                                          seen_fraction=args.mix_seen_fraction, sharpen=args.sharpen)
        except ValueError as exc:
            raise CLIError(f"--preset: {exc}") from None
    else:
        try:
            params = synth.SynthParams(
                n=args.n, num_classes=args.num_classes, edge_acc=args.edge_acc, cloud_acc=args.cloud_acc,
                overconfidence_sharpen=args.sharpen, unseen_fraction=args.unseen_fraction,
                feature_dim=args.feature_dim, edge_latency_ms=args.edge_latency_ms,
                cloud_latency_ms=args.cloud_latency_ms, seed=args.seed)
            trace = synth.generate(params)
        except ValueError as exc:
            raise CLIError(f"synth parameters: {exc}") from None
    write_trace(trace, args.out)
    print(json.dumps(synth.marginals(trace), sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    trace = _load(args.trace)
    problems = validate(trace)
    for p in problems:
        print(p)
    if problems:
        return 1
    print(f"ok: {len(trace)} records, {trace.num_classes} classes")
    return 0


def cmd_calibrate(args) -> int:
    trace = _load(args.trace)
    if args.out is None:
        raise CLIError("--out: output directory is required")
    out = Path(args.out)
    if args.model:
        try:
            model = calibration.loads_model(Path(args.model).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError(f"--model: {exc}") from None
        method = model
    else:
        if args.method not in calibration.METHODS:
            raise CLIError(f"--method: unknown method {args.method!r}")
        if args.method == "dac" and not trace.has_features:
            raise CLIError("--method dac: trace records lack the 'features' field")
        method = args.method
    kwargs = {}
    if isinstance(method, str):
        kwargs = {"lam": args.lam} if method == "dc" else {"k": args.k} if method == "dac" else {}
    try:
        calibrated, model, report = calibration.calibrate_trace(
            trace, method, args.fit_split, args.seed, num_bins=args.bins, **kwargs)
    except ValueError as exc:
        raise CLIError(f"--method {getattr(method, 'name', method)}: {exc}") from None
    out.mkdir(parents=True, exist_ok=True)
    write_trace(calibrated, out / "calibrated.jsonl")
    _write(out / "model.json", calibration.dumps_model(model) + "\n")
    _write(out / "fit_report.json", json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n")
    print(f"method={report.method} pre_ece={report.eval_pre_ece!r} post_ece={report.eval_post_ece!r}")
    return 0


def _split(trace: Trace, which: Optional[str]) -> Trace:
    if which is None:
        raise CLIError("--split: choose one of all, seen, unseen")
    return trace if which == "all" else split_by_tag(trace, which)


def cmd_reliability(args) -> int:
    trace = _split(_load(args.trace), args.split)
    if len(trace) == 0:
        raise CLIError("--trace: no records in the selected split")
    report = reliability.bin_stats(trace, args.bins)
    text = reliability.reliability_csv(report)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    trace = _load(args.trace)
    if len(trace) == 0:
        raise CLIError("--trace: cannot sweep an empty trace")
    if args.out is None:
        raise CLIError("--out: output directory is required")
    out = Path(args.out)
    result = controller.sweep(trace, _grid(args))
    _write(out / "sweep.csv", result.to_csv())
    _write(out / "reliability.csv", reliability.reliability_csv(reliability.bin_stats(trace, args.bins)))
    print(json.dumps(result.means, sort_keys=True))
    return 0


def _report_inputs(args):
    """(label, evaluation trace) pairs for every requested trace x method."""
    specs = args.trace or []
    if not specs:
        raise CLIError("--trace: at least one trace is required")
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    for m in methods:
        if m not in calibration.METHODS:
            raise CLIError(f"--method: unknown method {m!r}")
    split = any(m != "none" for m in methods)
    out = []
    for spec in specs:
        label, _, path = spec.rpartition("=")
        trace = _load(path)
        if not label:
            label = Path(path).stem
        for m in methods:
            name = m if len(specs) == 1 else f"{label}:{m}"
            if split:
                kwargs = {"lam": args.lam} if m == "dc" else {"k": args.k} if m == "dac" else {}
                try:
                    ev, _, _ = calibration.calibrate_trace(trace, m, args.fit_split, args.seed,
                                                           num_bins=args.bins, **kwargs)
                except ValueError as exc:
                    raise CLIError(f"--method {m}: {exc}") from None
            else:
                ev = trace
            if len(ev) == 0:
                raise CLIError(f"--trace: {path}: no records to evaluate")
            out.append((name, ev))
    return out


def cmd_report(args) -> int:
    if args.out is None:
        raise CLIError("--out: output directory is required")
    out = Path(args.out)
    grid = _grid(args)
    cfg, pen = _latency(args), _penalties(args)
    inputs = _report_inputs(args)

    points, baselines, uii_series, minima = [], [], {}, []
    for name, trace in inputs:
        pts = experience.operating_points(trace, grid, cfg, pen, method=name)
        points.extend(pts)
        for b in experience.baseline_points(trace, cfg):
            baselines.append(replace(b, method=f"{name}:{b.method}"))
        dist = experience.scenario_distribution(trace, grid)
        safe = name.replace(":", "_").replace("/", "_")
        _write(out / f"scenarios_{safe}.csv", experience.scenario_csv(dist))
        _write(out / f"scenarios_{safe}.svg", plots.stack_plot(
            grid, {s.name: [c[s] for _, c in dist] for s in experience.Scenario},
            title=f"Scenarios over threshold ({name})", xlabel="threshold", ylabel="records"))
        th, u = experience.min_uii_threshold(trace, grid, cfg, pen)
        minima.append((name, th, u))
        uii_series[name] = (grid, [p.uii for p in pts])

    _write(out / "operating_points.csv", experience.operating_points_csv(points, pareto=True))
    _write(out / "baselines.csv", experience.operating_points_csv(baselines))
    front = experience.pareto_front(points + baselines)
    _write(out / "pareto.csv", experience.operating_points_csv(front))
    lines = ["series,threshold,uii"] + [f"{n},{t!r},{u!r}" for n, t, u in minima]
    _write(out / "uii_min.csv", "\n".join(lines) + "\n")

    scatter = {}
    for p in points + baselines:
        scatter.setdefault(p.method, []).append((p.mean_latency_ms, p.accuracy))
    _write(out / "pareto.svg", plots.scatter_plot(
        scatter, title="Accuracy vs. latency", xlabel="mean latency (ms)", ylabel="accuracy",
        front=[(p.mean_latency_ms, p.accuracy) for p in front]))
    _write(out / "uii.svg", plots.line_plot(
        uii_series, title="Upsetness vs. threshold", xlabel="threshold", ylabel="UII",
        highlight={n: (t, u) for n, t, u in minima}))
    for n, t, u in minima:
        print(f"{n}: min UII {u:.4f} at threshold {t}")
    return 0


def cmd_pareto(args) -> int:
    if not args.points:
        raise CLIError("--points: an operating-points CSV is required")
    try:
        pts = experience.parse_operating_points_csv(Path(args.points).read_text())
    except (OSError, KeyError, ValueError) as exc:
        raise CLIError(f"--points: {exc}") from None
    text = experience.operating_points_csv(experience.pareto_front(pts))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offloadsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=True):
        p.add_argument("--config", help="key = value file mirroring the flags")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.add_argument("--bins", type=int, default=10)
        if trace:
            p.add_argument("--trace")

    p = sub.add_parser("synth", help="generate a synthetic trace")
    common(p, trace=False)
    p.add_argument("--preset", choices=synth.PRESET_NAMES)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--mix-seen-fraction", type=float, default=0.8)
    p.add_argument("--sharpen", type=float, default=2.0)
    p.add_argument("--num-classes", type=int, default=13)
    p.add_argument("--edge-acc", type=float, default=0.5)
    p.add_argument("--cloud-acc", type=float, default=0.5)
    p.add_argument("--unseen-fraction", type=float, default=0.0)
    p.add_argument("--feature-dim", type=int, default=0)
    p.add_argument("--edge-latency-ms", type=float, default=synth.EDGE_LATENCY_MS)
    p.add_argument("--cloud-latency-ms", type=float, default=synth.CLOUD_LATENCY_MS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check a trace file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", help="fit a calibrator and transform held-out records")
    common(p)
    p.add_argument("--method", default="ts")
    p.add_argument("--model", help="apply a previously saved model to the whole trace")
    p.add_argument("--fit-split", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reliability", help="reliability diagram CSV")
    common(p)
    p.add_argument("--split", choices=("all",) + OBJECT_TAGS)
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("sweep", help="decision metrics over a threshold grid")
    common(p)
    p.add_argument("--grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="operating points, scenarios, Pareto front and plots")
    common(p, trace=False)
    p.add_argument("--trace", action="append", help="[label=]path; repeatable")
    p.add_argument("--method", default="none", help="comma-separated calibration methods")
    p.add_argument("--grid")
    p.add_argument("--rtt-ms", type=float, default=50.0)
    p.add_argument("--deadline-ms", type=float, default=150.0)
    p.add_argument("--penalties", default="0,1,5,6,7")
    p.add_argument("--fit-split", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pareto", help="non-dominated subset of an operating-points CSV")
    common(p, trace=False)
    p.add_argument("--points")
    p.set_defaults(func=cmd_pareto)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    values = read_config(known.config)
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    by_dest = {a.dest: a for a in sub._actions}
    for key, raw in values.items():
        if key not in by_dest:
            raise CLIError(f"--config: unknown key {key!r}")
        action = by_dest[key]
        conv = action.type or str
        try:
            value = [conv(v) for v in raw.split(";")] if isinstance(action, argparse._AppendAction) else conv(raw)
        except ValueError:
            raise CLIError(f"--config: bad value for {key!r}: {raw!r}") from None
        sub.set_defaults(**{key: value})
    # re-parse so explicit flags override the file
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
