"""Command-line entry point: ``simulate``, ``filter`` and ``experiment``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .metrics import OspaParams
from .models import ParameterError
from .ntype_phd import MeasurementFrame
from .plots import line_chart
from .sim import (
    MODES,
    default_scenario,
    load_scenario,
    run_experiment,
    run_filter,
    simulate,
)

log = logging.getLogger("ntype_gmphd")

MEASUREMENT_COLUMNS = ("step", "detector", "x", "y", "origin")
TRUTH_COLUMNS = ("step", "target_id", "type", "x", "y", "vx", "vy")
ESTIMATE_COLUMNS = ("step", "type", "x", "y")
CARDINALITY_COLUMNS = ("step", "type", "expected_cardinality")
RUN_COLUMNS = ("mode", "confusion", "run", "seed", "step", "ospa",
               "truth_count", "estimated_count", "expected_cardinality")


def fmt(x: float) -> str:
    return f"{x:.9g}"


def quantize(x: float) -> float:
    """The value a reader recovers from the 9-significant-digit CSV text."""
    return float(fmt(x))


def _parse_levels(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        levels = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad --confusion list {text!r}") from exc
    if not levels or any(not 0 <= v <= 1 for v in levels):
        raise ParameterError("--confusion values must lie in [0, 1]")
    return levels


def _modes(mode: str) -> tuple:
    return MODES if mode == "both" else (mode,)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _scenario(args):
    sc = load_scenario(args.scenario) if args.scenario else default_scenario()
    levels = _parse_levels(args.confusion)
    if levels and args.command != "experiment":
        sc = sc.with_confusion(levels[0])
    return sc


def _seed(args, scenario) -> int:
    return scenario.seed if args.seed is None else args.seed


def read_measurement_log(path, n_types: int, horizon: int) -> list[MeasurementFrame]:
    per_step = [[[] for _ in range(n_types)] for _ in range(horizon)]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MEASUREMENT_COLUMNS:
            raise ParameterError(f"{path}: expected columns {','.join(MEASUREMENT_COLUMNS)}")
        for row in reader:
            k, det = int(row["step"]), int(row["detector"])
            if not (1 <= k <= horizon and 1 <= det <= n_types):
                raise ParameterError(f"{path}: row out of range: {row}")
            per_step[k - 1][det - 1].append((float(row["x"]), float(row["y"])))
    return [MeasurementFrame(k + 1, tuple(np.array(z, dtype=float).reshape(-1, 2) for z in sets))
            for k, sets in enumerate(per_step)]


def cmd_simulate(args) -> None:
    sc = _scenario(args)
    truth, frames = simulate(sc, 0, _seed(args, sc))
    meas_rows, truth_rows = [], []
    for frame in frames:
        for j, (z, org) in enumerate(zip(frame.per_detector, frame.origins)):
            for (x, y), o in zip(z, org):
                meas_rows.append((frame.time_index, j + 1, fmt(x), fmt(y), o if o else "clutter"))
    for k, step_truth in enumerate(truth):
        for tp in step_truth:
            truth_rows.append((k + 1, tp.target_id, tp.type_id + 1, *(fmt(v) for v in tp.state)))
    _write_csv(args.out / "measurements.csv", MEASUREMENT_COLUMNS, meas_rows)
    _write_csv(args.out / "truth.csv", TRUTH_COLUMNS, truth_rows)
    log.info("wrote %d measurements over %d steps", len(meas_rows), len(frames))


def cmd_filter(args) -> None:
    sc = _scenario(args)
    if args.measurements:
        frames = read_measurement_log(args.measurements, sc.n_types, sc.horizon)
    else:
        _, frames = simulate(sc, 0, _seed(args, sc))
    for mode in _modes(args.mode):
        est_rows, card_rows = [], []
        for k, (extracted, cards, _) in enumerate(run_filter(sc, frames, mode)):
            for i, states in enumerate(extracted):
                for s in states:
                    est_rows.append((k + 1, i + 1, fmt(s[0]), fmt(s[1])))
                card_rows.append((k + 1, i + 1, fmt(cards[i])))
        _write_csv(args.out / f"estimates_{mode}.csv", ESTIMATE_COLUMNS, est_rows)
        _write_csv(args.out / f"cardinality_{mode}.csv", CARDINALITY_COLUMNS, card_rows)
        log.info("%s: %d extracted states", mode, len(est_rows))


def summarize(report, levels, modes) -> dict:
    """Summary cells computed from the quantized per-step values in runs.csv."""
    cells = []
    for mode in modes:
        for level in levels:
            runs = report.select(level, mode)
            q = np.array([[quantize(v) for v in r.ospa] for r in runs])
            cells.append({
                "mode": mode,
                "confusion": level,
                "mean_ospa": float(np.mean(q)),
                "std_ospa": float(np.std(q.mean(axis=1))),
                "runs": len(runs),
                "mean_cardinality_error": report.mean_cardinality_error(level, mode),
            })
    return {
        "seed": report.seed,
        "mc_runs": report.mc_runs,
        "ospa": {"order_p": float(OspaParams().order_p), "cutoff_c": float(OspaParams().cutoff_c)},
        "seeds": sorted({r.seed for r in report.runs}),
        "cells": cells,
    }


def cmd_experiment(args) -> None:
    sc = _scenario(args)
    levels = _parse_levels(args.confusion) or [0.3, 0.6, 0.9]
    modes = _modes(args.mode)
    if args.mc_runs < 1:
        raise ParameterError("--mc-runs must be >= 1")
    report = run_experiment(sc, levels, args.mc_runs, args.mode, seed=_seed(args, sc),
                            workers=args.workers)
    rows = []
    for mode in modes:
        for level in levels:
            for r in report.select(level, mode):
                for k in range(len(r.ospa)):
                    rows.append((mode, fmt(level), r.run_index, r.seed, k + 1, fmt(r.ospa[k]),
                                 int(r.truth_count[k]), int(r.estimated_count[k]),
                                 fmt(r.expected_count[k])))
    _write_csv(args.out / "runs.csv", RUN_COLUMNS, rows)
    summary = summarize(report, levels, modes)
    with open(args.out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    for cell in summary["cells"]:
        log.info("%-11s confusion %.2f  mean OSPA %.2f m (std %.2f)", cell["mode"],
                 cell["confusion"], cell["mean_ospa"], cell["std_ospa"])
    if args.plots:
        write_plots(report, levels, modes, args.out)


def write_plots(report, levels, modes, out: Path) -> None:
    focus = 0.6 if any(np.isclose(0.6, levels)) else levels[0]
    steps = np.arange(1, len(report.runs[0].ospa) + 1)
    card = [("truth", steps, report.truth_curve(focus, modes[0]))]
    card += [(m, steps, report.cardinality_curve(focus, m)) for m in modes]
    (out / "cardinality.svg").write_text(line_chart(
        card, f"Cardinality (confusion {focus:g})", "step", "targets"))
    curves = [(m, steps, report.ospa_curve(focus, m)) for m in modes]
    (out / "ospa.svg").write_text(line_chart(
        curves, f"OSPA (p=1, c=100, confusion {focus:g})", "step", "OSPA [m]"))
    sweep = [(m, np.array(levels), np.array([report.mean_ospa(l, m) for l in levels])) for m in modes]
    (out / "ospa_vs_confusion.svg").write_text(line_chart(
        sweep, "Mean OSPA vs confusion probability", "confusion probability", "mean OSPA [m]"))


COMMANDS = {"simulate": cmd_simulate, "filter": cmd_filter, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ntype-gmphd",
                                description="N-type GM-PHD filtering experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", type=Path, help="scenario JSON (default: packaged quad scenario)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="64-bit seed (default: the scenario's)")
    p.add_argument("--mc-runs", type=int, default=50)
    p.add_argument("--confusion", help="comma-separated confusion probabilities")
    p.add_argument("--mode", choices=("ntype", "independent", "both"), default="both")
    p.add_argument("--plots", action="store_true", help="write SVG plots (experiment)")
    p.add_argument("--measurements", type=Path, help="measurement CSV to filter instead of simulating")
    p.add_argument("--workers", type=int, default=1, help="parallel Monte-Carlo worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args)
    except (OSError, ParameterError, ValueError) as exc:
        where = f" ({exc.filename})" if isinstance(exc, OSError) and exc.filename else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
