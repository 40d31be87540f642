"""Command line entry point: ``python -m leoslice <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import demand as dm
from .errors import LeoSliceError
from .predictor import fit_predictor
from .simkit import (SCHEMES, ModelCache, RunReport, file_label, format_table, load_config, load_trace, report,
                     run, sweep_elevation)
from .slicer import SliceProblem, solve_window

log = logging.getLogger("leoslice")


def _write_reports(reports, out):
    if out is None:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        r.save(out / f"report_{file_label(r.scheme)}.json")
    report(reports, out)


def cmd_simulate(args):
    cfg = load_config(args.config)
    schemes = args.scheme or [cfg.scheme]
    gammas = args.gamma or [cfg.gamma]
    cache = ModelCache()
    reports = []
    for scheme in schemes:
        for g in (gammas if scheme in ("FDTRS", "ADTRS") else gammas[:1]):
            reports.append(run(cfg, scheme, g, model_cache=cache))
    print(format_table(reports))
    print(f"config digest {cfg.digest()}")
    _write_reports(reports, args.out)
    if args.events and args.out:
        from .twin import write_event_log
        for r in reports:
            if r.events:
                write_event_log(r.events, Path(args.out) / f"events_{file_label(r.scheme)}.csv")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    pc = cfg.predictor
    trace = load_trace(cfg)
    feats = dm.trace_features(trace, cfg.slot_duration)
    end = cfg.demand.warmup_slots
    data = feats[max(0, end - pc.train_slots):end]
    res = fit_predictor(data, pc.hidden_size, pc.history_length, pc.prior_std, args.epochs or pc.epochs,
                        pc.learning_rate, pc.kl_weight, seed=cfg.seeds.training,
                        mc_samples=pc.train_mc_samples)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    res.model.save(out)
    loss_path = out.with_suffix(".loss.csv")
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch", "loss"])
        for i, v in enumerate(res.losses):
            wr.writerow([i, repr(float(v))])
    status = "converged" if res.converged else "NOT converged"
    print(f"trained on {len(data)} slots, final loss {res.losses[-1]:.4f} ({status})")
    print(f"checkpoint {out}\nloss curve {loss_path}")
    return 0


def cmd_solve(args):
    problem = SliceProblem.load(args.instance)
    dec = solve_window(problem, exact_limit=args.exact_limit)
    print(json.dumps(dec.as_dict(), indent=1))
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    angles = [float(a) for a in args.elevations.split(",") if a.strip()]
    reports = sweep_elevation(cfg, angles, args.scheme, args.gamma)
    print(f"{'elevation':>9}{'avg resource':>16}{'violation':>11}")
    for a, r in zip(angles, reports):
        print(f"{a:>8g}°{r.avg_resource_hz / 1e6:>12.1f} MHz{100 * r.violation_rate:>9.1f} %")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for a, r in zip(angles, reports):
            r.save(out / f"report_{file_label(r.scheme)}_elev{a:g}.json")
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["elevation_deg", "scheme", "avg_resource_hz", "delay_cost_s", "violation_rate",
                         "repredictions"])
            for a, r in zip(angles, reports):
                wr.writerow([a, r.scheme, repr(r.avg_resource_hz), repr(r.avg_delay_s),
                             repr(r.violation_rate), r.repredictions])
    return 0


def cmd_report(args):
    src = Path(args.inp)
    files = sorted(src.glob("report_*.json"))
    if not files:
        print(f"no report_*.json files in {src}", file=sys.stderr)
        return 1
    reports = [RunReport.load(f) for f in files]
    print(format_table(reports))
    report(reports, args.out or src)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="leoslice", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one or more schemes on a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--scheme", action="append", choices=SCHEMES)
    p.add_argument("--gamma", action="append", type=float)
    p.add_argument("--out", help="directory for report JSON and CSV files")
    p.add_argument("--events", action="store_true", help="also write the twin event logs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the predictor on the warm-up slots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one window instance and print the decision")
    p.add_argument("--instance", required=True)
    p.add_argument("--exact-limit", type=int, default=12)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="repeat a run over minimum elevation angles")
    p.add_argument("--config", required=True)
    p.add_argument("--elevations", default="10,20,30,40")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--gamma", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize saved run reports")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LeoSliceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
