"""Command-line entry point: ``mmwtrack <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness.config import ExperimentConfig
from .harness.experiments import (
    ACQ_ARMS,
    INTEGRATED_ARMS,
    TRACK_ARMS,
    IntegratedSummary,
    calibrate_detector,
    run_integrated,
    run_sweep,
    summarize,
)
from .harness.io import write_csv, write_manifest
from .harness.metrics import ratio_to_db

log = logging.getLogger("mmwtrack")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    arms = [a.strip() for a in args.arms.split(",") if a.strip()] if args.arms else None
    return cfg.replace(seed=args.seed, out_dir=args.out_dir, trials=args.trials,
                       slots=getattr(args, "slots", None), arms=arms)


def _check_arms(cfg: ExperimentConfig, allowed) -> None:
    bad = [a for a in cfg.arms or () if a not in allowed]
    if bad:
        raise SystemExit(f"unknown arm(s) {bad}; choose from {list(allowed)}")


def _write_sweep(cfg: ExperimentConfig, kind: str, command: str) -> list[Path]:
    records = list(run_sweep(kind, cfg))
    out = Path(cfg.out_dir)
    files = []
    for arm in dict.fromkeys(r.arm for r in records):
        rows = ((r.variable, r.value, r.trial, r.metric, r.metric_db)
                for r in records if r.arm == arm)
        files.append(write_csv(out / f"{kind}_{arm}.csv",
                               ["variable", "value", "trial", "nmse_ratio", "nmse_db"], rows))
    summary = summarize(records)
    cols = ["arm", "variable", "value", "trials", "nmse_db", "mean_trial_db", "std_trial_db"]
    files.append(write_csv(out / f"{kind}_summary.csv", cols,
                           ([s[c] for c in cols] for s in summary)))
    for s in summary:
        log.info("%s %s=%g: %.2f dB", s["arm"], s["variable"], s["value"], s["nmse_db"])
    write_manifest(out, cfg, command, files, {"experiment": kind})
    return files


def cmd_acquire_sweep(args) -> list[Path]:
    cfg = _load_config(args)
    _check_arms(cfg, ACQ_ARMS)
    return _write_sweep(cfg, f"acq_vs_{args.vary}", "acquire-sweep")


def cmd_track_sweep(args) -> list[Path]:
    cfg = _load_config(args)
    _check_arms(cfg, TRACK_ARMS)
    return _write_sweep(cfg, f"track_vs_{args.vary}", "track-sweep")


def cmd_integrated(args) -> list[Path]:
    cfg = _load_config(args)
    _check_arms(cfg, INTEGRATED_ARMS)
    out = Path(cfg.out_dir)
    summary = IntegratedSummary()
    per_arm: dict[str, list] = {}
    detection = []
    for run in range(cfg.trials):
        for rec in run_integrated(cfg, run):
            summary.add(rec)
            detection.append([rec.run, rec.slot, rec.n_true_paths, rec.true_change, rec.stale,
                              rec.mode, rec.statistic, rec.threshold, rec.decision,
                              rec.n_est_paths])
            for arm, rate in rec.rate.items():
                per_arm.setdefault(arm, []).append(
                    [rec.run, rec.slot, rec.n_true_paths, rec.nmse_db[arm], rate])
    files = [
        write_csv(out / f"integrated_{arm}.csv",
                  ["run", "slot", "n_true_paths", "nmse_db", "rate_bps_hz"], rows)
        for arm, rows in per_arm.items()
    ]
    files.append(write_csv(
        out / "integrated_detection.csv",
        ["run", "slot", "n_true_paths", "true_change", "stale", "mode", "statistic",
         "threshold", "decision", "n_est_paths"],
        detection,
    ))
    s = summary
    files.append(write_csv(
        out / "integrated_summary.csv",
        ["slots", "true_changes", "detected", "missed", "delayed_detections", "false_alarms",
         "h0_tracked_slots", "false_alarm_rate", "outage_slots", "pilot_overhead"],
        [[s.slots, s.true_changes, s.detected, s.missed, s.delayed_detections, s.false_alarms,
          s.h0_tracked_slots, s.false_alarm_rate, s.outage_slots, cfg.pilot_overhead]],
    ))
    log.info("false alarm rate %.4f over %d H0 slots, %d/%d changes detected",
             s.false_alarm_rate, s.h0_tracked_slots, s.detected, s.true_changes)
    write_manifest(out, cfg, "integrated", files)
    return files


def cmd_calibrate(args) -> list[Path]:
    cfg = _load_config(args)
    res = calibrate_detector(cfg)
    out = Path(cfg.out_dir)
    files = [
        write_csv(out / "calibration_statistics.csv", ["slot", "statistic", "decision"],
                  ([i, float(v), bool(v > res.threshold)] for i, v in enumerate(res.statistics))),
        write_csv(out / "calibration_summary.csv",
                  ["p_fa", "threshold", "slots", "false_alarms", "rate", "binomial_se"],
                  [[res.p_fa, res.threshold, res.slots, res.false_alarms, res.rate,
                    res.binomial_se]]),
    ]
    log.info("empirical false alarm rate %.4f (target %.3f, se %.4f)",
             res.rate, res.p_fa, res.binomial_se)
    write_manifest(out, cfg, "calibrate-detector", files)
    return files


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file mirroring ExperimentConfig")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out-dir", help="directory for CSV files and manifest.json")
    common.add_argument("--trials", type=int,
                        help="trials, tracking blocks, integrated runs or H0 slots")
    common.add_argument("--arms", help="comma-separated subset of arms")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mmwtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("acquire-sweep", parents=[common], help="acquisition NMSE sweep")
    p.add_argument("--vary", choices=["snr", "grid"], default="snr")
    p.set_defaults(func=cmd_acquire_sweep)

    p = sub.add_parser("track-sweep", parents=[common], help="tracking NMSE sweep")
    p.add_argument("--vary", choices=["snr", "grid", "sigma"], default="sigma")
    p.add_argument("--slots", type=int, help="slots per block")
    p.set_defaults(func=cmd_track_sweep)

    p = sub.add_parser("integrated", parents=[common],
                       help="acquisition/tracking/detection loop")
    p.add_argument("--slots", type=int, help="slots per run")
    p.set_defaults(func=cmd_integrated)

    p = sub.add_parser("calibrate-detector", parents=[common],
                       help="false-alarm rate with ideal estimates")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"mmwtrack: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
