"""Command-line entry point: ``mbcd run|report|detect-bench|replay``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .metrics import (SUMMARY_COLUMNS, detection_report, figure_series, read_jsonl, regret,
                      summarize)
from .presets import PRESETS


def _config_from_args(args):
    path, overrides = args.config, list(args.overrides)
    if path is not None and "=" in path and not Path(path).exists():
        path, overrides = None, [path] + overrides
    if args.preset:
        overrides.insert(0, f"preset={args.preset}")
    return load_config(path, overrides)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out or cfg.output_dir)
    from .runner import run_experiment

    def progress(res):
        s = res.summary
        print(f"{res.variant:>13} seed {res.seed}: measured reward {s['measured_reward']:9.2f}  "
              f"K={s['final_K']}  detections={s['detections']}  ({res.seconds:.1f}s)")

    run_experiment(cfg, out, progress=progress)
    print(f"logs and summary.csv written to {out}")
    return 0


def _load_run_dir(run_dir: Path):
    import yaml

    from .config import config_from_dict

    raw = yaml.safe_load((run_dir / "config.yaml").read_text())
    return config_from_dict(raw)


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = _load_run_dir(run_dir)
    schedule = cfg.built_schedule
    rows = []
    oracle = {}
    for path in sorted(run_dir.glob("*/seed_*.jsonl")):
        variant, seed = path.parent.name, int(path.stem.split("_")[1])
        log = read_jsonl(path)
        row = summarize(log, schedule, cfg.gamma, cfg.measure_start, variant, seed)
        rows.append((row, log))
        if variant == "oracle":
            oracle[seed] = log
    columns = list(SUMMARY_COLUMNS) + ["regret", "oracle_ratio"]
    writer = csv.DictWriter(sys.stdout if args.out is None else open(args.out, "w", newline=""),
                            fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row, log in rows:
        o = oracle.get(row["seed"])
        if o is not None and row["variant"] != "oracle":
            row["regret"] = regret(log, o, cfg.gamma, start=cfg.measure_start)
            o_reward = sum(r["reward"] for r in o if r["t"] >= cfg.measure_start)
            row["oracle_ratio"] = row["measured_reward"] / o_reward if o_reward else ""
        writer.writerow({k: ("" if row.get(k) is None else row.get(k, "")) for k in columns})
    if args.detections:
        for row, log in rows:
            rep = detection_report(log, schedule)
            print(json.dumps({"variant": row["variant"], "seed": row["seed"], **rep.to_dict()}),
                  file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    from .bench import delay_benchmark, far_benchmark

    far = far_benchmark(h=args.h, delta=args.delta, mu1=args.mu1, streams=args.streams,
                        length=args.length, seed=args.seed)
    delay = delay_benchmark(h=args.h, delta=args.delta, mu1=args.mu1, trials=args.trials,
                            seed=args.seed)
    print(f"false alarms: {far.alarms} in {far.streams} x {far.length} steps; "
          f"mean run length {far.mean_run_length:.1f} (bound e^h = {2.718281828 ** args.h:.1f})")
    print(f"detection delay: mean {delay.mean_delay:.2f} over {delay.trials} trials; "
          f"predicted h/KL = {delay.predicted:.2f}; undetected {delay.undetected}")
    return 0


def _cmd_replay(args) -> int:
    log = read_jsonl(args.log)
    series = figure_series(log)
    if args.oracle:
        from .metrics import regret_curve

        oracle = read_jsonl(args.oracle)
        start = oracle[0]["t"] if oracle else None
        curve = regret_curve(log, oracle, args.gamma, start=start).tolist()
        series["regret"] = [None] * (len(series["t"]) - len(curve)) + curve
    columns = list(series)
    out = sys.stdout if args.out is None else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in zip(*(series[c] for c in columns)):
        w.writerow(["" if v is None else v for v in row])
    return 0


def _cmd_schedule(args) -> int:
    cfg = _config_from_args(args)
    print(cfg.built_schedule.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbcd", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", nargs="?", help="YAML config file")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--out", help="output directory (default: output_dir from the config)")
    run.add_argument("overrides", nargs="*", default=[], metavar="key=value")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="summarise a run directory as CSV")
    rep.add_argument("run_dir")
    rep.add_argument("--out")
    rep.add_argument("--detections", action="store_true",
                     help="also print per-run detection tables (JSON, stderr)")
    rep.set_defaults(func=_cmd_report)

    bench = sub.add_parser("detect-bench", help="Gaussian-stream false-alarm/delay suite")
    bench.add_argument("--h", type=float, default=5.0)
    bench.add_argument("--delta", type=float, default=2.0)
    bench.add_argument("--mu1", type=float, default=2.0)
    bench.add_argument("--streams", type=int, default=200)
    bench.add_argument("--length", type=int, default=2000)
    bench.add_argument("--trials", type=int, default=500)
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=_cmd_bench)

    rp = sub.add_parser("replay", help="extract per-step figure data from a JSONL log")
    rp.add_argument("log")
    rp.add_argument("--oracle", help="oracle log for a regret curve")
    rp.add_argument("--gamma", type=float, default=0.99)
    rp.add_argument("--out")
    rp.set_defaults(func=_cmd_replay)

    sch = sub.add_parser("schedule", help="print a config's context schedule as JSON")
    sch.add_argument("config", nargs="?")
    sch.add_argument("--preset", choices=sorted(PRESETS))
    sch.add_argument("overrides", nargs="*", default=[], metavar="key=value")
    sch.set_defaults(func=_cmd_schedule)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    # overrides may appear after options (``run cfg.yaml --out d seeds=[1]``)
    args, extra = parser.parse_known_args(argv)
    stray = [e for e in extra if "=" not in e or e.startswith("-")]
    if stray or (extra and not hasattr(args, "overrides")):
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    if extra:
        args.overrides = list(args.overrides) + extra
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
