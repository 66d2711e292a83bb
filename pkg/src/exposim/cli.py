"""Command-line interface: ``exposim run | compare | inspect | dataset-stats | fetch-ml100k``.

Exit status 0 on success, 1 for runtime failures, 2 for invalid input
(bad config keys, unusable run directories, mismatched runs).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend, config as cfgmod
from .dataset import DatasetError, load_dataset
from .metrics import ExposureLedger, RoundReport
from .sim import SimulationError, run

_logger = logging.getLogger("exposim")

RUN_FILES = ("rounds.csv", "rounds.jsonl", "clicks.jsonl", "rerank.jsonl", "lists.jsonl",
             "ledger.bin", "manifest.json", "config.json", "model.npz")
COMPARE_COLUMNS = ["pipeline"] + RoundReport.header()
SUMMARY_COLUMNS = ["pipeline", "final_cum_ee", "final_cum_agg_div", "mean_ndcg"]


class UsageError(Exception):
    """Invalid input; reported with exit status 2."""


def _err(msg: str) -> None:
    print(f"exposim: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    file_values = cfgmod.read_file(args.config) if args.config else {}
    cfg = cfgmod.resolve(file_values, cfgmod.parse_overrides(args.set))
    sim_cfg = cfgmod.to_sim_config(cfg)
    out = Path(cfg["output_dir"])
    digest = cfgmod.config_hash(cfg)
    if out.exists() and any((out / f).exists() for f in RUN_FILES):
        if args.resume:
            old = json.loads((out / "config.json").read_text())
            if cfgmod.config_hash({**old, "T": cfg["T"]}) != cfgmod.config_hash(cfg):
                raise UsageError(f"{out}: cannot resume, config differs from the stored run")
        elif args.force:
            for f in RUN_FILES:
                (out / f).unlink(missing_ok=True)
        else:
            raise UsageError(f"{out} already holds a run; pass --force to overwrite or --resume")
    out.mkdir(parents=True, exist_ok=True)
    try:
        store = load_dataset(cfg["dataset"], cfg["dataset_format"], cfg["separator"])
    except DatasetError as exc:
        raise UsageError(str(exc)) from None

    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if args.resume and manifest_path.exists() else {}
    manifest.update(run_id=f"{cfg['pipeline'].replace('+', '_')}-{digest[:12]}", config_hash=digest,
                    dataset_fingerprint=cfgmod.file_fingerprint(cfg["dataset"]),
                    backend=_backend.NAME if cfg["backend"] == "auto" else cfg["backend"])
    manifest.setdefault("rounds_completed", 0)
    manifest.setdefault("wall_time", 0.0)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def progress(r: RoundReport):
        if not args.quiet:
            print(f"round {r.round:4d}/{sim_cfg.T}  ndcg={r.ndcg:.4f}  agg_div={r.agg_div:.4f}  "
                  f"cum_agg_div={r.cum_agg_div:.4f}  ee={r.ee:.4f}  cum_ee={r.cum_ee:.4f}  "
                  f"clicks={r.clicks}", flush=True)

    try:
        run(sim_cfg, store=store, resume=args.resume, manifest=manifest, progress=progress)
    except SimulationError as exc:
        _err(str(exc))
        return 1
    return 0


def _read_run(run_dir: Path):
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text())
        cfg = json.loads((run_dir / "config.json").read_text())
        with open(run_dir / "rounds.csv", newline="") as fh:
            rows = [RoundReport.from_mapping(r) for r in csv.DictReader(fh)]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{run_dir}: not a completed run ({exc})") from None
    return manifest, cfg, rows


def compare_runs(run_dirs) -> tuple[list, list, list]:
    """Merge runs; returns (per-round rows, summary rows, warnings)."""
    if len(run_dirs) < 2:
        raise UsageError("compare needs at least two run directories")
    runs = [(Path(d), *_read_run(Path(d))) for d in run_dirs]
    prints = {m.get("dataset_fingerprint") for _, m, _, _ in runs}
    if len(prints) != 1:
        raise UsageError("runs were made on different datasets (fingerprints differ)")
    warnings = []
    lengths = {len(rows) for *_, rows in runs}
    common = min(lengths)
    if len(lengths) > 1:
        warnings.append(f"runs have different lengths {sorted(lengths)}; comparing the first {common} rounds")
    labels = [cfg.get("pipeline", d.name) for d, _, cfg, _ in runs]
    dupes = {x for x in labels if labels.count(x) > 1}
    labels = [f"{lab}@{d.name}" if lab in dupes else lab for lab, (d, *_) in zip(labels, runs)]
    merged, summary = [], []
    for label, (_, _, _, rows) in zip(labels, runs):
        rows = rows[:common]
        for r in rows:
            merged.append([label] + r.csv_row())
        last = rows[-1] if rows else None
        summary.append([
            label,
            repr(last.cum_ee) if last else "nan",
            repr(last.cum_agg_div) if last else "nan",
            repr(float(np.mean([r.ndcg for r in rows]))) if rows else "nan",
        ])
    return merged, summary, warnings


def cmd_compare(args) -> int:
    merged, summary, warnings = compare_runs(args.run_dirs)
    for w in warnings:
        _err(f"warning: {w}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARE_COLUMNS)
            w.writerows(merged)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            w.writerows(summary)
    width = max(len(r[0]) for r in summary)
    print(f"{'pipeline':<{width}}  final_cum_ee  final_cum_agg_div  mean_ndcg")
    for label, ee, ad, nd in summary:
        print(f"{label:<{width}}  {float(ee):12.4f}  {float(ad):17.4f}  {float(nd):9.4f}")
    return 0


def inspect_round(run_dir, round: int, top: int = 10) -> dict:
    run_dir = Path(run_dir)
    manifest, _cfg, _rows = _read_run(run_dir)
    done = int(manifest.get("rounds_completed", 0))
    if not 1 <= round <= done:
        raise UsageError(f"round {round} not available; run completed {done} rounds")
    info = None
    with open(run_dir / "rerank.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["round"] == round:
                info = rec
                break
    if info is None:
        raise UsageError(f"round {round} missing from rerank.jsonl")
    with np.load(run_dir / "ledger.bin") as z:
        ledger = ExposureLedger.from_arrays({k[7:]: z[k] for k in z.files if k.startswith("ledger_")})
    cum = ledger.cumulative_through(round)
    order = np.lexsort((np.arange(cum.shape[0]), -cum))
    least = np.lexsort((np.arange(cum.shape[0]), cum))
    targets = {int(k): v for k, v in info["targets"].items()}
    degrees = {int(k): v for k, v in info["degrees"].items()}
    over = sum(max(0, degrees.get(i, 0) - c) for i, c in targets.items())
    under = sum(max(0, c - degrees.get(i, 0)) for i, c in targets.items())
    return {
        "round": round,
        "mode": info["mode"],
        "targets": {str(i): c for i, c in sorted(targets.items()) if c > 0},
        "most_exposed": [[int(i), float(cum[i])] for i in order[:top]],
        "least_exposed": [[int(i), float(cum[i])] for i in least[:top]],
        "discrepancy": {
            "total": info["discrepancy"],
            "over_target": over,
            "under_target": under,
            "items_over": sum(1 for i, c in targets.items() if degrees.get(i, 0) > c),
            "items_under": sum(1 for i, c in targets.items() if degrees.get(i, 0) < c),
            "items_on_target": sum(1 for i, c in targets.items() if degrees.get(i, 0) == c and c > 0),
        },
    }


def cmd_inspect(args) -> int:
    report = inspect_round(args.run_dir, args.round, args.top)
    if args.json:
        print(json.dumps(report, indent=2))
        return 0
    t = report["targets"]
    vals = list(t.values())
    print(f"round {report['round']}  target mode: {report['mode']}")
    if vals:
        print(f"targets: {len(vals)} items, sum {sum(vals)}, min {min(vals)}, "
              f"median {int(np.median(vals))}, max {max(vals)}")
        print("  " + " ".join(f"{i}:{c}" for i, c in t.items()))
    print("most exposed (item, cumulative exposure):")
    for i, e in report["most_exposed"]:
        print(f"  {i:6d}  {e:.4f}")
    print("least exposed (item, cumulative exposure):")
    for i, e in report["least_exposed"]:
        print(f"  {i:6d}  {e:.4f}")
    d = report["discrepancy"]
    print(f"discrepancy {d['total']} = over-target {d['over_target']} + under-target {d['under_target']}; "
          f"items over {d['items_over']}, under {d['items_under']}, on target {d['items_on_target']}")
    return 0


def cmd_dataset_stats(args) -> int:
    try:
        store = load_dataset(args.path, args.format, args.sep)
    except DatasetError as exc:
        raise UsageError(str(exc)) from None
    sizes = store.profile_sizes()
    pop = np.bincount(store.items, minlength=store.m)
    stats = json.loads(store.load_report.to_json())
    stats.update(
        density=len(store) / (store.n * store.m),
        profile_min=int(sizes.min()), profile_mean=float(sizes.mean()), profile_max=int(sizes.max()),
        item_min=int(pop.min()), item_mean=float(pop.mean()), item_max=int(pop.max()),
        fingerprint=cfgmod.file_fingerprint(args.path),
    )
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def cmd_fetch(args) -> int:
    from .datasets import fetch_ml100k

    print(fetch_ml100k(args.dest, force=args.force))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exposim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[], help="override a config key")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    p.add_argument("-q", "--quiet", action="store_true", help="no per-round progress lines")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="merge finished runs into comparison tables")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", help="directory for compare.csv and summary.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="show targets, exposure and discrepancy for one round")
    p.add_argument("run_dir")
    p.add_argument("--round", type=int, required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dataset-stats", help="load a dataset and print summary counts")
    p.add_argument("path")
    p.add_argument("--format", default="movielens-delimited", choices=("movielens-delimited", "csv"))
    p.add_argument("--sep", default="::")
    p.set_defaults(func=cmd_dataset_stats)

    p = sub.add_parser("fetch-ml100k", help="download MovieLens-100K ratings")
    p.add_argument("--dest", default="data/ml-100k")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError) as exc:
        _err(str(exc))
        return 2
    finally:
        _logger.debug("%s finished in %.1fs", args.command, time.perf_counter() - started)


if __name__ == "__main__":
    sys.exit(main())
