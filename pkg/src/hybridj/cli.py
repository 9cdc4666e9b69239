"""Command-line entry point ``hybridj``.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .dataset import SynthConfig, generate_synthetic, load_dataset_dir, write_dataset
from .errors import HybridjError, InvalidConfig
from .harness import (
    ExperimentConfig, analyze_dataset, characterize_partition, emit_report, rerender_report, run_experiment,
    score_difference_trees,
)
from .metrics import format_value
from .partition import CASE_BITS, GROUPS, write_partition_csv
from .scoring import COMPAS, HNR, HWR, SHORT_NAME, all_scores, calibration_sweep, canonical_scorer, write_calibration_csv


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"{path}: {e}") from None
    if not isinstance(d, dict):
        raise InvalidConfig(f"{path}: expected a JSON object")
    return d


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise InvalidConfig(f"--pair needs two comma-separated scorers, got {text!r}")
    return tuple(canonical_scorer(p) for p in parts)


def cmd_synth(args) -> None:
    cfg = SynthConfig.from_dict(_read_json(args.config)) if args.config else SynthConfig()
    ds = generate_synthetic(cfg)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds.defendants)} defendants and {len(ds.predictions)} predictions to {args.out}")


def cmd_calibrate(args) -> None:
    ds = load_dataset_dir(args.data)
    scores = all_scores(ds)
    ids = ds.ids
    labels = ds.labels(ids)
    curves = [calibration_sweep([scores[s][i] for i in ids], labels, s) for s in (COMPAS, HNR, HWR)]
    print("scorer cutoff accuracy fpr fnr")
    for c in curves:
        for p in c.points:
            print(SHORT_NAME[c.scorer], p.cutoff, *(format_value(v) or "-" for v in (p.accuracy, p.fpr, p.fnr)))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_calibration_csv(os.path.join(args.out, "calibration.csv"), curves)


def cmd_partition(args) -> None:
    ds = load_dataset_dir(args.data)
    pair = _pair(args.pair)
    an = analyze_dataset(ds, pair, characterize=False, importance=False)
    ps = an.partition_summary
    a, b = (SHORT_NAME[s] for s in pair)
    print(f"{ps.n} defendants; {a} vs {b}")
    for c in range(1, 9):
        m, h, y = CASE_BITS[c]
        print(f"case {c}: {a}={'high' if m else 'low'} {b}={'high' if h else 'low'} "
              f"recid={int(y)}  n={ps.counts[c]}")
    for g, share in ps.group_shares.items():
        print(f"{g} (cases {GROUPS[g][0]}+{GROUPS[g][1]}): {100 * share:.1f}%")
    print(f"disagreement subset: {an.disagreement_size} ({100 * an.disagreement_size / ps.n:.1f}%)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_partition_csv(os.path.join(args.out, "partition.csv"), an.partition_rows)


def cmd_run(args) -> None:
    ds = load_dataset_dir(args.data)
    cfg = ExperimentConfig.from_json(args.experiment) if args.experiment else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    out = args.out or cfg.output_dir
    if not out:
        raise InvalidConfig("no output directory: pass --out or set output_dir in the experiment file")
    table = run_experiment(ds, cfg)
    analysis = analyze_dataset(ds, cfg.scorer_pair, seed=cfg.base_seed, top_k_charges=cfg.top_k_charges)
    for path in emit_report(out, table=table, analysis=analysis, config=cfg):
        print(path)


def cmd_characterize(args) -> None:
    ds = load_dataset_dir(args.data)
    pair = _pair(args.pair)
    ch = characterize_partition(ds, pair, max_depth=args.max_depth, seed=args.seed)
    print("case n mean_priors mean_age clusters")
    for c, st in ch.case_feature_stats.items():
        if st["n"] == 0:
            print(c, 0, "-", "-", "-")
            continue
        print(c, st["n"], f"{st['priors_count']:.2f}", f"{st['age']:.2f}", ch.per_case_clusters[c].n_modes)
    for note in ch.notes:
        print(f"note: {note}")
    print()
    print(ch.eight_case_tree.export_text(), end="")
    trees = score_difference_trees(ds)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "tree_8case.txt"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(ch.eight_case_tree.export_text())
        for key, tree in trees.items():
            with open(os.path.join(args.out, f"tree_diff_{key}.txt"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(tree.export_text())
    else:
        for key, tree in trees.items():
            print(f"\n[{key}]")
            print(tree.export_text(), end="")


def cmd_report(args) -> None:
    for path in rerender_report(args.results):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridj", description="Human + machine risk-score analysis toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--config", help="JSON file with SynthConfig fields")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("calibrate", help="accuracy/FPR/FNR of each score at cutoffs 1-10")
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("partition", help="eight-case partition of a scorer pair")
    s.add_argument("--data", required=True)
    s.add_argument("--pair", default="C,HNR")
    s.add_argument("--out")
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("run", help="run an experiment and write the report")
    s.add_argument("--data", required=True)
    s.add_argument("--experiment", help="JSON file with ExperimentConfig fields")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, help="override base_seed")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("characterize", help="eight-case tree, clusters and score-difference trees")
    s.add_argument("--data", required=True)
    s.add_argument("--pair", default="C,HNR")
    s.add_argument("--max-depth", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_characterize)

    s = sub.add_parser("report", help="re-render summary.md and metric CSVs from results.json")
    s.add_argument("--results", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except HybridjError as e:
        print(f"hybridj: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"hybridj: I/O error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
