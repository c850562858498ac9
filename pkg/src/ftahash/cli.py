"""Command-line interface: ``ftahash <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import TEST, TRAIN, SynthSpec, make_synthetic
from .evaluation import (
    AUTO,
    CROSS_SUBJECT_PRESETS,
    ExperimentConfig,
    build_run_spec,
    run_experiment,
    select_theta,
    sweep,
    sweep_csv,
)
from .features import EXTRACTORS, fit_standardizer
from .formats import (
    atomic_write,
    canonical_json,
    load_code_db,
    load_hash_spec,
    save_code_db,
    save_hash_spec,
    save_report,
    spec_fingerprint,
)
from .hashing import hash_sequence
from .invariance import run_suite
from .loaders import load_any, load_dataset, save_dataset_cache
from .search import CodeDatabase, knn_classify, nearest

log = logging.getLogger("ftahash")


def _int_list(text: str) -> list:
    return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _theta(text: str):
    return AUTO if text.lower() == AUTO else float(text)


def _add_hash_args(p: argparse.ArgumentParser, runs: bool = False) -> None:
    p.add_argument("--mode", default="peak", choices=["peak", "threshold", "thresholding", "bow"])
    p.add_argument("--k", type=int, default=2, help="postures per group")
    p.add_argument("--p", type=int, default=1000, help="number of (k+1)-ary symbols")
    p.add_argument("--m", type=int, default=100, help="number of random projections")
    p.add_argument("--theta", type=_theta, default=AUTO, help="threshold, or 'auto' for 5-fold CV")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--knn", type=int, default=1, help="neighbours used by the classifier")
    p.add_argument("--no-standardize", action="store_true", help="skip z-scoring with training statistics")
    if runs:
        p.add_argument("--runs", type=int, default=50)
        p.add_argument("--feature", default=None, help="override the manifest's feature (pjd, jo, pa, raw)")
        p.add_argument("--split", default="explicit", choices=["explicit", *sorted(CROSS_SUBJECT_PRESETS)])


def _config(args, **overrides) -> ExperimentConfig:
    fields = dict(
        feature=getattr(args, "feature", None) or "raw",
        mode=args.mode,
        m=args.m,
        k=args.k,
        p=args.p,
        theta=args.theta,
        runs=getattr(args, "runs", 1),
        knn_K=args.knn,
        master_seed=args.seed,
        split=getattr(args, "split", "explicit"),
        sigma=args.sigma,
        standardize=not args.no_standardize,
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


def cmd_synth(args) -> int:
    orders = [_int_list(o) for o in args.orders.split(";") if o.strip()]
    names = args.class_names.split(",") if args.class_names else ["-".join(map(str, o)) for o in orders]
    if len(names) != len(orders):
        raise ValueError("--class-names needs one name per order")
    fpps = _int_list(args.fpp)
    rng = np.random.default_rng([args.seed, 3])
    out = Path(args.out)
    records = []
    for i in range(args.per_class):
        for label, order in enumerate(orders):
            instance = i * len(orders) + label
            spec = SynthSpec(args.seed, args.d, args.num_postures, order, int(rng.choice(fpps)), args.noise, instance)
            v = make_synthetic(spec)
            name = f"seq_{instance:05d}.txt"
            lines = "\n".join(" ".join(format(x, ".17g") for x in row) for row in v.frames)
            atomic_write(out / name, lines + "\n")
            records.append(
                {"file": name, "label": names[label], "subject": i % 10 + 1, "split": TRAIN if i % 2 == 0 else TEST}
            )
    manifest = {"class_names": names, "feature": "raw", "records": records}
    atomic_write(out / "manifest.json", canonical_json(manifest))
    print(out / "manifest.json")
    return 0


def cmd_extract(args) -> int:
    if args.feature not in EXTRACTORS and args.feature != "raw":
        raise ValueError(f"unknown feature {args.feature!r}")
    data = load_dataset(args.manifest, feature=args.feature)
    save_dataset_cache(args.out, data)
    print(f"{len(data)} sequences, d={data.d} -> {args.out}")
    return 0


def cmd_hash(args) -> int:
    cfg = _config(args)
    data = load_any(args.data)
    target = data.split(TRAIN) if args.subset == "train" else data
    if len(target) == 0:
        raise ValueError(f"no sequences in subset {args.subset!r}")
    standardizer = fit_standardizer(target) if cfg.standardize else None
    if standardizer is not None:
        target = target.map(standardizer.apply)
    spec = build_run_spec(cfg, 0, target.d)
    theta = select_theta(target, cfg, spec=spec) if cfg.auto_theta else float(cfg.theta)
    spec = spec.with_theta(theta)
    fingerprint = save_hash_spec(args.out_spec, spec, standardizer)
    codes = [hash_sequence(spec, s) for s in target.sequences]
    labels = [None if s.label is None else target.class_names[s.label] for s in target.sequences]
    save_code_db(args.out_db, CodeDatabase.build(codes, labels, fingerprint))
    print(json.dumps({"codes": len(codes), "theta": theta, "fingerprint": fingerprint, "bits_per_code": codes[0].nbits}))
    return 0


def cmd_query(args) -> int:
    spec, standardizer = load_hash_spec(args.spec)
    fingerprint = spec_fingerprint(spec, standardizer)
    db = load_code_db(args.db, expected_fingerprint=fingerprint)
    data = load_any(args.data)
    if args.subset != "all":
        data = data.split(args.subset)
    correct = 0
    for s in data.sequences:
        v = standardizer.apply(s) if standardizer is not None else s
        code = hash_sequence(spec, v)
        pred = knn_classify(db, code, args.knn, fingerprint=fingerprint, bitwise=args.bitwise)
        idx, dists = nearest(db, code, args.knn, bitwise=args.bitwise)
        truth = None if s.label is None else data.class_names[s.label]
        correct += pred == truth
        print(
            json.dumps(
                {
                    "source_id": s.source_id,
                    "predicted": pred,
                    "true": truth,
                    "neighbors": [
                        {"index": int(i), "label": db.labels[i], "distance": int(d)} for i, d in zip(idx, dists)
                    ],
                }
            )
        )
    log.info("accuracy %.4f over %d queries", correct / max(1, len(data)), len(data))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    data = load_any(args.data, feature=args.feature)
    report = run_experiment(data, cfg, threads=args.threads)
    save_report(args.out, report)
    if args.csv:
        rows = ["run,accuracy,theta"]
        rows += [f"{i},{a:.17g},{t:.17g}" for i, (a, t) in enumerate(zip(report.per_run_accuracy, report.per_run_theta))]
        atomic_write(args.csv, "\n".join(rows) + "\n")
    print(f"accuracy {100 * report.mean:.2f} +- {100 * report.std:.2f} % over {cfg.runs} runs")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    data = load_any(args.data, feature=args.feature)
    values = [float(v) if args.axis == "theta" else int(v) for v in args.values.split(",")]
    reports = sweep(data, cfg, args.axis, values, threads=args.threads)
    save_report(args.out, reports)
    table = sweep_csv(args.axis, values, reports)
    if args.csv:
        atomic_write(args.csv, table)
    sys.stdout.write(table)
    return 0


def cmd_verify(args) -> int:
    results = run_suite(seed=args.seed, count=args.count, oracle_count=args.oracle_count, timing=not args.skip_timing)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.ok]
    if failed:
        raise InvarianceViolation(", ".join(r.name for r in failed))
    return 0


class InvarianceViolation(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftahash", description="FTA sequence hashing, search and evaluation")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for end-to-end determinism")
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic posture-order dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--num-postures", type=int, default=2)
    p.add_argument("--orders", default="0,1;1,0", help="posture order per class, classes separated by ';'")
    p.add_argument("--class-names", default=None)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--fpp", default="3,4,5,6", help="frames-per-posture choices")
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="manifest + feature -> feature cache (.npz)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", required=True, choices=[*sorted(EXTRACTORS), "raw"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("hash", parents=[common], help="hash a dataset into a code database")
    p.add_argument("--data", required=True, help="manifest (.json) or feature cache (.npz)")
    _add_hash_args(p)
    p.add_argument("--subset", default="train", choices=["train", "all"])
    p.add_argument("--out-db", required=True)
    p.add_argument("--out-spec", required=True)
    p.set_defaults(func=cmd_hash)

    p = sub.add_parser("query", parents=[common], help="classify sequences against a code database")
    p.add_argument("--db", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--subset", default="test", choices=["train", "test", "all"])
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--bitwise", action="store_true", help="Hamming distance on packed bits")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="repeated-run accuracy with theta cross-validation")
    p.add_argument("--data", required=True)
    _add_hash_args(p, runs=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", default=None, help="optional per-run CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="eval along one parameter axis")
    p.add_argument("--data", required=True)
    _add_hash_args(p, runs=True)
    p.add_argument("--axis", required=True, choices=["k", "p", "theta"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run the invariance property suite")
    p.add_argument("--count", type=int, default=200, help="synthetic corpus size")
    p.add_argument("--oracle-count", type=int, default=1000)
    p.add_argument("--skip-timing", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # reported as one JSON line on stderr
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
