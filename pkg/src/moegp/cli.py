"""Command-line interface: ``moegp {gen-data,train,predict,evaluate,benchmark}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import datasets
from .clustering import ClusterConfig
from .datasets import Dataset, SplitSpec, load_csv, read_csv_matrix, save_csv, train_test_split
from .errors import InvalidArgumentError, NumericalError, ParseError
from .gating import GatingTrainConfig
from .moe import ALGORITHMS, TrainConfig, predict_batch, r_squared, train
from .serialization import load_model, save_model

REPORT_SCHEMA = "moegp-run-report/1"
SCALING_SIZES = (2000, 4000, 8000, 16000)

log = logging.getLogger("moegp")


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    algorithm: str
    dataset: str
    seed: int
    num_experts: int
    inducing_points: list
    n_train: int
    n_test: int
    train_r2: float
    test_r2: float
    test_r2_hard: float
    test_coverage_2sd: float
    wall_clock_seconds: float
    mm_iterations: int
    seconds_per_iteration: list
    config: dict = field(default_factory=dict)
    status: str = "ok"
    error: str = ""
    schema: str = REPORT_SCHEMA

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def parse_report(text: str) -> RunReport:
    doc = json.loads(text)
    if doc.get("schema") != REPORT_SCHEMA:
        raise InvalidArgumentError("not a moegp run report")
    return RunReport(**doc)


# -- helpers -------------------------------------------------------------------------

def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _experts(text):
    if text == "auto":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--experts takes an integer or 'auto'")
    if n < 1:
        raise argparse.ArgumentTypeError("--experts must be >= 1")
    return n


def _config_from_args(args, algorithm=None, seed=None) -> TrainConfig:
    seed = args.seed if seed is None else seed
    return TrainConfig(
        algorithm=algorithm or args.algorithm,
        num_experts=args.experts,
        L_range=tuple(range(1, args.max_experts + 1)),
        max_mm_iters=args.max_iters,
        min_mm_iters=args.min_iters,
        r2_improvement_tol=args.r2_tol,
        reallocate_by_gate=not args.no_reallocate,
        random_init=args.random_init,
        cluster=ClusterConfig(output_weight=args.kappa, seed=seed),
        gating=GatingTrainConfig(hidden_dims=tuple(args.hidden), max_epochs=args.max_epochs,
                                 seed=seed),
        max_inducing=args.max_inducing,
        n_jobs=args.jobs,
        seed=seed,
    )


def _config_echo(cfg: TrainConfig) -> dict:
    doc = asdict(cfg)
    return json.loads(json.dumps(doc, default=list))


def _load_dataset(spec, n, seed) -> Dataset:
    """A CSV path, or the name of a built-in generator."""
    if spec in datasets.GENERATORS:
        return datasets.GENERATORS[spec](n, seed)
    return load_csv(spec)


def run_one(ds: Dataset, cfg: TrainConfig, split: SplitSpec):
    """Split, train and score; returns ``(model, trace, report)``."""
    tr, te = train_test_split(ds, split)
    t0 = time.perf_counter()
    model, trace = train(tr.X, tr.y, cfg)
    seconds = time.perf_counter() - t0
    mean, var, _, _ = predict_batch(model, te.X, "soft")
    hard = predict_batch(model, te.X, "hard")[0]
    report = RunReport(
        algorithm=cfg.algorithm,
        dataset=ds.name,
        seed=cfg.seed,
        num_experts=model.num_experts,
        inducing_points=[e.num_inducing for e in model.experts],
        n_train=tr.n,
        n_test=te.n,
        train_r2=r_squared(tr.y, predict_batch(model, tr.X, "soft")[0]),
        test_r2=r_squared(te.y, mean),
        test_r2_hard=r_squared(te.y, hard),
        test_coverage_2sd=float(np.mean(np.abs(te.y - mean) <= 2 * np.sqrt(var))),
        wall_clock_seconds=seconds,
        mm_iterations=len(trace) if cfg.algorithm != "ccr" else 0,
        seconds_per_iteration=[r.seconds for r in trace.records],
        config=_config_echo(cfg),
    )
    return model, trace, report


# -- commands -------------------------------------------------------------------------

def cmd_gen_data(args):
    ds = datasets.GENERATORS[args.dataset](args.n, args.seed)
    save_csv(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")
    return 0


def cmd_train(args):
    ds = load_csv(args.data)
    cfg = _config_from_args(args)
    split = SplitSpec(args.train_fraction, args.seed if args.split_seed is None else args.split_seed)
    try:
        model, trace, report = run_one(ds, cfg, split)
    except NumericalError as exc:
        if args.out_report:
            failed = RunReport(cfg.algorithm, ds.name, cfg.seed, cfg.num_experts or 0, [],
                               0, 0, float("nan"), float("nan"), float("nan"), float("nan"),
                               0.0, 0, [], _config_echo(cfg), "numerical_failure", str(exc))
            Path(args.out_report).write_text(failed.to_json() + "\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if args.out_model:
        save_model(model, args.out_model)
    if args.out_report:
        Path(args.out_report).write_text(report.to_json() + "\n")
    if args.out_labels:
        np.savetxt(args.out_labels, trace.labels + 1, fmt="%d", header="expert", comments="")
    print(f"algorithm={report.algorithm} L={report.num_experts} "
          f"test_r2={report.test_r2:.6f} wall_clock={report.wall_clock_seconds:.2f}s")
    return 0


def _read_inputs(path, d):
    header, M = read_csv_matrix(path)
    if M.shape[1] == d + 1:
        return header[:d], M[:, :d], M[:, d]
    if M.shape[1] == d:
        return header, M, None
    raise UsageError(f"model expects {d} inputs but {path} has {M.shape[1]} columns")


def cmd_predict(args):
    model = load_model(args.model)
    names, X, _ = _read_inputs(args.data, model.input_dim)
    mean, var, g, idx = predict_batch(model, X, args.mode)
    header = [*names, "mean", "sd", *(f"g_{l + 1}" for l in range(model.num_experts))]
    if args.mode == "hard":
        header.append("expert")
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(X.shape[0]):
            row = [repr(float(v)) for v in X[i]] + [repr(float(mean[i])),
                                                    repr(float(np.sqrt(var[i])))]
            row += [repr(float(p)) for p in g[i]]
            if args.mode == "hard":
                row.append(str(int(idx[i]) + 1))
            w.writerow(row)
    print(f"wrote {X.shape[0]} predictions to {args.out}")
    return 0


def cmd_evaluate(args):
    model = load_model(args.model)
    _, X, y = _read_inputs(args.data, model.input_dim)
    if y is None:
        raise UsageError("evaluate needs an output column")
    out = {}
    for mode in ("soft", "hard"):
        mean, var, _, _ = predict_batch(model, X, mode)
        out[mode] = {"r2": r_squared(y, mean),
                     "coverage_2sd": float(np.mean(np.abs(y - mean) <= 2 * np.sqrt(var)))}
    print(json.dumps(out, indent=1))
    return 0


def loglog_slope(sizes, seconds) -> float:
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def aggregate(reports):
    rows = {}
    for r in reports:
        rows.setdefault((r.dataset, r.algorithm), []).append(r)
    table = []
    for (name, alg), rs in rows.items():
        r2 = np.array([r.test_r2 for r in rs])
        t = np.array([r.wall_clock_seconds for r in rs])
        table.append({"dataset": name, "algorithm": alg, "runs": len(rs),
                      "test_r2_mean": float(r2.mean()), "test_r2_sd": float(r2.std()),
                      "seconds_mean": float(t.mean()), "seconds_sd": float(t.std())})
    return table


def cmd_benchmark(args):
    if not args.algorithms:
        raise UsageError("--algorithms must name at least one algorithm")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    result = {}
    if args.scaling:
        sizes = args.scaling_sizes or list(SCALING_SIZES)
        times = []
        for n in sizes:
            ds = datasets.gen_higdon(n, args.seeds[0])
            cfg = _config_from_args(args, algorithm="ccr", seed=args.seeds[0])
            t0 = time.perf_counter()
            train(ds.X, ds.y, cfg)
            times.append(time.perf_counter() - t0)
            print(f"ccr N={n}: {times[-1]:.2f}s")
        result["scaling"] = {"sizes": sizes, "seconds": times,
                             "loglog_slope": loglog_slope(sizes, times)}
        print(f"log-log slope of time vs N: {result['scaling']['loglog_slope']:.3f}")
    else:
        if not args.data:
            raise UsageError("--data is required unless --scaling is given")
        reports = []
        for spec in args.data:
            for seed in args.seeds:
                ds = _load_dataset(spec, args.n, seed)
                for alg in args.algorithms:
                    cfg = _config_from_args(args, algorithm=alg, seed=seed)
                    _, _, rep = run_one(ds, cfg, SplitSpec(args.train_fraction, seed))
                    reports.append(rep)
                    print(f"{ds.name:>12} {alg:>5} seed={seed:<4} L={rep.num_experts} "
                          f"test_r2={rep.test_r2:.5f} time={rep.wall_clock_seconds:.2f}s")
                    if out_dir:
                        (out_dir / f"{ds.name}_{alg}_{seed}.json").write_text(rep.to_json())
        result["runs"] = [asdict(r) for r in reports]
        result["table"] = aggregate(reports)
        for row in result["table"]:
            print(f"{row['dataset']:>12} {row['algorithm']:>5}  R2 {row['test_r2_mean']:.5f}"
                  f" ± {row['test_r2_sd']:.5f}  time {row['seconds_mean']:.2f}"
                  f" ± {row['seconds_sd']:.2f}s")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=1) + "\n")
    return 0


# -- parser -----------------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--experts", type=_experts, default=None,
                   help="number of experts, or 'auto' for the elbow rule (default)")
    p.add_argument("--max-experts", type=int, default=6,
                   help="largest L tried by the elbow rule")
    p.add_argument("--max-inducing", type=int, default=64)
    p.add_argument("--kappa", type=float, default=10.0,
                   help="weight of the standardized output in joint clustering")
    p.add_argument("--max-iters", type=int, default=20, help="MM iteration cap")
    p.add_argument("--min-iters", type=int, default=1)
    p.add_argument("--r2-tol", type=float, default=1e-4)
    p.add_argument("--random-init", action="store_true",
                   help="mm from a random allocation instead of the CCR solution")
    p.add_argument("--no-reallocate", action="store_true",
                   help="CCR: fit experts on the k-means labels, not the gate's argmax")
    p.add_argument("--hidden", type=_int_list, default=[200, 40, 30])
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="moegp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("dataset", choices=sorted(datasets.GENERATORS))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on the 80%% split of a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="ccr")
    _add_train_flags(p)
    p.add_argument("--split-seed", type=int, default=None,
                   help="seed of the train/test split (default: --seed)")
    p.add_argument("--out-model")
    p.add_argument("--out-report")
    p.add_argument("--out-labels", help="write final training allocations (1-based)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict at the inputs of a CSV file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("hard", "soft"), default="soft")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="R^2 and 2-sd coverage of a model on a CSV file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="compare algorithms over datasets and seeds")
    p.add_argument("--data", action="append", default=[],
                   help="CSV path or generator name (higdon, bernholdt); repeatable")
    p.add_argument("--n", type=int, default=1000, help="size of generated datasets")
    p.add_argument("--algorithms", type=lambda s: [a for a in s.split(",") if a],
                   default=list(ALGORITHMS))
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--scaling", action="store_true",
                   help="time CCR on generated Higdon data of growing size")
    p.add_argument("--scaling-sizes", type=_int_list, default=None)
    p.add_argument("--out", help="write runs and the aggregate table as JSON")
    p.add_argument("--out-dir", help="write one report per run here")
    p.add_argument("--algorithm", default="ccr", help=argparse.SUPPRESS)
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "algorithms", None) is not None:
        bad = [a for a in args.algorithms if a not in ALGORITHMS]
        if bad:
            parser.error(f"unknown algorithm(s): {', '.join(bad)}")
    try:
        return args.func(args)
    except (UsageError, InvalidArgumentError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
