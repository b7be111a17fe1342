"""Command-line interface.

Exit codes are stable API: 0 = ran to completion (the test decision lives in
the JSON report, never in the exit code), 2 = usage error, 3 = data error,
4 = numerical failure. Reports are deterministic for a fixed seed; timing is
written to stderr so stdout stays byte-stable.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__
from .dataio import (
    canonical_json,
    ingest,
    read_labels,
    write_csv_rows,
    write_samf,
)
from .estimators import hsic_dependence_score
from .exceptions import (
    DimensionError,
    InvalidInputError,
    NumericalError,
    ParseError,
    SammdError,
    UnequalSampleError,
)
from .experiments import (
    BlobAttackScenario,
    DependentGaussianPair,
    IIDGaussianPair,
    make_test,
    run_calibration,
    run_noniid_suite,
    run_power_sweep,
)
from .toymodels import (
    AttackConfig,
    IdentityFeaturizer,
    MLPFeaturizer,
    PrecomputedFeaturizer,
    ToyClassifier,
    fgsm,
    gen_dependent_gaussian,
    gen_synthetic,
    pgd,
    train_toy_classifier,
)

USAGE_EXIT = 2
DATA_EXIT = 3
NUMERIC_EXIT = 4


class UsageError(Exception):
    pass


def _emit(report: dict) -> None:
    sys.stdout.write(canonical_json(report))


def _quantiles(values: np.ndarray) -> dict:
    qs = np.quantile(values, [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
    keys = ["min", "q05", "q25", "q50", "q75", "q95", "max"]
    return {k: float(v) for k, v in zip(keys, qs)}


def _add_test_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.05, help="test level")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--n-perm", type=int, default=200, help="null resamples")
    p.add_argument("--l", type=float, default=0.2, dest="timescale",
                   help="wild-bootstrap weight-process timescale")
    p.add_argument("--lr", type=float, default=0.05, help="kernel training learning rate")
    p.add_argument("--iters", type=int, default=150, help="kernel training iterations")
    p.add_argument("--lambda", type=float, default=1e-8, dest="ridge",
                   help="variance regularizer")
    p.add_argument("--minibatch", type=int, default=64, help="training minibatch size")
    p.add_argument("--split-fraction", type=float, default=0.5,
                   help="fraction of rows used for kernel training")


def _test_overrides(args, method: str) -> dict:
    over = {
        "alpha": args.alpha,
        "n_perm": args.n_perm,
        "timescale": args.timescale,
        "learning_rate": args.lr,
        "max_iters": args.iters,
        "ridge": args.ridge,
        "minibatch_size": args.minibatch,
        "split_fraction": args.split_fraction,
        "seed": args.seed,
    }
    return over


def _parse_features(spec: str):
    if spec == "raw":
        return ("raw", None)
    if spec.startswith("file:"):
        parts = spec[len("file:"):].split(",")
        if len(parts) != 2 or not all(parts):
            raise UsageError(
                "--features file form is file:<x-features-path>,<y-features-path>"
            )
        return ("file", tuple(parts))
    if spec.startswith("toy-mlp:"):
        path = spec[len("toy-mlp:"):]
        if not path:
            raise UsageError("--features toy-mlp form is toy-mlp:<model-path>")
        return ("toy-mlp", path)
    raise UsageError(f"unknown --features value {spec!r}")


def cmd_test(args) -> int:
    x = ingest(args.x, args.format)
    y = ingest(args.y, args.format)
    kind, detail = _parse_features(args.features)
    if args.method != "sammd" and kind != "raw":
        raise UsageError(f"--features applies only to --method sammd, not {args.method}")
    featurizer = None
    if args.method == "sammd":
        if kind == "raw":
            featurizer = IdentityFeaturizer()
        elif kind == "file":
            featurizer = PrecomputedFeaturizer()
            featurizer.register(x, ingest(detail[0]))
            featurizer.register(y, ingest(detail[1]))
        else:
            featurizer = MLPFeaturizer.from_model(ToyClassifier.load(detail))
    est = make_test(args.method, featurizer=featurizer, **_test_overrides(args, args.method))
    est.fit(x, y)
    result = est.result_
    report = {
        "command": "test",
        "method": args.method,
        "parameters": {
            "x": args.x,
            "y": args.y,
            "features": args.features,
            **{k: v for k, v in _test_overrides(args, args.method).items() if k != "seed"},
        },
        "seed": args.seed,
        "n_x": int(x.shape[0]),
        "n_y": int(y.shape[0]),
        "dim": int(x.shape[1]),
        "statistic": result.statistic,
        "p_value": result.p_value,
        "reject": result.reject,
        "null_quantiles": _quantiles(result.null_draws.values),
    }
    _emit(report)
    return 0


def _report_rows_csv(path, report_dict) -> None:
    rows = [
        (
            r["method"],
            r["condition"],
            "" if r["axis_value"] is None else r["axis_value"],
            r["rejection_rate"],
            r["std_error"],
        )
        for r in report_dict["rows"]
    ]
    write_csv_rows(path, ["method", "condition", "axis_value", "rejection_rate", "std_error"], rows)


def _calibration_featurizer(dim: int, seed: int):
    return MLPFeaturizer.random(dim, seed=seed)


def cmd_calibrate(args) -> int:
    methods = args.methods.split(",")
    if args.generator == "gaussian":
        pair = IIDGaussianPair(n=args.n, dim=args.dim)
    else:
        pair = DependentGaussianPair(n=args.n, dim=args.dim, timescale=args.data_timescale)
    rows = []
    for method in methods:
        over = _test_overrides(args, method)
        over.pop("seed")
        if args.generator == "dependent" and method in ("sammd", "mmd-o-wb"):
            # weight correlation must out-range the data dependence
            over["timescale"] = 3.0 * args.data_timescale
        proto = make_test(
            method,
            featurizer=_calibration_featurizer(args.dim, args.seed),
            **over,
        )
        report = run_calibration(pair, proto, args.trials, args.seed,
                                 condition=f"h0-{args.generator}")
        rows.extend(r.to_dict() for r in report.rows)
    out = {
        "command": "calibrate",
        "generator": args.generator,
        "n": args.n,
        "dim": args.dim,
        "trials": args.trials,
        "seed": args.seed,
        "alpha": args.alpha,
        "rows": rows,
    }
    if args.csv:
        _report_rows_csv(args.csv, out)
    _emit(out)
    return 0


def cmd_power(args) -> int:
    values = [float(v) for v in args.values.split(",")]
    scenario = BlobAttackScenario(seed=args.seed)
    over = _test_overrides(args, args.method)
    over.pop("seed")
    proto = make_test(args.method, featurizer=scenario.featurizer, **over)
    report = run_power_sweep(
        args.axis,
        values,
        scenario,
        proto,
        args.trials,
        args.seed,
        n=args.n,
        epsilon=args.epsilon,
        attack=args.attack,
    )
    out = {
        "command": "power",
        "method": args.method,
        "axis": args.axis,
        "n": args.n,
        "epsilon": args.epsilon,
        "attack": args.attack,
        "trials": args.trials,
        "seed": args.seed,
        "rows": [r.to_dict() for r in report.rows],
    }
    if args.csv:
        _report_rows_csv(args.csv, out)
    _emit(out)
    return 0


def cmd_noniid(args) -> int:
    methods = args.methods.split(",")
    over = _test_overrides(args, None)
    over.pop("seed")
    report = run_noniid_suite(
        args.flavor,
        methods,
        args.trials,
        args.seed,
        n=args.n,
        epsilon=args.epsilon,
        dep_timescale=args.dep_timescale,
        wild_timescale=3.0 * args.dep_timescale,
        **over,
    )
    out = {
        "command": "noniid",
        "flavor": args.flavor,
        "methods": methods,
        "n": args.n,
        "epsilon": args.epsilon,
        "dep_timescale": args.dep_timescale,
        "trials": args.trials,
        "seed": args.seed,
        "rows": [r.to_dict() for r in report.rows],
    }
    if args.csv:
        _report_rows_csv(args.csv, out)
    _emit(out)
    return 0


def cmd_hsic(args) -> int:
    from .kernels import GaussianBandwidth

    data = ingest(args.data, args.format)
    bw = None
    if args.bandwidth is not None:
        bw = GaussianBandwidth.from_sigma(args.bandwidth)
    score = hsic_dependence_score(
        data, args.subset_size, args.repeats, args.seed, bandwidth=bw
    )
    _emit(
        {
            "command": "hsic",
            "data": args.data,
            "subset_size": args.subset_size,
            "repeats": args.repeats,
            "seed": args.seed,
            "bandwidth": args.bandwidth,
            "score": score,
        }
    )
    return 0


def cmd_attack(args) -> int:
    data = ingest(args.x, args.format)
    if args.model:
        model = ToyClassifier.load(args.model)
        labels = read_labels(args.labels) if args.labels else model.predict(data)
    else:
        if not args.labels:
            raise UsageError("--labels is required unless --model provides a classifier")
        labels = read_labels(args.labels)
        model = train_toy_classifier(
            data,
            labels,
            epochs=args.epochs,
            seed=args.seed,
            hidden_units=args.hidden,
        )
    cfg = AttackConfig.from_data(
        data,
        epsilon=args.epsilon,
        steps=args.steps,
        step_size=args.step_size,
    )
    attack_fn = fgsm if args.attack == "fgsm" else pgd
    adv = attack_fn(model, data, labels, cfg)
    write_samf(args.out, adv)
    if args.save_model:
        model.save(args.save_model)
    _emit(
        {
            "command": "attack",
            "attack": args.attack,
            "x": args.x,
            "out": args.out,
            "epsilon": args.epsilon,
            "steps": args.steps,
            "step_size": cfg.step_size,
            "rows": int(adv.shape[0]),
            "dim": int(adv.shape[1]),
            "max_linf": float(np.abs(adv - data).max()),
            "seed": args.seed,
        }
    )
    return 0


def cmd_gen(args) -> int:
    if args.kind == "dependent":
        data = gen_dependent_gaussian(
            args.n, args.dim, args.timescale, args.seed, mean=args.mean, std=args.std
        )
        labels = np.zeros(args.n, dtype=np.int64)
    else:
        params = {"dim": args.dim, "mean": args.mean, "std": args.std}
        data, labels = gen_synthetic(args.kind, params, args.n, args.seed)
    write_samf(args.out, data)
    if args.labels_out:
        write_csv_rows(args.labels_out, None, [(int(v),) for v in labels])
    _emit(
        {
            "command": "gen",
            "kind": args.kind,
            "n": int(data.shape[0]),
            "dim": int(data.shape[1]),
            "seed": args.seed,
            "out": args.out,
            "labels_out": args.labels_out,
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sammd",
        description="Kernel two-sample testing for adversarial data detection",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run one two-sample test on two feature files")
    p.add_argument("--x", required=True, help="first sample (SAMF or CSV)")
    p.add_argument("--y", required=True, help="second sample (SAMF or CSV)")
    p.add_argument("--method", choices=["sammd", "mmd-g", "mmd-o", "mmd-o-wb"],
                   default="sammd")
    p.add_argument("--features", default="raw",
                   help="raw | file:<x-feats>,<y-feats> | toy-mlp:<model-path>")
    p.add_argument("--format", choices=["samf", "csv"], default=None,
                   help="input format (default: infer from suffix)")
    _add_test_params(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("calibrate", help="type-I error under a null generator")
    p.add_argument("--generator", choices=["gaussian", "dependent"], default="gaussian")
    p.add_argument("--methods", default="sammd", help="comma-separated method list")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--data-l", type=float, default=1.0, dest="data_timescale",
                   help="dependence timescale of the dependent generator")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--csv", default=None, help="also write rows as CSV")
    _add_test_params(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("power", help="rejection-rate curve along one axis")
    p.add_argument("--axis", choices=["epsilon", "set_size", "mixture_fraction"],
                   required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--method", choices=["sammd", "mmd-g", "mmd-o", "mmd-o-wb"],
                   default="sammd")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--attack", choices=["fgsm", "pgd"], default="pgd")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--csv", default=None)
    _add_test_params(p)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("noniid", help="method comparison on dependent data")
    p.add_argument("--flavor", choices=["a", "b"], required=True)
    p.add_argument("--methods", default="sammd,mmd-g,mmd-o,mmd-o-wb")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--dep-l", type=float, default=1.0, dest="dep_timescale")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--csv", default=None)
    _add_test_params(p)
    p.set_defaults(func=cmd_noniid)

    p = sub.add_parser("hsic", help="mean dependence score over disjoint subsets")
    p.add_argument("--data", required=True)
    p.add_argument("--subset-size", type=int, default=50)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bandwidth", type=float, default=None,
                   help="fixed kernel sigma (default: median heuristic); "
                        "use one shared value when comparing datasets")
    p.add_argument("--format", choices=["samf", "csv"], default=None)
    p.set_defaults(func=cmd_hsic)

    p = sub.add_parser("attack", help="generate adversarial rows for a feature file")
    p.add_argument("--x", required=True)
    p.add_argument("--labels", default=None, help="integer labels, one per row")
    p.add_argument("--model", default=None, help="existing toy classifier (.npz)")
    p.add_argument("--attack", choices=["fgsm", "pgd"], default="pgd")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output SAMF path")
    p.add_argument("--save-model", default=None, help="also save the classifier (.npz)")
    p.add_argument("--format", choices=["samf", "csv"], default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("gen", help="write a synthetic dataset as SAMF")
    p.add_argument("--kind", choices=["gaussian", "blobs", "dependent"], required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--l", type=float, default=10.0, dest="timescale",
                   help="dependence timescale for kind=dependent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", default=None)
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    start = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (ParseError, InvalidInputError, DimensionError, UnequalSampleError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except SammdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    finally:
        print(f"elapsed_s={time.perf_counter() - start:.3f}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
