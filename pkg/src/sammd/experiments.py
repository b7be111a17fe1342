"""Monte Carlo experiment harness: calibration, power sweeps, non-IID suites.

Trials are embarrassingly parallel. Each trial derives its RNG streams from
(master seed, trial index), so reports are identical for any worker count.
The SAMMD_THREADS environment variable caps worker parallelism (default: all
cores); BLAS pools are pinned to one thread inside each trial so floating
point results do not depend on the schedule.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone
from threadpoolctl import threadpool_limits

from .exceptions import InvalidInputError
from .toymodels import (
    AttackConfig,
    MLPFeaturizer,
    fgsm,
    gen_dependent_gaussian,
    gen_non_iid,
    gen_synthetic,
    pgd,
    train_toy_classifier,
)
from .two_sample import METHODS, SAMMDTest

__all__ = [
    "ReportRow",
    "ExperimentReport",
    "IIDGaussianPair",
    "DependentGaussianPair",
    "NaturalVsAttackedPair",
    "BlobAttackScenario",
    "make_test",
    "run_calibration",
    "run_power_sweep",
    "run_noniid_suite",
    "effective_workers",
]

POWER_AXES = ("epsilon", "set_size", "mixture_fraction")


@dataclass(frozen=True)
class ReportRow:
    """Aggregated rejection rate for one (method, condition) cell."""

    method: str
    condition: str
    axis_value: float | None
    trials: int
    rejections: int
    rejection_rate: float
    std_error: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "condition": self.condition,
            "axis_value": self.axis_value,
            "trials": self.trials,
            "rejections": self.rejections,
            "rejection_rate": self.rejection_rate,
            "std_error": self.std_error,
        }


@dataclass(frozen=True)
class ExperimentReport:
    """All rows of one harness run plus the master seed that produced them."""

    rows: tuple
    trials: int
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "master_seed": self.master_seed,
            "rows": [r.to_dict() for r in self.rows],
        }


def effective_workers() -> int:
    env = os.environ.get("SAMMD_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InvalidInputError(f"SAMMD_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _rate_row(method, condition, axis_value, rejects) -> ReportRow:
    trials = len(rejects)
    k = int(sum(rejects))
    rate = k / trials
    return ReportRow(
        method=method,
        condition=condition,
        axis_value=axis_value,
        trials=trials,
        rejections=k,
        rejection_rate=rate,
        std_error=math.sqrt(rate * (1.0 - rate) / trials),
    )


def _clone_test(prototype, **params):
    """Clone a test estimator, preserving its featurizer object.

    The featurizer is a frozen component shared across trials; a plain
    clone() would rebuild it unfitted.
    """
    est = clone(prototype)
    shallow = prototype.get_params(deep=False)
    if "featurizer" in shallow:
        est.set_params(featurizer=shallow["featurizer"])
    if params:
        est.set_params(**params)
    return est


def _run_trial(draw_pair, prototype, data_ss, test_seed) -> bool:
    with threadpool_limits(limits=1):
        rng = np.random.default_rng(data_ss)
        x, y = draw_pair(rng)
        est = _clone_test(prototype, seed=test_seed)
        est.fit(x, y)
        return bool(est.reject_)


def _map_trials(tasks):
    workers = effective_workers()
    if workers == 1 or len(tasks) == 1:
        return [_run_trial(*t) for t in tasks]
    return Parallel(n_jobs=workers, backend="loky")(
        delayed(_run_trial)(*t) for t in tasks
    )


def _rejections(draw_pair, prototype, trials: int, seed: int):
    tasks = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        data_ss, test_ss = child.spawn(2)
        tasks.append((draw_pair, prototype, data_ss, int(test_ss.generate_state(1)[0])))
    return _map_trials(tasks)


@dataclass(frozen=True)
class IIDGaussianPair:
    """Two independent IID Gaussian samples (a null-hypothesis generator)."""

    n: int
    dim: int = 2
    mean: float = 0.0
    std: float = 1.0

    def __call__(self, rng: np.random.Generator):
        x = self.mean + self.std * rng.standard_normal((self.n, self.dim))
        y = self.mean + self.std * rng.standard_normal((self.n, self.dim))
        return x, y


@dataclass(frozen=True)
class DependentGaussianPair:
    """Two independent AR-correlated samples with a shared Gaussian marginal."""

    n: int
    dim: int = 8
    timescale: float = 1.0
    mean: float = 0.0
    std: float = 1.0

    def __call__(self, rng: np.random.Generator):
        sx = int(rng.integers(2**63))
        sy = int(rng.integers(2**63))
        x = gen_dependent_gaussian(self.n, self.dim, self.timescale, sx, self.mean, self.std)
        y = gen_dependent_gaussian(self.n, self.dim, self.timescale, sy, self.mean, self.std)
        return x, y


@dataclass
class BlobAttackScenario:
    """Fixed classifier and data family for attack experiments.

    One scenario per harness seed: blobs are drawn around fixed centers, a
    toy classifier is trained once on a labeled natural draw, and adversarial
    samples are produced by attacking fresh draws against that classifier.
    """

    seed: int
    dim: int = 6
    n_classes: int = 3
    separation: float = 2.0
    std: float = 0.4
    n_train: int = 400
    hidden_units: int = 24
    train_epochs: int = 80
    train_lr: float = 0.3
    model: object = field(default=None, repr=False)
    featurizer: object = field(default=None, repr=False)
    centers: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0xB10B)))
        directions = rng.standard_normal((self.n_classes, self.dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        self.centers = self.separation * directions
        data, labels = self._draw_labeled(self.n_train, rng)
        self.model = train_toy_classifier(
            data,
            labels,
            epochs=self.train_epochs,
            learning_rate=self.train_lr,
            seed=self.seed,
            hidden_units=self.hidden_units,
        )
        self.featurizer = MLPFeaturizer.from_model(self.model)

    def _draw_labeled(self, n: int, rng: np.random.Generator):
        labels = rng.integers(self.n_classes, size=n)
        data = self.centers[labels] + self.std * rng.standard_normal((n, self.dim))
        return data, labels.astype(np.int64)

    def draw_natural(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._draw_labeled(n, rng)[0]

    def draw_attacked(
        self,
        n: int,
        rng: np.random.Generator,
        epsilon: float,
        attack: str = "pgd",
        noniid_flavor: str | None = None,
    ) -> np.ndarray:
        # bounds from the attacked rows themselves so points that stray past
        # the training range still satisfy the ball constraint after clipping
        if noniid_flavor is not None:
            base_n = max(2, math.ceil(n / 4))
            base, labels = self._draw_labeled(base_n, rng)
            cfg = AttackConfig.from_data(base, epsilon=epsilon)
            out = gen_non_iid(noniid_flavor, base, labels, self.model, cfg, rng, attack=attack)
            return out[:n]
        base, labels = self._draw_labeled(n, rng)
        cfg = AttackConfig.from_data(base, epsilon=epsilon)
        if attack == "fgsm":
            return fgsm(self.model, base, labels, cfg)
        if attack == "pgd":
            return pgd(self.model, base, labels, cfg)
        raise InvalidInputError(f"unknown attack {attack!r}")


@dataclass(frozen=True)
class NaturalVsAttackedPair:
    """Natural sample vs (possibly partially) adversarial sample generator."""

    scenario: BlobAttackScenario
    n: int
    epsilon: float
    attack: str = "pgd"
    natural_fraction: float = 0.0
    noniid_flavor: str | None = None

    def __call__(self, rng: np.random.Generator):
        x = self.scenario.draw_natural(self.n, rng)
        n_nat = int(round(self.natural_fraction * self.n))
        n_adv = self.n - n_nat
        parts = []
        if n_adv > 0:
            parts.append(
                self.scenario.draw_attacked(
                    n_adv, rng, self.epsilon, self.attack, self.noniid_flavor
                )
            )
        if n_nat > 0:
            parts.append(self.scenario.draw_natural(n_nat, rng))
        y = np.vstack(parts)
        return x, y[rng.permutation(y.shape[0])]


def _fit_minibatch(prototype, n: int, split_fraction: float = 0.5):
    """Clamp the training minibatch so small set sizes stay runnable."""
    params = prototype.get_params(deep=False)
    if "minibatch_size" not in params:
        return prototype
    train_rows = int(math.floor(split_fraction * n + 0.5))
    size = max(2, min(params["minibatch_size"], train_rows))
    return _clone_test(prototype, minibatch_size=size)


def make_test(method: str, featurizer=None, **overrides):
    """Estimator prototype for a method name.

    Overrides that a method does not accept (e.g. training parameters for
    mmd-g) are silently dropped so one override set can configure a whole
    method comparison.
    """
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")
    cls = METHODS[method]
    valid = set(cls().get_params())
    kept = {k: v for k, v in overrides.items() if k in valid}
    if cls is SAMMDTest:
        kept["featurizer"] = featurizer
    return cls(**kept)


def run_calibration(
    draw_pair, prototype, trials: int, seed: int, condition: str = "h0"
) -> ExperimentReport:
    """Rejection rate under repeated draws from a null generator."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    rejects = _rejections(draw_pair, prototype, trials, seed)
    row = _rate_row(_method_of(prototype), condition, None, rejects)
    return ExperimentReport(rows=(row,), trials=trials, master_seed=seed)


def _method_of(prototype) -> str:
    for name, cls in METHODS.items():
        if type(prototype) is cls:
            return name
    return type(prototype).__name__


def run_power_sweep(
    axis: str,
    values,
    scenario: BlobAttackScenario,
    prototype,
    trials: int,
    seed: int,
    n: int = 200,
    epsilon: float = 0.2,
    attack: str = "pgd",
) -> ExperimentReport:
    """Rejection-rate curve along one experimental axis.

    Axes: ``epsilon`` (perturbation bound), ``set_size`` (rows per sample),
    ``mixture_fraction`` (fraction of the second sample replaced by fresh
    natural rows; fraction 1.0 is a pure null condition).
    """
    if axis not in POWER_AXES:
        raise InvalidInputError(f"axis must be one of {POWER_AXES}, got {axis!r}")
    values = list(values)
    if not values:
        raise InvalidInputError("values must be non-empty")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    method = _method_of(prototype)
    rows = []
    for idx, value in enumerate(values):
        if axis == "epsilon":
            pair = NaturalVsAttackedPair(scenario, n, float(value), attack)
            proto = _fit_minibatch(prototype, n)
        elif axis == "set_size":
            pair = NaturalVsAttackedPair(scenario, int(value), epsilon, attack)
            proto = _fit_minibatch(prototype, int(value))
        else:
            pair = NaturalVsAttackedPair(
                scenario, n, epsilon, attack, natural_fraction=float(value)
            )
            proto = _fit_minibatch(prototype, n)
        rejects = _rejections(pair, proto, trials, seed + idx)
        rows.append(_rate_row(method, axis, float(value), rejects))
    return ExperimentReport(rows=tuple(rows), trials=trials, master_seed=seed)


def run_noniid_suite(
    flavor: str,
    methods,
    trials: int,
    seed: int,
    scenario: BlobAttackScenario | None = None,
    n: int = 100,
    epsilon: float = 0.2,
    dep_timescale: float = 1.0,
    dep_dim: int = 8,
    wild_timescale: float = 3.0,
    featurizer_seed: int = 7,
    **test_overrides,
) -> ExperimentReport:
    """Side-by-side method comparison on non-IID data.

    Two conditions per method: power on dependent adversarial data (the
    chosen flavor) and type-I error on dependent null data. For the
    dependent-null condition the wild-bootstrap methods use a weight-process
    timescale that over-covers the data dependence (absorbing dependence
    needs weight correlation at least as long-ranged as the data's).
    """
    if flavor not in ("a", "b"):
        raise InvalidInputError("flavor must be 'a' or 'b'")
    if scenario is None:
        scenario = BlobAttackScenario(seed=seed)
    rows = []
    dep_pair = DependentGaussianPair(n=n, dim=dep_dim, timescale=dep_timescale)
    h1_pair = NaturalVsAttackedPair(scenario, n, epsilon, noniid_flavor=flavor)
    cal_featurizer = MLPFeaturizer.random(dep_dim, seed=featurizer_seed)
    for method in methods:
        proto = _fit_minibatch(
            make_test(method, featurizer=scenario.featurizer, **test_overrides), n
        )
        rejects = _rejections(h1_pair, proto, trials, seed)
        rows.append(_rate_row(method, f"h1-noniid-{flavor}", None, rejects))

        h0_overrides = dict(test_overrides)
        if method in ("sammd", "mmd-o-wb"):
            h0_overrides["timescale"] = wild_timescale
        h0_proto = _fit_minibatch(
            make_test(method, featurizer=cal_featurizer, **h0_overrides), n
        )
        rejects = _rejections(dep_pair, h0_proto, trials, seed + 1)
        rows.append(_rate_row(method, "h0-dependent", None, rejects))
    return ExperimentReport(rows=tuple(rows), trials=trials, master_seed=seed)
