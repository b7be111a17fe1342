"""Two-sample test estimators with a scikit-learn style interface.

Each test is configured through ``__init__`` (so ``get_params``/``set_params``
and ``clone`` work), runs via ``fit(X, Y)``, and exposes ``statistic_``,
``p_value_``, ``reject_``, ``null_draws_``, and ``result_`` afterwards. The
rejection rule is strict: reject exactly when p_value < alpha.

Methods:

* ``SAMMDTest``   - semantic-aware deep kernel trained on a held-out split,
                    wild-bootstrap null (valid for non-IID data).
* ``MMDGTest``    - median-heuristic Gaussian kernel, permutation null.
* ``MMDOTest``    - Gaussian kernel with trained bandwidth, permutation null.
* ``MMDOWBTest``  - trained Gaussian kernel, wild-bootstrap null.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InvalidInputError
from .kernels import (
    DeepKernel,
    DeepKernelParams,
    GaussianKernel,
    gram_bundle,
    median_heuristic,
)
from .resampling import (
    NullDraws,
    WildBootstrapConfig,
    p_value,
    permutation_null,
    wild_bootstrap_null,
)
from .toymodels import IdentityFeaturizer
from .training import TrainConfig, split_indices, train_gaussian_bandwidth, train_kernel
from .validation import as_feature_matrix, check_same_dims

__all__ = [
    "TestResult",
    "SAMMDTest",
    "MMDGTest",
    "MMDOTest",
    "MMDOWBTest",
    "sammd_test",
    "baseline_test",
    "METHODS",
]


@dataclass(frozen=True)
class TestResult:
    """Outcome of one two-sample test."""

    method: str
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    null_draws: NullDraws
    trained_params: object = None
    trace: object = None


def _derive_seeds(seed: int, count: int):
    """Independent integer seeds derived from one master seed."""
    states = np.random.SeedSequence(seed).spawn(count)
    return [int(s.generate_state(1)[0]) for s in states]


def _equalize(x: np.ndarray, y: np.ndarray, rng: np.random.Generator):
    """Subsample the larger sample (uniform, order-preserving) so sizes match."""
    nx, ny = x.shape[0], y.shape[0]
    if nx == ny:
        return x, y
    if nx > ny:
        keep = np.sort(rng.choice(nx, size=ny, replace=False))
        return x[keep], y
    keep = np.sort(rng.choice(ny, size=nx, replace=False))
    return x, y[keep]


class _FittedTestMixin:
    """Shared post-fit attribute wiring."""

    def _finalize(self, method, observed, draws, trained_params=None, trace=None):
        p = p_value(draws)
        self.statistic_ = float(observed)
        self.p_value_ = p
        self.null_draws_ = draws
        self.reject_ = bool(p < self.alpha)
        self.result_ = TestResult(
            method=method,
            statistic=self.statistic_,
            p_value=p,
            reject=self.reject_,
            alpha=self.alpha,
            null_draws=draws,
            trained_params=trained_params,
            trace=trace,
        )
        return self

    def _check_alpha(self):
        if not 0 < self.alpha < 1:
            raise InvalidInputError("alpha must be in (0, 1)")


class SAMMDTest(BaseEstimator, _FittedTestMixin):
    """Semantic-aware MMD test with trained deep kernel and wild bootstrap.

    ``fit(X, Y)`` equalizes sample sizes, splits each sample into a training
    and a testing part, trains the deep-kernel parameters on the training
    parts, then simulates the null on the testing parts with the wild
    bootstrap. ``featurizer`` must expose ``transform``; None means raw
    inputs are used as their own features.
    """

    def __init__(
        self,
        featurizer=None,
        alpha: float = 0.05,
        n_perm: int = 200,
        timescale: float = 0.2,
        learning_rate: float = 0.05,
        max_iters: int = 150,
        minibatch_size: int = 64,
        ridge: float = 1e-8,
        split_fraction: float = 0.5,
        seed: int = 0,
    ):
        self.featurizer = featurizer
        self.alpha = alpha
        self.n_perm = n_perm
        self.timescale = timescale
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.minibatch_size = minibatch_size
        self.ridge = ridge
        self.split_fraction = split_fraction
        self.seed = seed

    def fit(self, X, Y):
        self._check_alpha()
        X = as_feature_matrix(X, "X")
        Y = as_feature_matrix(Y, "Y")
        check_same_dims(X, Y, "samples")
        eq_seed, split_seed, train_seed, boot_seed = _derive_seeds(self.seed, 4)
        X, Y = _equalize(X, Y, np.random.default_rng(eq_seed))

        rng = np.random.default_rng(split_seed)
        tr_x, te_x = split_indices(X.shape[0], self.split_fraction, rng)
        tr_y, te_y = split_indices(Y.shape[0], self.split_fraction, rng)
        assert np.intersect1d(tr_x, te_x).size == 0
        assert np.intersect1d(tr_y, te_y).size == 0
        self.split_indices_ = {"x": (tr_x, te_x), "y": (tr_y, te_y)}

        featurizer = self.featurizer if self.featurizer is not None else IdentityFeaturizer()
        init = DeepKernelParams.initial(X[tr_x], Y[tr_y], featurizer)
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            max_iters=self.max_iters,
            minibatch_size=self.minibatch_size,
            ridge=self.ridge,
            seed=train_seed,
            split_fraction=self.split_fraction,
        )
        trace = train_kernel(X[tr_x], Y[tr_y], init, cfg)
        self.trained_params_ = trace.final_params
        self.trace_ = trace

        bundle = gram_bundle(X[te_x], Y[te_y], DeepKernel(trace.final_params))
        draws = wild_bootstrap_null(
            bundle,
            WildBootstrapConfig(timescale=self.timescale, n_perm=self.n_perm, seed=boot_seed),
        )
        return self._finalize("sammd", draws.observed, draws, trace.final_params, trace)


class MMDGTest(BaseEstimator, _FittedTestMixin):
    """MMD test with a median-heuristic Gaussian kernel and permutation null."""

    def __init__(self, alpha: float = 0.05, n_perm: int = 200, seed: int = 0):
        self.alpha = alpha
        self.n_perm = n_perm
        self.seed = seed

    def fit(self, X, Y):
        self._check_alpha()
        X = as_feature_matrix(X, "X")
        Y = as_feature_matrix(Y, "Y")
        check_same_dims(X, Y, "samples")
        eq_seed, perm_seed = _derive_seeds(self.seed, 2)
        X, Y = _equalize(X, Y, np.random.default_rng(eq_seed))
        kernel = GaussianKernel(median_heuristic(X, Y))
        self.kernel_ = kernel
        draws = permutation_null(X, Y, kernel, self.n_perm, perm_seed)
        return self._finalize("mmd-g", draws.observed, draws, kernel.bandwidth)


class MMDOTest(BaseEstimator, _FittedTestMixin):
    """MMD test with a power-criterion-trained Gaussian bandwidth.

    The bandwidth is trained on a held-out split; the null is simulated by
    permutation on the testing parts (IID data only).
    """

    method_name = "mmd-o"

    def __init__(
        self,
        alpha: float = 0.05,
        n_perm: int = 200,
        learning_rate: float = 0.05,
        max_iters: int = 150,
        minibatch_size: int = 64,
        ridge: float = 1e-8,
        split_fraction: float = 0.5,
        seed: int = 0,
    ):
        self.alpha = alpha
        self.n_perm = n_perm
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.minibatch_size = minibatch_size
        self.ridge = ridge
        self.split_fraction = split_fraction
        self.seed = seed

    def _null_draws(self, sx_te, sy_te, kernel, seed: int) -> NullDraws:
        return permutation_null(sx_te, sy_te, kernel, self.n_perm, seed)

    def fit(self, X, Y):
        self._check_alpha()
        X = as_feature_matrix(X, "X")
        Y = as_feature_matrix(Y, "Y")
        check_same_dims(X, Y, "samples")
        eq_seed, split_seed, train_seed, null_seed = _derive_seeds(self.seed, 4)
        X, Y = _equalize(X, Y, np.random.default_rng(eq_seed))

        rng = np.random.default_rng(split_seed)
        tr_x, te_x = split_indices(X.shape[0], self.split_fraction, rng)
        tr_y, te_y = split_indices(Y.shape[0], self.split_fraction, rng)
        self.split_indices_ = {"x": (tr_x, te_x), "y": (tr_y, te_y)}

        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            max_iters=self.max_iters,
            minibatch_size=self.minibatch_size,
            ridge=self.ridge,
            seed=train_seed,
            split_fraction=self.split_fraction,
        )
        trace, bandwidth = train_gaussian_bandwidth(
            X[tr_x], Y[tr_y], median_heuristic(X[tr_x], Y[tr_y]), cfg
        )
        self.kernel_ = GaussianKernel(bandwidth)
        self.trace_ = trace
        draws = self._null_draws(X[te_x], Y[te_y], self.kernel_, null_seed)
        return self._finalize(self.method_name, draws.observed, draws, bandwidth, trace)


class MMDOWBTest(MMDOTest):
    """Trained-bandwidth Gaussian MMD with a wild-bootstrap null."""

    method_name = "mmd-o-wb"

    def __init__(
        self,
        alpha: float = 0.05,
        n_perm: int = 200,
        timescale: float = 0.2,
        learning_rate: float = 0.05,
        max_iters: int = 150,
        minibatch_size: int = 64,
        ridge: float = 1e-8,
        split_fraction: float = 0.5,
        seed: int = 0,
    ):
        super().__init__(
            alpha=alpha,
            n_perm=n_perm,
            learning_rate=learning_rate,
            max_iters=max_iters,
            minibatch_size=minibatch_size,
            ridge=ridge,
            split_fraction=split_fraction,
            seed=seed,
        )
        self.timescale = timescale

    def _null_draws(self, sx_te, sy_te, kernel, seed: int) -> NullDraws:
        bundle = gram_bundle(sx_te, sy_te, kernel)
        return wild_bootstrap_null(
            bundle,
            WildBootstrapConfig(timescale=self.timescale, n_perm=self.n_perm, seed=seed),
        )


METHODS = {
    "sammd": SAMMDTest,
    "mmd-g": MMDGTest,
    "mmd-o": MMDOTest,
    "mmd-o-wb": MMDOWBTest,
}


def sammd_test(sx, sy, featurizer=None, **params) -> TestResult:
    """Run the full SAMMD test and return its result."""
    return SAMMDTest(featurizer=featurizer, **params).fit(sx, sy).result_


def baseline_test(sx, sy, method: str, **params) -> TestResult:
    """Run one of the baseline MMD tests (mmd-g, mmd-o, mmd-o-wb)."""
    if method not in METHODS or method == "sammd":
        raise InvalidInputError(f"unknown baseline method {method!r}")
    return METHODS[method](**params).fit(sx, sy).result_
