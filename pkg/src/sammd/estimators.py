"""MMD point estimators, the power-proxy criterion, and HSIC.

The U-statistic estimator averages the off-diagonal entries of

    H[i, j] = k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(y_i, x_j)

and is unbiased for squared MMD. The biased (V-statistic) variant is the
all-pairs mean form and is nonnegative; it serves as the reference statistic
for bootstrap resampling. Kernel training maximizes the ratio of the
U-statistic to a regularized standard-deviation estimate, a surrogate for
asymptotic test power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, NumericalError, UnequalSampleError
from .kernels import (
    DeepKernelParams,
    GaussianBandwidth,
    GramBundle,
    deep_gram,
    gram_bundle,
    sq_distances,
)
from .validation import as_feature_matrix, check_paired, check_same_dims

__all__ = [
    "PowerCriterion",
    "h_matrix",
    "mmd_u_squared",
    "mmd_biased_squared",
    "regularized_variance",
    "power_criterion",
    "hsic",
    "hsic_dependence_score",
]


@dataclass(frozen=True)
class PowerCriterion:
    """Value of the test-power surrogate and its two ingredients."""

    mmd_sq: float       # unbiased squared-MMD estimate
    sigma: float        # regularized std-dev estimate, >= sqrt(ridge)
    ratio: float        # mmd_sq / sigma


def h_matrix(bundle: GramBundle) -> np.ndarray:
    """Pairwise H matrix of the U-statistic; requires equal sample sizes."""
    if bundle.n != bundle.m:
        raise UnequalSampleError(
            f"H matrix requires n == m, got {bundle.n} and {bundle.m}"
        )
    return bundle.k_xx + bundle.k_yy - bundle.k_xy - bundle.k_xy.T


def mmd_u_squared(h: np.ndarray) -> float:
    """Off-diagonal mean of H: the unbiased squared-MMD estimate (may be negative)."""
    n = h.shape[0]
    if n < 2:
        raise InvalidInputError("unbiased estimator needs n >= 2")
    return float((h.sum() - np.trace(h)) / (n * (n - 1)))


def mmd_biased_squared(bundle: GramBundle) -> float:
    """All-pairs-mean squared MMD: mean(K_xx) + mean(K_yy) - 2 mean(K_xy) >= 0."""
    if bundle.n < 1 or bundle.m < 1:
        raise InvalidInputError("biased estimator needs nonempty samples")
    return float(bundle.k_xx.mean() + bundle.k_yy.mean() - 2.0 * bundle.k_xy.mean())


def regularized_variance(h: np.ndarray, ridge: float) -> float:
    """Regularized variance estimate of the U-statistic under the alternative.

    Computes 4/n^3 * sum_i (sum_j H_ij)^2 - 4/n^4 * (sum_ij H_ij)^2 + ridge,
    clamped below at ridge so the square root stays real under floating-point
    cancellation.
    """
    n = h.shape[0]
    if n < 2:
        raise InvalidInputError("variance estimator needs n >= 2")
    if not ridge > 0:
        raise InvalidInputError("ridge must be positive")
    row = h.sum(axis=1)
    total = row.sum()
    v = 4.0 / n**3 * float(row @ row) - 4.0 / n**4 * total * total + ridge
    return max(v, ridge)


def power_criterion(sx, sy, params: DeepKernelParams, ridge: float = 1e-8) -> PowerCriterion:
    """Test-power surrogate for the deep kernel on two equally sized samples."""
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    check_paired(sx, sy)
    if sx.shape[0] < 2:
        raise InvalidInputError("power criterion needs n >= 2")
    fx = np.asarray(params.featurizer.transform(sx), dtype=np.float64)
    fy = np.asarray(params.featurizer.transform(sy), dtype=np.float64)
    bundle = GramBundle(
        k_xx=deep_gram(sx, sx, fx, fx, params),
        k_yy=deep_gram(sy, sy, fy, fy, params),
        k_xy=deep_gram(sx, sy, fx, fy, params),
    )
    h = h_matrix(bundle)
    m = mmd_u_squared(h)
    sigma = float(np.sqrt(regularized_variance(h, ridge)))
    ratio = m / sigma
    if not np.isfinite(ratio):
        raise NumericalError("power criterion is non-finite")
    return PowerCriterion(mmd_sq=m, sigma=sigma, ratio=ratio)


def hsic(sx, sy, bw_x: GaussianBandwidth, bw_y: GaussianBandwidth) -> float:
    """Plug-in dependence score between paired observations.

    Three-term form: the paired double sum of the kernel product, plus the
    product of the marginal kernel means, minus twice the mixed term
    (1/n^3) sum_i (sum_j K_x[i,j]) (sum_l K_y[i,l]).
    """
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    check_paired(sx, sy, "paired observations")
    n = sx.shape[0]
    if n < 2:
        raise InvalidInputError("hsic needs n >= 2 paired rows")
    s2x = 2.0 * bw_x.sigma ** 2
    s2y = 2.0 * bw_y.sigma ** 2
    kx = np.exp(-sq_distances(sx, sx) / s2x)
    ky = np.exp(-sq_distances(sy, sy) / s2y)
    joint = float((kx * ky).mean())
    marginals = float(kx.mean()) * float(ky.mean())
    mixed = float(kx.sum(axis=1) @ ky.sum(axis=1)) / n**3
    return joint + marginals - 2.0 * mixed


def pair_by_nearest(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Greedy bipartite matching of rows, closest cross-pairs assigned first.

    Returns an index array ``p`` such that ``b[p]`` pairs row-for-row with
    ``a``. Deterministic; ties break on flat index order.
    """
    n = a.shape[0]
    dist = sq_distances(a, b)
    match = np.full(n, -1)
    used = np.zeros(n, dtype=bool)
    remaining = n
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if match[i] < 0 and not used[j]:
            match[i] = j
            used[j] = True
            remaining -= 1
            if remaining == 0:
                break
    return match


def hsic_dependence_score(
    data,
    subset_size: int,
    repeats: int,
    seed: int,
    bandwidth: GaussianBandwidth | None = None,
) -> float:
    """Mean dependence score across repeated disjoint-subset draws.

    Each repeat draws two disjoint uniform subsets of ``subset_size`` rows,
    pairs them by greedy nearest-neighbor matching, and records the excess of
    the matched-pairing dependence over the dependence at the pairing the
    draw happened to produce:

        hsic(a, b[matched]) - hsic(a, b)

    The as-drawn pairing carries the exact same subsets and gram structure,
    so the subtraction cancels the plug-in estimator's dataset-level bias and
    what remains is alignment dependence: rows sharing a generation source
    (duplicates, attack variants of one base point) match across subsets and
    push the score up no matter how the dataset is ordered.

    ``bandwidth`` is a fixed constant used for both kernels; when comparing
    datasets, pass one shared constant well below the nearest-neighbor scale
    so that only genuine near-duplicates register. None falls back to the
    median heuristic on the full dataset.
    """
    data = as_feature_matrix(data, "data")
    if subset_size < 2:
        raise InvalidInputError("subset_size must be >= 2")
    if repeats < 1:
        raise InvalidInputError("repeats must be >= 1")
    if data.shape[0] < 2 * subset_size:
        raise InvalidInputError(
            f"need at least {2 * subset_size} rows, got {data.shape[0]}"
        )
    from .kernels import median_heuristic

    bw = bandwidth if bandwidth is not None else median_heuristic(data)
    rng = np.random.default_rng(seed)
    scores = np.empty(repeats)
    for r in range(repeats):
        idx = rng.choice(data.shape[0], size=2 * subset_size, replace=False)
        a = data[idx[:subset_size]]
        b = data[idx[subset_size:]]
        matched = hsic(a, b[pair_by_nearest(a, b)], bw, bw)
        scores[r] = matched - hsic(a, b, bw, bw)
    return float(scores.mean())
