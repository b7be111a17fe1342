"""Null-distribution simulation and p-values.

Two resampling schemes are provided. The wild bootstrap multiplies kernel
terms by centered draws from an autocorrelated standard-normal weight
process and remains valid when observations are temporally dependent. The
permutation bootstrap pools and reshuffles the two samples and is valid only
for exchangeable (IID) data.

Every resampling draw derives its RNG stream from (seed, draw index), so
results are reproducible and independent of execution schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import mmd_biased_squared
from .exceptions import DimensionError, InvalidInputError, UnequalSampleError
from .kernels import GramBundle, gram_bundle
from .validation import as_feature_matrix, check_paired, check_same_dims

__all__ = [
    "WildBootstrapConfig",
    "NullDraws",
    "wild_weights",
    "center_weights",
    "wild_statistic",
    "wild_bootstrap_null",
    "permutation_null",
    "p_value",
]


@dataclass(frozen=True)
class WildBootstrapConfig:
    """Weight-process timescale, resample count, and master seed."""

    timescale: float = 0.2
    n_perm: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.timescale > 0:
            raise InvalidInputError("timescale must be positive")
        if self.n_perm < 1:
            raise InvalidInputError("n_perm must be >= 1")


@dataclass(frozen=True)
class NullDraws:
    """Resampled null statistics alongside the observed statistic."""

    values: np.ndarray
    observed: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.size < 1:
            raise InvalidInputError("null draws must be non-empty")
        if not (np.all(np.isfinite(self.values)) and math.isfinite(self.observed)):
            raise InvalidInputError("null draws must be finite")


def wild_weights(n: int, timescale: float, rng: np.random.Generator) -> np.ndarray:
    """One realization of the autocorrelated weight process.

    W_0 is standard normal and W_t = a W_{t-1} + sqrt(1 - a^2) e_t with
    a = exp(-1/timescale), so every W_t is marginally standard normal and
    lag-k autocorrelation is exp(-k/timescale).
    """
    if n < 1:
        raise InvalidInputError("need n >= 1 weights")
    if not timescale > 0:
        raise InvalidInputError("timescale must be positive")
    a = math.exp(-1.0 / timescale)
    b = math.sqrt(1.0 - a * a)
    draws = rng.standard_normal(n)
    w = np.empty(n)
    w[0] = draws[0]
    for t in range(1, n):
        w[t] = a * w[t - 1] + b * draws[t]
    return w


def center_weights(w) -> np.ndarray:
    """Subtract the mean so the weights sum to zero."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise InvalidInputError("cannot center an empty weight list")
    return w - w.mean()


def wild_statistic(bundle: GramBundle, wx, wy) -> float:
    """Weighted three-term statistic for one set of centered weights.

    (1/n^2) wx' K_xx wx + (1/m^2) wy' K_yy wy - (2/nm) wx' K_xy wy.
    """
    wx = np.asarray(wx, dtype=np.float64)
    wy = np.asarray(wy, dtype=np.float64)
    n, m = bundle.n, bundle.m
    if wx.shape != (n,) or wy.shape != (m,):
        raise DimensionError(
            f"weights must have lengths {n} and {m}, got {wx.shape} and {wy.shape}"
        )
    t_xx = float(wx @ bundle.k_xx @ wx) / (n * n)
    t_yy = float(wy @ bundle.k_yy @ wy) / (m * m)
    t_xy = float(wx @ bundle.k_xy @ wy) / (n * m)
    return t_xx + t_yy - 2.0 * t_xy


def wild_bootstrap_null(bundle: GramBundle, cfg: WildBootstrapConfig) -> NullDraws:
    """Simulate the null by wild bootstrap; observed is the biased statistic.

    Each draw i uses a child stream of ``cfg.seed`` (spawn index i) to
    generate independent weight processes for X and Y, centers them, and
    evaluates the weighted statistic.
    """
    observed = mmd_biased_squared(bundle)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_perm)
    values = np.empty(cfg.n_perm)
    for i in range(cfg.n_perm):
        rng = np.random.default_rng(streams[i])
        wx = center_weights(wild_weights(bundle.n, cfg.timescale, rng))
        wy = center_weights(wild_weights(bundle.m, cfg.timescale, rng))
        values[i] = wild_statistic(bundle, wx, wy)
    return NullDraws(values=values, observed=observed)


def permutation_null(sx, sy, kernel, n_perm: int, seed: int) -> NullDraws:
    """Simulate the null by pooling all rows, reshuffling, and splitting in half.

    Valid only for IID data. The kernel is fixed across draws; the pooled
    gram matrix is computed once and reindexed per draw.
    """
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    check_same_dims(sx, sy, "samples")
    check_paired(sx, sy)
    n = sx.shape[0]
    if n < 2:
        raise InvalidInputError("permutation bootstrap needs n >= 2")
    if n_perm < 1:
        raise InvalidInputError("n_perm must be >= 1")
    observed = mmd_biased_squared(gram_bundle(sx, sy, kernel))
    pooled = np.vstack([sx, sy])
    g = kernel.gram(pooled, pooled)
    total = float(g.sum())
    streams = np.random.SeedSequence(seed).spawn(n_perm)
    values = np.empty(n_perm)
    n_sq = float(n * n)
    for i in range(n_perm):
        rng = np.random.default_rng(streams[i])
        perm = rng.permutation(2 * n)
        # block sums via one matvec with the first-half indicator:
        # s_xx + s_yy + 2 s_xy = total, so two dot products finish the job
        z = np.zeros(2 * n)
        z[perm[:n]] = 1.0
        w = g @ z
        s_xx = float(z @ w)
        row_x = float(w.sum())  # ones' G z = s_xx + s_xy
        s_xy = row_x - s_xx
        s_yy = total - s_xx - 2.0 * s_xy
        values[i] = (s_xx + s_yy - 2.0 * s_xy) / n_sq
    return NullDraws(values=values, observed=observed)


def p_value(draws: NullDraws) -> float:
    """Fraction of resampled values >= observed (ties count as exceedances)."""
    return float(np.count_nonzero(draws.values >= draws.observed) / draws.values.size)
