"""Kernel functions and gram-matrix construction.

Two kernels are provided: the Gaussian kernel exp(-||x-y||^2 / (2 sigma^2))
and a semantic-aware deep kernel

    k(x, y) = [(1 - mix) * k_feat(phi(x), phi(y)) + mix] * k_raw(x, y),

where phi is a fixed featurizer, k_feat and k_raw are Gaussian kernels on the
feature and raw spaces, and mix in (0, 1) keeps the bracket bounded away from
zero. Bandwidths are stored on log scale and mix as a logit so that gradient
ascent over the unconstrained parameters cannot leave the feasible region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import expit, logit

from .exceptions import InvalidInputError
from .validation import as_feature_matrix, as_vector, check_same_dims

__all__ = [
    "GaussianBandwidth",
    "DeepKernelParams",
    "GramBundle",
    "GaussianKernel",
    "DeepKernel",
    "gaussian_kernel",
    "deep_kernel",
    "gram_bundle",
    "median_heuristic",
    "sq_distances",
]


@dataclass(frozen=True)
class GaussianBandwidth:
    """Gaussian kernel bandwidth, stored as log(sigma)."""

    log_sigma: float

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    @classmethod
    def from_sigma(cls, sigma: float) -> "GaussianBandwidth":
        if not (sigma > 0 and math.isfinite(sigma)):
            raise InvalidInputError(f"bandwidth must be a positive finite number, got {sigma}")
        return cls(log_sigma=math.log(sigma))


@dataclass(frozen=True)
class DeepKernelParams:
    """Trainable parameters of the semantic-aware deep kernel.

    ``mix_logit`` is the pre-sigmoid mixing weight, ``sigma_feat`` the
    bandwidth on featurized inputs, ``sigma_raw`` the bandwidth on raw
    inputs. ``featurizer`` is any object with a ``transform(X)`` method;
    it is treated as fixed (never trained here).
    """

    mix_logit: float
    sigma_feat: GaussianBandwidth
    sigma_raw: GaussianBandwidth
    featurizer: object = None

    @property
    def mix(self) -> float:
        return float(expit(self.mix_logit))

    def as_vector(self) -> np.ndarray:
        """Unconstrained parameter vector [mix_logit, log sigma_feat, log sigma_raw]."""
        return np.array(
            [self.mix_logit, self.sigma_feat.log_sigma, self.sigma_raw.log_sigma]
        )

    def with_vector(self, vec) -> "DeepKernelParams":
        t, u, v = (float(z) for z in np.asarray(vec, dtype=np.float64))
        return replace(
            self,
            mix_logit=t,
            sigma_feat=GaussianBandwidth(u),
            sigma_raw=GaussianBandwidth(v),
        )

    @classmethod
    def initial(cls, sx, sy, featurizer, mix: float = 0.5) -> "DeepKernelParams":
        """Median-heuristic bandwidths on raw and featurized data; mix defaults to 0.5."""
        sx = as_feature_matrix(sx, "sx")
        sy = as_feature_matrix(sy, "sy")
        fx = np.asarray(featurizer.transform(sx), dtype=np.float64)
        fy = np.asarray(featurizer.transform(sy), dtype=np.float64)
        return cls(
            mix_logit=float(logit(mix)),
            sigma_feat=median_heuristic(fx, fy),
            sigma_raw=median_heuristic(sx, sy),
            featurizer=featurizer,
        )


@dataclass(frozen=True)
class GramBundle:
    """Cached kernel evaluations for one (S_X, S_Y, kernel) triple."""

    k_xx: np.ndarray
    k_yy: np.ndarray
    k_xy: np.ndarray

    @property
    def n(self) -> int:
        return self.k_xx.shape[0]

    @property
    def m(self) -> int:
        return self.k_yy.shape[0]


def sq_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances (exact, no dot-product expansion)."""
    return cdist(x, y, "sqeuclidean")


def gaussian_kernel(x, y, bandwidth: GaussianBandwidth) -> float:
    """Gaussian kernel exp(-||x-y||^2 / (2 sigma^2)) for two vectors."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    check_same_dims(xv, yv, "kernel inputs")
    d2 = float(np.sum((xv - yv) ** 2))
    s = bandwidth.sigma
    return math.exp(-d2 / (2.0 * s * s))


def deep_kernel(x_raw, y_raw, x_feat, y_feat, params: DeepKernelParams) -> float:
    """Semantic-aware deep kernel for one pair, given precomputed features."""
    kf = gaussian_kernel(x_feat, y_feat, params.sigma_feat)
    kr = gaussian_kernel(x_raw, y_raw, params.sigma_raw)
    mix = params.mix
    return ((1.0 - mix) * kf + mix) * kr


class GaussianKernel:
    """Gaussian kernel with a fixed bandwidth; evaluates pairs and gram blocks."""

    def __init__(self, bandwidth: GaussianBandwidth):
        self.bandwidth = bandwidth

    def pair(self, x, y) -> float:
        return gaussian_kernel(x, y, self.bandwidth)

    def gram(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = as_feature_matrix(x, "x")
        y = as_feature_matrix(y, "y")
        check_same_dims(x, y, "gram inputs")
        s = self.bandwidth.sigma
        return np.exp(sq_distances(x, y) / (-2.0 * s * s))


class DeepKernel:
    """Semantic-aware deep kernel; featurizes raw inputs through params.featurizer."""

    def __init__(self, params: DeepKernelParams):
        if params.featurizer is None:
            raise InvalidInputError("DeepKernel requires params.featurizer")
        self.params = params

    def pair(self, x_raw, y_raw) -> float:
        xf = self.params.featurizer.transform(np.atleast_2d(np.asarray(x_raw, dtype=np.float64)))
        yf = self.params.featurizer.transform(np.atleast_2d(np.asarray(y_raw, dtype=np.float64)))
        return deep_kernel(x_raw, y_raw, xf[0], yf[0], self.params)

    def gram(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = as_feature_matrix(x, "x")
        y = as_feature_matrix(y, "y")
        check_same_dims(x, y, "gram inputs")
        fx = np.asarray(self.params.featurizer.transform(x), dtype=np.float64)
        fy = np.asarray(self.params.featurizer.transform(y), dtype=np.float64)
        return deep_gram(x, y, fx, fy, self.params)


def deep_gram(
    x_raw: np.ndarray,
    y_raw: np.ndarray,
    x_feat: np.ndarray,
    y_feat: np.ndarray,
    params: DeepKernelParams,
) -> np.ndarray:
    """Deep-kernel gram block from precomputed features (no featurizer calls)."""
    sf = params.sigma_feat.sigma
    sr = params.sigma_raw.sigma
    kf = np.exp(sq_distances(x_feat, y_feat) / (-2.0 * sf * sf))
    kr = np.exp(sq_distances(x_raw, y_raw) / (-2.0 * sr * sr))
    mix = params.mix
    return ((1.0 - mix) * kf + mix) * kr


def gram_bundle(sx, sy, kernel) -> GramBundle:
    """All three gram blocks for two samples under one kernel.

    ``kernel`` is a GaussianKernel or DeepKernel (anything with ``gram``).
    """
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    check_same_dims(sx, sy, "samples")
    return GramBundle(
        k_xx=kernel.gram(sx, sx),
        k_yy=kernel.gram(sy, sy),
        k_xy=kernel.gram(sx, sy),
    )


def median_heuristic(sx, sy=None) -> GaussianBandwidth:
    """Median of nonzero pairwise distances over the pooled sample.

    Falls back to sigma = 1 when every pairwise distance is zero. Requires at
    least 2 pooled rows.
    """
    sx = as_feature_matrix(sx, "sx")
    pooled = sx if sy is None else np.vstack([sx, as_feature_matrix(sy, "sy")])
    if pooled.shape[0] < 2:
        raise InvalidInputError("median heuristic needs at least 2 pooled rows")
    dists = pdist(pooled, "euclidean")
    nonzero = dists[dists > 0]
    if nonzero.size == 0:
        return GaussianBandwidth.from_sigma(1.0)
    return GaussianBandwidth.from_sigma(float(np.median(nonzero)))
