"""Gradient-based maximization of the test-power surrogate.

The three deep-kernel parameters (mixing logit, log feature bandwidth, log
raw bandwidth) are trained by Adam-style ascent on the ratio of the unbiased
squared-MMD estimate to its regularized standard deviation, computed on
minibatches of the training split. Gradients are analytic and validated
against finite differences in the test suite; the featurizer stays frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import InvalidInputError, NumericalError
from .kernels import DeepKernelParams, GaussianBandwidth, sq_distances
from .validation import as_feature_matrix, check_paired, check_same_dims

__all__ = [
    "TrainConfig",
    "TrainTrace",
    "split_indices",
    "split_data",
    "grad_power_criterion",
    "train_kernel",
    "train_gaussian_bandwidth",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for kernel-parameter ascent."""

    learning_rate: float = 2e-4
    max_iters: int = 300
    minibatch_size: int = 64
    ridge: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    split_fraction: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if not 0 < self.split_fraction < 1:
            raise InvalidInputError("split_fraction must be in (0, 1)")
        if self.minibatch_size < 2:
            raise InvalidInputError("minibatch_size must be >= 2")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be >= 0")
        if not self.ridge > 0:
            raise InvalidInputError("ridge must be positive")


@dataclass
class TrainTrace:
    """Per-iteration criterion values and the final parameters."""

    iters: list = field(default_factory=list)  # (iteration, minibatch criterion)
    final_params: object = None
    diverged: bool = False


def split_indices(n: int, fraction: float, rng: np.random.Generator):
    """Disjoint train/test index arrays; train size rounds half up.

    Indices are sorted so each part preserves the original row order (keeps
    lag structure of ordered data intact within parts).
    """
    n_train = int(math.floor(fraction * n + 0.5))
    if n_train < 2 or n - n_train < 2:
        raise InvalidInputError(
            f"split of {n} rows at fraction {fraction} leaves fewer than 2 rows on a side"
        )
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_data(sx, sy, fraction: float, rng: np.random.Generator):
    """Uniform random disjoint split of each sample into train and test parts."""
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    tr_x, te_x = split_indices(sx.shape[0], fraction, rng)
    tr_y, te_y = split_indices(sy.shape[0], fraction, rng)
    return sx[tr_x], sx[te_x], sy[tr_y], sy[te_y]


def _deep_block(dr, df, mix, sf2, sr2):
    """Kernel block and its partials w.r.t. (mix logit, log sigma_feat, log sigma_raw)."""
    kf = np.exp(df / (-2.0 * sf2))
    kr = np.exp(dr / (-2.0 * sr2))
    bracket = (1.0 - mix) * kf + mix
    k = bracket * kr
    dk_dt = (mix * (1.0 - mix)) * (1.0 - kf) * kr
    dk_du = (1.0 - mix) * (kf * (df / sf2)) * kr
    dk_dv = k * (dr / sr2)
    return k, dk_dt, dk_du, dk_dv


def _criterion_from_h(h, dh_list, ridge):
    """Criterion value and gradient given H and its parameter partials."""
    n = h.shape[0]
    denom = n * (n - 1)
    mmd = (h.sum() - np.trace(h)) / denom
    row = h.sum(axis=1)
    total = row.sum()
    v_raw = 4.0 / n**3 * float(row @ row) - 4.0 / n**4 * total * total
    variance = v_raw + ridge
    clamped = variance < ridge
    if clamped:
        variance = ridge
    sigma = math.sqrt(variance)
    ratio = mmd / sigma
    grad = np.empty(len(dh_list))
    for i, dh in enumerate(dh_list):
        dmmd = (dh.sum() - np.trace(dh)) / denom
        if clamped:
            dvar = 0.0
        else:
            drow = dh.sum(axis=1)
            dvar = 8.0 / n**3 * float(row @ drow) - 8.0 / n**4 * total * dh.sum()
        grad[i] = dmmd / sigma - mmd * dvar / (2.0 * variance * sigma)
    return mmd, sigma, ratio, grad


def _deep_value_grad(dists, vec, ridge):
    """Criterion and 3-vector gradient from precomputed squared distances.

    ``dists`` holds (raw_xx, raw_yy, raw_xy, feat_xx, feat_yy, feat_xy).
    """
    dr_xx, dr_yy, dr_xy, df_xx, df_yy, df_xy = dists
    t, u, v = vec
    mix = float(expit(t))
    sf2 = math.exp(2.0 * u)
    sr2 = math.exp(2.0 * v)
    k_xx, dt_xx, du_xx, dv_xx = _deep_block(dr_xx, df_xx, mix, sf2, sr2)
    k_yy, dt_yy, du_yy, dv_yy = _deep_block(dr_yy, df_yy, mix, sf2, sr2)
    k_xy, dt_xy, du_xy, dv_xy = _deep_block(dr_xy, df_xy, mix, sf2, sr2)
    h = k_xx + k_yy - k_xy - k_xy.T
    dh = [
        dt_xx + dt_yy - dt_xy - dt_xy.T,
        du_xx + du_yy - du_xy - du_xy.T,
        dv_xx + dv_yy - dv_xy - dv_xy.T,
    ]
    return _criterion_from_h(h, dh, ridge)


def _gaussian_value_grad(dr_xx, dr_yy, dr_xy, log_sigma, ridge):
    """Criterion and d/d(log sigma) for a plain Gaussian kernel on raw inputs."""
    s2 = math.exp(2.0 * log_sigma)
    k_xx = np.exp(dr_xx / (-2.0 * s2))
    k_yy = np.exp(dr_yy / (-2.0 * s2))
    k_xy = np.exp(dr_xy / (-2.0 * s2))
    h = k_xx + k_yy - k_xy - k_xy.T
    dv_xy = k_xy * (dr_xy / s2)
    dh = [
        k_xx * (dr_xx / s2) + k_yy * (dr_yy / s2) - dv_xy - dv_xy.T,
    ]
    return _criterion_from_h(h, dh, ridge)


def _deep_dists(sx, sy, fx, fy):
    return (
        sq_distances(sx, sx),
        sq_distances(sy, sy),
        sq_distances(sx, sy),
        sq_distances(fx, fx),
        sq_distances(fy, fy),
        sq_distances(fx, fy),
    )


def grad_power_criterion(sx, sy, params: DeepKernelParams, ridge: float = 1e-8) -> np.ndarray:
    """Exact gradient of the power surrogate w.r.t. the unconstrained parameters.

    Component order matches ``DeepKernelParams.as_vector``: mixing logit,
    log feature bandwidth, log raw bandwidth.
    """
    sx = as_feature_matrix(sx, "sx")
    sy = as_feature_matrix(sy, "sy")
    check_same_dims(sx, sy, "samples")
    check_paired(sx, sy)
    if sx.shape[0] < 2:
        raise InvalidInputError("gradient needs n >= 2")
    fx = np.asarray(params.featurizer.transform(sx), dtype=np.float64)
    fy = np.asarray(params.featurizer.transform(sy), dtype=np.float64)
    _, _, _, grad = _deep_value_grad(
        _deep_dists(sx, sy, fx, fy), params.as_vector(), ridge
    )
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    return grad


class _Adam:
    """Adam moment accumulator; ``step`` returns the ascent update."""

    def __init__(self, size, cfg: TrainConfig):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.cfg = cfg

    def step(self, grad: np.ndarray) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.adam_beta1 * self.m + (1.0 - c.adam_beta1) * grad
        self.v = c.adam_beta2 * self.v + (1.0 - c.adam_beta2) * grad * grad
        m_hat = self.m / (1.0 - c.adam_beta1**self.t)
        v_hat = self.v / (1.0 - c.adam_beta2**self.t)
        return c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def _run_ascent(value_grad, vec0: np.ndarray, cfg: TrainConfig, nx: int, ny: int):
    """Shared minibatch Adam-ascent loop.

    ``value_grad(ix, iy, vec)`` returns (criterion ratio, gradient) on the
    given minibatch rows. Reverts to the last finite vector on divergence.
    """
    if min(nx, ny) < cfg.minibatch_size:
        raise InvalidInputError(
            f"train sets must have >= minibatch_size={cfg.minibatch_size} rows"
        )
    rng = np.random.default_rng(cfg.seed)
    vec = vec0.copy()
    adam = _Adam(vec.size, cfg)
    trace = TrainTrace()
    for it in range(1, cfg.max_iters + 1):
        ix = rng.choice(nx, size=cfg.minibatch_size, replace=False)
        iy = rng.choice(ny, size=cfg.minibatch_size, replace=False)
        ratio, grad = value_grad(ix, iy, vec)
        if not (math.isfinite(ratio) and np.all(np.isfinite(grad))):
            trace.diverged = True
            break
        new_vec = vec + adam.step(grad)
        if not np.all(np.isfinite(new_vec)):
            trace.diverged = True
            break
        vec = new_vec
        trace.iters.append((it, float(ratio)))
    return vec, trace


def train_kernel(sx_tr, sy_tr, init: DeepKernelParams, cfg: TrainConfig) -> TrainTrace:
    """Train the deep-kernel parameters on the training split."""
    sx_tr = as_feature_matrix(sx_tr, "sx_tr")
    sy_tr = as_feature_matrix(sy_tr, "sy_tr")
    check_same_dims(sx_tr, sy_tr, "train sets")
    fx = np.asarray(init.featurizer.transform(sx_tr), dtype=np.float64)
    fy = np.asarray(init.featurizer.transform(sy_tr), dtype=np.float64)

    def value_grad(ix, iy, vec):
        dists = _deep_dists(sx_tr[ix], sy_tr[iy], fx[ix], fy[iy])
        _, _, ratio, grad = _deep_value_grad(dists, vec, cfg.ridge)
        return ratio, grad

    vec, trace = _run_ascent(
        value_grad, init.as_vector(), cfg, sx_tr.shape[0], sy_tr.shape[0]
    )
    trace.final_params = init.with_vector(vec)
    return trace


def train_gaussian_bandwidth(
    sx_tr, sy_tr, init: GaussianBandwidth, cfg: TrainConfig
):
    """Train a plain Gaussian bandwidth by the same criterion ascent."""
    sx_tr = as_feature_matrix(sx_tr, "sx_tr")
    sy_tr = as_feature_matrix(sy_tr, "sy_tr")
    check_same_dims(sx_tr, sy_tr, "train sets")

    def value_grad(ix, iy, vec):
        bx, by = sx_tr[ix], sy_tr[iy]
        _, _, ratio, grad = _gaussian_value_grad(
            sq_distances(bx, bx),
            sq_distances(by, by),
            sq_distances(bx, by),
            vec[0],
            cfg.ridge,
        )
        return ratio, grad

    vec, trace = _run_ascent(
        value_grad,
        np.array([init.log_sigma]),
        cfg,
        sx_tr.shape[0],
        sy_tr.shape[0],
    )
    bandwidth = GaussianBandwidth(float(vec[0]))
    trace.final_params = bandwidth
    return trace, bandwidth
