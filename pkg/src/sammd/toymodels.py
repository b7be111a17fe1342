"""Desk-scale classifier, gradient attacks, featurizers, and data generators.

The classifier is a one-hidden-layer MLP with a softplus activation (smooth
everywhere, so finite-difference gradient checks are clean) and a softmax
output. Its hidden layer doubles as the semantic featurizer, and its input
gradients drive FGSM/PGD attack generation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DimensionError, InvalidInputError
from .validation import as_feature_matrix, as_labels

__all__ = [
    "ToyClassifier",
    "AttackConfig",
    "mlp_forward_backward",
    "train_toy_classifier",
    "semantic_features",
    "fgsm",
    "pgd",
    "gen_synthetic",
    "gen_non_iid",
    "gen_dependent_gaussian",
    "MLPFeaturizer",
    "IdentityFeaturizer",
]

NONIID_B_VARIANTS = 4  # dependent adversarial variants emitted per base row


def _softplus(z):
    return np.logaddexp(0.0, z)


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class ToyClassifier:
    """One-hidden-layer softplus MLP with softmax output."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)

    @property
    def n_in(self) -> int:
        return self.w1.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def init_random(cls, n_in: int, n_hidden: int, n_classes: int, seed: int) -> "ToyClassifier":
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((n_in, n_hidden)) / np.sqrt(n_in)
        w2 = rng.standard_normal((n_hidden, n_classes)) / np.sqrt(n_hidden)
        return cls(w1, np.zeros(n_hidden), w2, np.zeros(n_classes))

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.n_in:
            raise DimensionError(
                f"model expects {self.n_in} input dims, got {x.shape[-1]}"
            )

    def hidden(self, x) -> np.ndarray:
        """Hidden-layer activations, one row per input row."""
        x = as_feature_matrix(x, "x")
        self._check_input(x)
        return _softplus(x @ self.w1 + self.b1)

    def predict_proba(self, x) -> np.ndarray:
        x = as_feature_matrix(x, "x")
        self._check_input(x)
        return _softmax(self.hidden(x) @ self.w2 + self.b2)

    def predict(self, x) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)

    def loss_and_grads(self, x, labels):
        """Summed cross-entropy over rows with exact gradients.

        Returns (loss, grad_x, grads) where grads maps parameter names to
        arrays matching the parameter shapes.
        """
        x = as_feature_matrix(x, "x")
        self._check_input(x)
        labels = as_labels(labels, x.shape[0])
        if labels.max() >= self.n_classes:
            raise InvalidInputError(
                f"label {labels.max()} out of range for {self.n_classes} classes"
            )
        z1 = x @ self.w1 + self.b1
        a1 = _softplus(z1)
        z2 = a1 @ self.w2 + self.b2
        p = _softmax(z2)
        rows = np.arange(x.shape[0])
        # numerically stable -log softmax via the shifted logits
        shifted = z2 - z2.max(axis=1, keepdims=True)
        log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_p[rows, labels].sum())
        dz2 = p.copy()
        dz2[rows, labels] -= 1.0
        dw2 = a1.T @ dz2
        db2 = dz2.sum(axis=0)
        da1 = dz2 @ self.w2.T
        dz1 = expit(z1) * da1
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        grad_x = dz1 @ self.w1.T
        return loss, grad_x, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}

    def save(self, path) -> None:
        np.savez(path, w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2)

    @classmethod
    def load(cls, path) -> "ToyClassifier":
        with np.load(path) as data:
            return cls(data["w1"], data["b1"], data["w2"], data["b2"])


def mlp_forward_backward(model: ToyClassifier, x, label: int):
    """Loss and exact gradients for a single observation."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    loss, grad_x, grads = model.loss_and_grads(x, [int(label)])
    return loss, grad_x[0], grads


def train_toy_classifier(
    data,
    labels,
    epochs: int = 50,
    learning_rate: float = 0.1,
    seed: int = 0,
    hidden_units: int = 32,
    batch_size: int = 32,
) -> ToyClassifier:
    """Minibatch gradient descent on cross-entropy; deterministic given seed."""
    data = as_feature_matrix(data, "data")
    labels = as_labels(labels, data.shape[0])
    classes = np.unique(labels)
    if classes.size < 2:
        raise InvalidInputError("training needs at least 2 distinct classes")
    n_classes = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    model = ToyClassifier.init_random(data.shape[1], hidden_units, n_classes, seed)
    n = data.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, _, grads = model.loss_and_grads(data[idx], labels[idx])
            scale = learning_rate / idx.size
            model.w1 -= scale * grads["w1"]
            model.b1 -= scale * grads["b1"]
            model.w2 -= scale * grads["w2"]
            model.b2 -= scale * grads["b2"]
    return model


def semantic_features(model: ToyClassifier, x) -> np.ndarray:
    """Penultimate-layer representation used by the semantic-aware kernel."""
    return model.hidden(x)


@dataclass(frozen=True)
class AttackConfig:
    """Perturbation budget and iteration schedule for gradient attacks.

    ``lower``/``upper`` are per-coordinate domain bounds; None leaves that
    side unbounded. ``step_size`` may not exceed ``epsilon``.
    """

    epsilon: float
    steps: int = 20
    step_size: float | None = None
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidInputError("epsilon must be >= 0")
        if self.steps < 1:
            raise InvalidInputError("steps must be >= 1")
        if self.step_size is None:
            object.__setattr__(self, "step_size", self.epsilon / 10.0)
        if self.step_size < 0 or self.step_size > self.epsilon:
            raise InvalidInputError("require 0 <= step_size <= epsilon")

    @classmethod
    def from_data(cls, data, epsilon: float, steps: int = 20, step_size=None) -> "AttackConfig":
        """Domain bounds set to the data's per-coordinate empirical range."""
        data = as_feature_matrix(data, "data")
        return cls(
            epsilon=epsilon,
            steps=steps,
            step_size=step_size,
            lower=data.min(axis=0),
            upper=data.max(axis=0),
        )


def _clip_domain(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.lower is not None:
        x = np.maximum(x, cfg.lower)
    if cfg.upper is not None:
        x = np.minimum(x, cfg.upper)
    return x


def _ball_bounds(x: np.ndarray, epsilon: float):
    """Closed-ball bounds around x whose measured radius never exceeds epsilon.

    x +/- epsilon can round away from x by half an ulp; one nextafter step
    pulls such bounds back so that (hi - x) <= epsilon and (x - lo) <= epsilon
    hold in floating point exactly.
    """
    lo = x - epsilon
    hi = x + epsilon
    lo_bad = (x - lo) > epsilon
    hi_bad = (hi - x) > epsilon
    if np.any(lo_bad):
        lo = np.where(lo_bad, np.nextafter(lo, x), lo)
    if np.any(hi_bad):
        hi = np.where(hi_bad, np.nextafter(hi, x), hi)
    return lo, hi


def fgsm(model: ToyClassifier, x, labels, cfg: AttackConfig) -> np.ndarray:
    """Single sign-gradient step of size epsilon, clipped to the ball and domain."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = as_feature_matrix(x, "x")
    labels2 = as_labels(np.atleast_1d(labels), x2.shape[0])
    lo, hi = _ball_bounds(x2, cfg.epsilon)
    _, grad_x, _ = model.loss_and_grads(x2, labels2)
    # op order mirrors one pgd iteration so steps=1 pgd is bit-identical
    adv = x2 + cfg.epsilon * np.sign(grad_x)
    adv = np.clip(adv, lo, hi)
    adv = _clip_domain(adv, cfg)
    return adv[0] if single else adv


def pgd(model: ToyClassifier, x, labels, cfg: AttackConfig, init=None) -> np.ndarray:
    """Iterated sign-gradient ascent with projection onto the ball and domain.

    ``init`` optionally sets the starting point (e.g. a random restart); it is
    projected onto the feasible set before the first step.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = as_feature_matrix(x, "x")
    labels2 = as_labels(np.atleast_1d(labels), x2.shape[0])
    lo, hi = _ball_bounds(x2, cfg.epsilon)
    if init is None:
        cur = x2
    else:
        cur = np.asarray(init, dtype=np.float64).reshape(x2.shape)
        cur = np.clip(cur, lo, hi)
        cur = _clip_domain(cur, cfg)
    for _ in range(cfg.steps):
        _, grad_x, _ = model.loss_and_grads(cur, labels2)
        cur = cur + cfg.step_size * np.sign(grad_x)
        cur = np.clip(cur, lo, hi)
        cur = _clip_domain(cur, cfg)
    return cur[0] if single else cur


def gen_synthetic(kind: str, params: dict, n: int, seed: int):
    """Seeded IID draws from a named family; returns (data, labels)."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    params = dict(params or {})
    if kind == "gaussian":
        dim = int(params.get("dim", 2))
        mean = np.broadcast_to(np.asarray(params.get("mean", 0.0), dtype=np.float64), (dim,))
        std = float(params.get("std", 1.0))
        if dim < 1 or std <= 0:
            raise InvalidInputError("gaussian needs dim >= 1 and std > 0")
        data = mean + std * rng.standard_normal((n, dim))
        return data, np.zeros(n, dtype=np.int64)
    if kind == "blobs":
        centers = np.asarray(params.get("centers", [[0.0, 0.0], [3.0, 3.0]]), dtype=np.float64)
        std = float(params.get("std", 1.0))
        if centers.ndim != 2 or centers.shape[0] < 2 or std <= 0:
            raise InvalidInputError("blobs needs >= 2 centers and std > 0")
        labels = rng.integers(centers.shape[0], size=n)
        data = centers[labels] + std * rng.standard_normal((n, centers.shape[1]))
        return data, labels.astype(np.int64)
    raise InvalidInputError(f"unknown synthetic kind {kind!r}")


def gen_non_iid(
    flavor: str,
    base,
    labels,
    model: ToyClassifier,
    cfg: AttackConfig,
    rng: np.random.Generator,
    attack: str = "fgsm",
) -> np.ndarray:
    """Dependent adversarial data in one of two flavors.

    Flavor "a" attacks the rows the model was trained on, so every output row
    depends on the model and hence on every input row. Flavor "b" emits
    several adversarial variants per base row (independent random-start PGD
    restarts) and shuffles them together.
    """
    base = as_feature_matrix(base, "base")
    labels = as_labels(labels, base.shape[0])
    if flavor == "a":
        if attack == "fgsm":
            return fgsm(model, base, labels, cfg)
        if attack == "pgd":
            return pgd(model, base, labels, cfg)
        raise InvalidInputError(f"unknown attack {attack!r}")
    if flavor == "b":
        variants = []
        for _ in range(NONIID_B_VARIANTS):
            start = base + rng.uniform(-cfg.epsilon, cfg.epsilon, size=base.shape)
            variants.append(pgd(model, base, labels, cfg, init=start))
        out = np.vstack(variants)
        return out[rng.permutation(out.shape[0])]
    raise InvalidInputError(f"unknown non-IID flavor {flavor!r}")


def gen_dependent_gaussian(
    n: int,
    dim: int,
    timescale: float,
    seed: int,
    mean: float = 0.0,
    std: float = 1.0,
) -> np.ndarray:
    """Rows with the exact N(mean, std^2) marginal but lag-correlated in order.

    Each coordinate follows a stationary AR(1) chain with lag-1 correlation
    exp(-1/timescale), so small timescales approach IID draws.
    """
    if n < 2:
        raise InvalidInputError("need n >= 2 rows")
    if dim < 1 or std <= 0 or timescale <= 0:
        raise InvalidInputError("need dim >= 1, std > 0, timescale > 0")
    rho = np.exp(-1.0 / timescale)
    innov = np.sqrt(1.0 - rho * rho)
    rng = np.random.default_rng(seed)
    z = np.empty((n, dim))
    z[0] = rng.standard_normal(dim)
    for t in range(1, n):
        z[t] = rho * z[t - 1] + innov * rng.standard_normal(dim)
    return mean + std * z


class MLPFeaturizer(BaseEstimator, TransformerMixin):
    """Semantic featurizer backed by the hidden layer of a trained classifier."""

    def __init__(
        self,
        hidden_units: int = 32,
        epochs: int = 50,
        learning_rate: float = 0.1,
        batch_size: int = 32,
        seed: int = 0,
    ):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        self.model_ = train_toy_classifier(
            X,
            y,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            hidden_units=self.hidden_units,
            batch_size=self.batch_size,
        )
        return self

    def transform(self, X):
        if not hasattr(self, "model_"):
            raise InvalidInputError("featurizer is not fitted")
        return self.model_.hidden(X)

    @classmethod
    def from_model(cls, model: ToyClassifier) -> "MLPFeaturizer":
        feat = cls(hidden_units=model.n_hidden)
        feat.model_ = model
        return feat

    @classmethod
    def random(cls, n_in: int, hidden_units: int = 32, seed: int = 0) -> "MLPFeaturizer":
        """Fixed random-weights featurizer for unlabeled calibration data."""
        return cls.from_model(ToyClassifier.init_random(n_in, hidden_units, 2, seed))


class IdentityFeaturizer(BaseEstimator, TransformerMixin):
    """Featurizer that returns raw inputs unchanged."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return as_feature_matrix(X, "X")


class PrecomputedFeaturizer(BaseEstimator, TransformerMixin):
    """Featurizer backed by a fixed raw-row -> feature-row table.

    Used when features were computed offline (e.g. exported from a real
    model): rows are matched by exact content, so any subset or reordering
    of the registered raw rows can be featurized.
    """

    def __init__(self, raw_rows=None, feature_rows=None):
        self.raw_rows = raw_rows
        self.feature_rows = feature_rows
        self._table = {}
        self._dim = None
        if raw_rows is not None and feature_rows is not None:
            self.register(raw_rows, feature_rows)

    def register(self, raw_rows, feature_rows) -> None:
        raw = as_feature_matrix(raw_rows, "raw_rows")
        feats = as_feature_matrix(feature_rows, "feature_rows")
        if raw.shape[0] != feats.shape[0]:
            raise InvalidInputError(
                f"row count mismatch: {raw.shape[0]} raw vs {feats.shape[0]} feature rows"
            )
        if self._dim is None:
            self._dim = feats.shape[1]
        elif feats.shape[1] != self._dim:
            raise DimensionError("feature rows must share one dimension")
        for i in range(raw.shape[0]):
            self._table[raw[i].tobytes()] = feats[i]

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = as_feature_matrix(X, "X")
        out = np.empty((X.shape[0], self._dim))
        for i in range(X.shape[0]):
            row = self._table.get(X[i].tobytes())
            if row is None:
                raise InvalidInputError(
                    f"row {i} has no precomputed features (unregistered input)"
                )
            out[i] = row
        return out
