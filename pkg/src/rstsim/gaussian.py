"""The Gaussian classification model and its closed-form error laws.

Inputs are x | y ~ N(y * mu, sigma^2 I) with y uniform on {-1, +1}. A
linear classifier predicts sign(theta^T x), with sign(0) = +1 throughout
the package. The adversary perturbs inputs inside an l-infinity ball of
radius epsilon, which for a linear classifier shifts the score by at
most epsilon * ||theta||_1, so both the clean and the worst-case
misclassification probabilities reduce to Gaussian tail evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statkit import RngStream, q_function


def _as_float_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a 1-d vector with at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class GaussianModel:
    """Mean vector, noise scale, and attack radius of one problem instance.

    n0 records the sample-complexity scale the canonical construction was
    built from; it is provenance only and never enters the error formulas.
    """

    mu: np.ndarray
    sigma: float
    epsilon: float
    n0: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_float_vector(self.mu, "mu"))
        if not (self.sigma > 0.0) or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not (self.epsilon >= 0.0) or not np.isfinite(self.epsilon):
            raise ValueError(f"epsilon must be >= 0 and finite, got {self.epsilon!r}")

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class LinearClassifier:
    """Weight vector of the halfspace sign(theta^T x), sign(0) = +1."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_float_vector(self.theta, "theta"))


@dataclass(frozen=True)
class LabeledSet:
    """Rows of inputs paired with their +-1 labels."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys)
        if xs.ndim != 2:
            raise ValueError("xs must be an (n, d) matrix")
        if ys.shape != (xs.shape[0],):
            raise ValueError("ys must have one label per row of xs")
        if not np.all(np.isin(ys, (-1, 1))):
            raise ValueError("labels must be +-1")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys.astype(np.int64))

    @property
    def n(self) -> int:
        return self.xs.shape[0]


def canonical_model(n0: int, d: int, epsilon: float,
                    allow_large_epsilon: bool = False) -> GaussianModel:
    """Construct the scaling family instance: mu = all-ones, sigma = (n0 d)^(1/4).

    With this choice ||mu||^2 / sigma^2 = sqrt(d / n0) and
    ||mu||_1 / ||mu||_2 = sqrt(d) exactly. epsilon >= 1/2 collapses the
    robust problem (the perturbation can cross between the class means)
    and is rejected unless allow_large_epsilon is set.
    """
    n0 = int(n0)
    d = int(d)
    if n0 < 1:
        raise ValueError(f"n0 must be >= 1, got {n0}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    epsilon = float(epsilon)
    if not (epsilon >= 0.0) or not np.isfinite(epsilon):
        raise ValueError(f"epsilon must be >= 0 and finite, got {epsilon!r}")
    if epsilon >= 0.5 and not allow_large_epsilon:
        raise ValueError(
            f"epsilon = {epsilon} >= 0.5 is outside the meaningful attack range; "
            "pass allow_large_epsilon=True to override")
    sigma = float((n0 * d) ** 0.25)
    return GaussianModel(mu=np.ones(d), sigma=sigma, epsilon=epsilon, n0=n0)


def sample_labeled(model: GaussianModel, n: int, stream: RngStream) -> LabeledSet:
    """Draw n labeled samples.

    Draw order (fixed for reproducibility): n label bits first, then the
    (n, d) noise matrix row-major. x_i = y_i * mu + sigma * z_i.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ys = 2 * stream.integers(0, 2, size=n, dtype=np.int64) - 1
    zs = stream.standard_normal((n, model.d))
    xs = ys[:, None] * model.mu[None, :] + model.sigma * zs
    return LabeledSet(xs=xs, ys=ys)


def _alignment_ratios(model: GaussianModel, clf: LinearClassifier) -> tuple[float, float]:
    theta = clf.theta
    if theta.shape != model.mu.shape:
        raise ValueError(
            f"theta has dimension {theta.size}, model has dimension {model.d}")
    # ufunc reductions, not BLAS dot: summation order must not depend on
    # ambient thread-pool state (byte-stable CSV across worker counts).
    l2 = float(np.sqrt(np.sum(theta * theta)))
    if l2 == 0.0:
        raise ValueError("theta must be nonzero")
    mu_dot = float(np.sum(model.mu * theta))
    l1 = float(np.sum(np.abs(theta)))
    return mu_dot / (model.sigma * l2), l1 / (model.sigma * l2)


def standard_error(model: GaussianModel, clf: LinearClassifier) -> float:
    """Exact clean misclassification probability Q(mu^T theta / (sigma ||theta||_2))."""
    align, _ = _alignment_ratios(model, clf)
    return q_function(align)


def robust_error(model: GaussianModel, clf: LinearClassifier) -> float:
    """Exact worst-case l-infinity misclassification probability.

    The optimal attack shifts the score by epsilon * ||theta||_1 against
    the label, giving Q((mu^T theta - epsilon ||theta||_1) / (sigma ||theta||_2)).
    Never smaller than standard_error; equal when epsilon = 0.
    """
    align, l1_ratio = _alignment_ratios(model, clf)
    return q_function(align - model.epsilon * l1_ratio)


def mc_error_estimate(model: GaussianModel, clf: LinearClassifier,
                      n_samples: int, stream: RngStream) -> tuple[float, float]:
    """Monte Carlo (standard, robust) error rates on fresh samples.

    The robust event is y * x^T theta - epsilon * ||theta||_1 < 0, i.e.
    the worst point of the l-infinity ball is misclassified; ties follow
    sign(0) = +1, so a zero worst-case score counts as an error only for
    y = -1. Both rates use the same sample, so they are comparable and
    the robust rate dominates the standard rate realization-wise.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    theta = clf.theta
    if theta.shape != model.mu.shape:
        raise ValueError(
            f"theta has dimension {theta.size}, model has dimension {model.d}")
    if float(np.sum(theta * theta)) == 0.0:
        raise ValueError("theta must be nonzero")
    data = sample_labeled(model, n_samples, stream)
    scores = np.einsum("ij,j->i", data.xs, theta)
    preds = np.where(scores >= 0.0, 1, -1)
    std_rate = float(np.mean(preds != data.ys))
    margin = data.ys * scores - model.epsilon * float(np.sum(np.abs(theta)))
    rob_miss = (margin < 0.0) | ((margin == 0.0) & (data.ys == -1))
    rob_rate = float(np.mean(rob_miss))
    return std_rate, rob_rate
