"""Randomized smoothing certification over a black-box base classifier.

The protocol: take a plurality vote over noisy evaluations to select a
candidate label, re-estimate its vote probability on fresh noise, lower
bound that probability with a Clopper-Pearson interval, and certify the
l2 radius noise_sigma * Phi^-1(p_lower) when the bound clears 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .statkit import (
    RngStream,
    clopper_pearson_lower,
    inverse_gaussian_cdf,
    split_stream,
)

# cap per-chunk oracle batches at ~10^7 scalars so certification of
# high-dimensional models stays within a fixed memory budget
_CHUNK_SCALARS = 10_000_000


@dataclass(frozen=True)
class SmoothingConfig:
    """Protocol parameters: smoothing noise and the two-stage sample sizes."""

    noise_sigma: float = 0.25
    n0_selection: int = 100
    n_estimation: int = 10_000
    conf_alpha: float = 1e-3

    def __post_init__(self):
        if not (self.noise_sigma > 0) or not math.isfinite(self.noise_sigma):
            raise ValueError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.n0_selection < 1 or self.n_estimation < 1:
            raise ValueError("selection and estimation counts must be >= 1")
        if not (0.0 < self.conf_alpha < 1.0):
            raise ValueError(f"conf_alpha must be in (0,1), got {self.conf_alpha}")


@dataclass(frozen=True)
class CertifyResult:
    """One certification outcome.

    certified is False exactly when p_lower <= 1/2 (abstention); then label
    is None and radius is 0. votes_top counts estimation-stage votes for
    the selected label.
    """

    certified: bool
    label: int | None
    radius: float
    p_lower: float
    votes_top: int

    def __post_init__(self):
        if self.certified != (self.p_lower > 0.5):
            raise ValueError("certified must hold exactly when p_lower > 1/2")
        if self.certified and (self.label not in (-1, 1) or not self.radius > 0):
            raise ValueError("certified outcome needs a +-1 label and radius > 0")
        if not self.certified and (self.label is not None or self.radius != 0.0):
            raise ValueError("abstention carries no label and zero radius")


def _count_noisy_votes(base, x: np.ndarray, n_draws: int, sigma: float,
                       stream: RngStream, target: int) -> int:
    """Evaluate base on n_draws noisy copies of x; count votes for target."""
    votes = 0
    done = 0
    rows_per_chunk = max(1, _CHUNK_SCALARS // x.size)
    while done < n_draws:
        rows = min(rows_per_chunk, n_draws - done)
        noise = sigma * stream.standard_normal((rows, x.size))
        labels = np.asarray(base(x[None, :] + noise))
        if labels.shape != (rows,):
            raise ValueError(
                f"oracle returned shape {labels.shape} for a ({rows}, {x.size}) batch")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("oracle labels must be +-1")
        votes += int(np.sum(labels == target))
        done += rows
    return votes


def certify(base, x, config: SmoothingConfig, stream: RngStream) -> CertifyResult:
    """Run the two-stage certification protocol at one input point.

    base is a batch oracle mapping an (m, d) array to m labels in {-1, +1}.
    Selection and estimation noise come from disjoint substreams seeded by
    two draws from the provided stream (draw order: one integers(2) call),
    so the Clopper-Pearson guarantee sees fresh estimation noise. The
    selection plurality tie at even counts goes to label -1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("x must be a 1-d vector")
    seeds = stream.integers(0, 2**63, size=2)
    selection = split_stream(int(seeds[0]), 0)
    estimation = split_stream(int(seeds[1]), 1)

    plus = _count_noisy_votes(base, x, config.n0_selection, config.noise_sigma,
                              selection, 1)
    y_hat = 1 if plus > config.n0_selection - plus else -1

    k = _count_noisy_votes(base, x, config.n_estimation, config.noise_sigma,
                           estimation, y_hat)
    p_lower = clopper_pearson_lower(k, config.n_estimation, config.conf_alpha)
    if p_lower > 0.5:
        radius = config.noise_sigma * inverse_gaussian_cdf(p_lower)
        return CertifyResult(certified=True, label=y_hat, radius=radius,
                             p_lower=p_lower, votes_top=k)
    return CertifyResult(certified=False, label=None, radius=0.0,
                         p_lower=p_lower, votes_top=k)


def linf_radius_from_l2(r: float, d: int) -> float:
    """Side of the largest l-infinity ball inside an l2 ball of radius r."""
    r = float(r)
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    d = int(d)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return r / math.sqrt(d)


def certified_accuracy_curve(base, xs, ys, radii, config: SmoothingConfig,
                             stream: RngStream) -> list[tuple[float, float]]:
    """Certified accuracy at each radius over a labeled point set.

    A point counts at radius r when its run certified the true label with
    a radius of at least r, so the curve is nonincreasing by construction.
    Each point gets its own substream (draw order: one integers(n) call on
    the provided stream), making results independent of evaluation order.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys)
    if xs.ndim != 2 or ys.shape != (xs.shape[0],):
        raise ValueError("xs must be (n, d) with one label per row")
    if not np.all(np.isin(ys, (-1, 1))):
        raise ValueError("labels must be +-1")
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii):
        raise ValueError("radii must be nonnegative")
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be sorted ascending")
    n_points = xs.shape[0]
    seeds = stream.integers(0, 2**63, size=n_points)
    certified_radii = np.zeros(n_points)
    for i in range(n_points):
        res = certify(base, xs[i], config, split_stream(int(seeds[i]), i))
        if res.certified and res.label == int(ys[i]):
            certified_radii[i] = res.radius
    return [(r, float(np.mean(certified_radii >= r)) if r > 0
             else float(np.mean(certified_radii > 0.0))) for r in radii]
