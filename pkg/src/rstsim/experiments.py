"""Experiment drivers, trial orchestration, CSV emission, and check gates.

Every driver takes an ExperimentSpec and returns (trial_rows, summary_rows).
Trials are embarrassingly parallel: trial j of an experiment always uses
split_stream(master_seed, global_index_j), with global indices assigned in
fixed blocks per arm or grid point, so output is byte-identical for any
worker count. Reductions happen in index order after all trials complete.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .estimators import (
    SelfTrainResult,
    fast_selftrain_sample,
    fast_supervised_sample,
    sample_mixture,
    self_train,
    supervised_estimator,
)
from .gaussian import (
    GaussianModel,
    LinearClassifier,
    canonical_model,
    mc_error_estimate,
    robust_error,
    sample_labeled,
    standard_error,
)
from .rst import LogisticModel, RstConfig, rst_train, standard_train
from .smoothing import SmoothingConfig, certify, linf_radius_from_l2
from .statkit import (
    RngStream,
    binomial_upper_tail,
    clopper_pearson_lower,
    gaussian_cdf,
    inverse_gaussian_cdf,
    split_stream,
)

# naive materialization is refused above this many matrix entries;
# the fast samplers take over (they draw from the same distribution)
FAST_PATH_BUDGET = 100_000_000

TRIAL_HEADER = ("experiment,n0,d,epsilon,n_labeled,n_unlabeled,"
                "relevant_fraction,trial,std_err,rob_err,gamma,seed")
SUMMARY_HEADER = "experiment,grid_key,grid_value,metric,mean,ci95_half_width,trials"

EXPERIMENT_KINDS = ("verify_closed_form", "gap", "unlabeled_sweep",
                    "irrelevant_sweep", "label_sweep", "rst_demo",
                    "certify_demo")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a driver needs: model point, grids, counts, seed, workers."""

    kind: str
    n0: int = 4
    d: int = 755_000
    epsilon: float = 0.5
    allow_large_epsilon: bool = False
    trial_count: int = 50
    n_labeled: int | None = None
    n_unlabeled: int | None = None
    n_unlabeled_grid: tuple[int, ...] = ()
    n_labeled_grid: tuple[int, ...] = ()
    alpha_grid: tuple[float, ...] = ()
    relevant_fraction: float = 1.0
    mc_samples: int = 100_000
    rst_config: RstConfig | None = None
    stage1_learning_rate: float = 0.01
    stage1_steps: int = 400
    stage1_batch: int = 64
    smoothing: SmoothingConfig | None = None
    radii: tuple[float, ...] = ()
    master_seed: int = 0
    workers: int = 1
    use_fast_sampler: bool | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trial_count < 1:
            raise ValueError("trial_count must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    def model(self) -> GaussianModel:
        return canonical_model(self.n0, self.d, self.epsilon,
                               allow_large_epsilon=self.allow_large_epsilon)


@dataclass(frozen=True)
class TrialRow:
    """One per-trial record; wall_time is diagnostic only, never serialized."""

    experiment: str
    n0: int
    d: int
    epsilon: float
    n_labeled: int | None
    n_unlabeled: int | None
    relevant_fraction: float | None
    trial: int
    std_err: float | None
    rob_err: float | None
    gamma: float | None
    seed: int
    wall_time: float = 0.0


@dataclass(frozen=True)
class SummaryRow:
    experiment: str
    grid_key: str
    grid_value: str
    metric: str
    mean: float
    ci95_half_width: float | None
    trials: int


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def format_float(value: float) -> str:
    """17-significant-digit rendering used everywhere a float is serialized."""
    return format(float(value), ".17g")


def trial_csv_lines(rows: list[TrialRow]) -> list[str]:
    lines = [TRIAL_HEADER]
    for r in rows:
        lines.append(",".join([
            r.experiment, _fmt(r.n0), _fmt(r.d), _fmt(float(r.epsilon)),
            _fmt(r.n_labeled), _fmt(r.n_unlabeled),
            _fmt(None if r.relevant_fraction is None else float(r.relevant_fraction)),
            _fmt(r.trial), _fmt(None if r.std_err is None else float(r.std_err)),
            _fmt(None if r.rob_err is None else float(r.rob_err)),
            _fmt(None if r.gamma is None else float(r.gamma)), _fmt(r.seed),
        ]))
    return lines


def summary_csv_lines(rows: list[SummaryRow]) -> list[str]:
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(",".join([
            r.experiment, r.grid_key, r.grid_value, r.metric,
            _fmt(float(r.mean)),
            _fmt(None if r.ci95_half_width is None else float(r.ci95_half_width)),
            _fmt(r.trials),
        ]))
    return lines


def write_csv(path: str, lines: list[str]) -> None:
    """Single line feed newlines, no trailing blank line beyond the last."""
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_path_for(out_path: str) -> str:
    return out_path + ".summary.csv"


def _mean_ci(values: list[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(arr))
    if arr.size < 2:
        return mean, None
    return mean, float(1.96 * np.std(arr, ddof=1) / math.sqrt(arr.size))


def _run_indexed(fn, count: int, master_seed: int, base_index: int,
                 workers: int) -> list:
    """Run fn(global_index, stream) for count trials, results in index order."""
    indices = range(base_index, base_index + count)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(
                lambda i: fn(i, split_stream(master_seed, i)), indices))
    return [fn(i, split_stream(master_seed, i)) for i in indices]


def _wants_fast(n_rows: int, d: int, override: bool | None, label: str) -> bool:
    over_budget = n_rows * d > FAST_PATH_BUDGET
    if override is None:
        return over_budget
    if override is False and over_budget:
        raise ValueError(
            f"materialization budget exceeded for {label}: {n_rows} x {d} "
            f"> {FAST_PATH_BUDGET}; enable the fast sampler "
            "(use_fast_sampler=True or leave it unset)")
    return override


def _supervised_draw(model: GaussianModel, n: int, stream: RngStream,
                     override: bool | None) -> LinearClassifier:
    if _wants_fast(n, model.d, override, "labeled sampling"):
        return fast_supervised_sample(model, n, stream)
    return supervised_estimator(sample_labeled(model, n, stream))


def _selftrain_draw(model: GaussianModel, n: int, n_unlabeled: int,
                    alpha: float, stream: RngStream,
                    override: bool | None) -> SelfTrainResult:
    if _wants_fast(n_unlabeled, model.d, override, "unlabeled sampling"):
        return fast_selftrain_sample(model, n, n_unlabeled, alpha, stream)
    labeled = sample_labeled(model, n, stream)
    pool, _ = sample_mixture(model, n_unlabeled, alpha, stream)
    return self_train(labeled, pool)


def selftrain_pool_threshold(n0: int, d: int, epsilon: float) -> int:
    """Unlabeled-pool size at which self-training reaches low robust error."""
    return math.ceil(288.0 * n0 * epsilon**2 * math.sqrt(d / n0))


def supervised_label_threshold(n0: int, d: int, epsilon: float) -> int:
    """Labeled-sample size at which plain supervision is robust."""
    return math.ceil(4.0 * n0 * epsilon**2 * math.sqrt(d / n0))


def _closed_form_row(experiment: str, model: GaussianModel, clf,
                     spec: ExperimentSpec, *, n_labeled, n_unlabeled,
                     relevant_fraction, trial, gamma, seed,
                     wall_time) -> TrialRow:
    return TrialRow(
        experiment=experiment, n0=spec.n0, d=spec.d, epsilon=spec.epsilon,
        n_labeled=n_labeled, n_unlabeled=n_unlabeled,
        relevant_fraction=relevant_fraction, trial=trial,
        std_err=standard_error(model, clf), rob_err=robust_error(model, clf),
        gamma=gamma, seed=seed, wall_time=wall_time)


def _summaries_for(experiment: str, grid_key: str, grid_value: str,
                   rows: list[TrialRow]) -> list[SummaryRow]:
    out = []
    for metric in ("std_err", "rob_err", "gamma"):
        values = [getattr(r, metric) for r in rows]
        if any(v is None for v in values):
            continue
        mean, ci = _mean_ci(values)
        out.append(SummaryRow(experiment=experiment, grid_key=grid_key,
                              grid_value=grid_value, metric=metric, mean=mean,
                              ci95_half_width=ci, trials=len(values)))
    return out


def run_verify_closed_form(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                          list[SummaryRow]]:
    """Closed-form versus Monte Carlo error rates on a classifier grid.

    Pair 0 is theta = mu on the canonical model (its standard error has the
    known value Q((d/n0)^(1/4))); pairs with index = 1 mod 7 use epsilon = 0
    so the standard and robust columns must coincide; all other pairs draw
    a random theta. Dimensions cycle through {2, 16, 1024} weighted toward
    the small ones. Emits one ...:closed and one ...:mc row per pair.
    """
    n_pairs = spec.trial_count
    dims = []
    for i in range(n_pairs):
        dims.append(2 if i % 5 < 2 else (16 if i % 5 < 4 else 1024))

    def one_pair(index: int, stream: RngStream):
        start = time.perf_counter()
        i = index
        d = dims[i]
        eps = 0.0 if (i % 7 == 1 and i != 0) else spec.epsilon
        model = canonical_model(spec.n0, d, eps, allow_large_epsilon=True)
        if i == 0:
            theta = model.mu.copy()
        else:
            theta = stream.standard_normal(d) + model.mu / math.sqrt(d)
        clf = LinearClassifier(theta=theta)
        std_mc, rob_mc = mc_error_estimate(model, clf, spec.mc_samples, stream)
        elapsed = time.perf_counter() - start
        closed = TrialRow(
            experiment="verify_closed_form:closed", n0=spec.n0, d=d,
            epsilon=eps, n_labeled=None, n_unlabeled=None,
            relevant_fraction=None, trial=i,
            std_err=standard_error(model, clf),
            rob_err=robust_error(model, clf), gamma=None, seed=index,
            wall_time=elapsed)
        mc = replace(closed, experiment="verify_closed_form:mc",
                     std_err=std_mc, rob_err=rob_mc)
        return closed, mc

    pairs = _run_indexed(one_pair, n_pairs, spec.master_seed, 0, spec.workers)
    rows: list[TrialRow] = []
    for closed, mc in pairs:
        rows.append(closed)
        rows.append(mc)

    def tolerance(p_hat: float) -> float:
        return 4.0 * math.sqrt(max(p_hat * (1 - p_hat), 0.0) / spec.mc_samples) + 1e-6

    gaps_std, gaps_rob, excess_std, excess_rob = [], [], [], []
    for closed, mc in pairs:
        g_std = abs(closed.std_err - mc.std_err)
        g_rob = abs(closed.rob_err - mc.rob_err)
        gaps_std.append(g_std)
        gaps_rob.append(g_rob)
        excess_std.append(g_std - tolerance(mc.std_err))
        excess_rob.append(g_rob - tolerance(mc.rob_err))
    summaries = [
        SummaryRow("verify_closed_form", "aggregate", "all", "max_abs_gap_std",
                   max(gaps_std), None, n_pairs),
        SummaryRow("verify_closed_form", "aggregate", "all", "max_abs_gap_rob",
                   max(gaps_rob), None, n_pairs),
        SummaryRow("verify_closed_form", "aggregate", "all",
                   "max_tolerance_excess_std", max(excess_std), None, n_pairs),
        SummaryRow("verify_closed_form", "aggregate", "all",
                   "max_tolerance_excess_rob", max(excess_rob), None, n_pairs),
    ]
    return rows, summaries


def run_gap(spec: ExperimentSpec) -> tuple[list[TrialRow], list[SummaryRow]]:
    """Three-arm comparison: supervised at n0, supervised at the robust
    sample-complexity threshold, and self-training at n0 labels plus the
    unlabeled threshold."""
    model = spec.model()
    n0 = spec.n_labeled if spec.n_labeled is not None else spec.n0
    n_big = supervised_label_threshold(spec.n0, spec.d, spec.epsilon)
    n_tilde = (spec.n_unlabeled if spec.n_unlabeled is not None
               else selftrain_pool_threshold(spec.n0, spec.d, spec.epsilon))
    trials = spec.trial_count
    rows: list[TrialRow] = []
    summaries: list[SummaryRow] = []

    def supervised_arm(experiment: str, n: int, base: int) -> list[TrialRow]:
        def one(index: int, stream: RngStream) -> TrialRow:
            start = time.perf_counter()
            clf = _supervised_draw(model, n, stream, spec.use_fast_sampler)
            return _closed_form_row(
                experiment, model, clf, spec, n_labeled=n, n_unlabeled=None,
                relevant_fraction=None, trial=index - base, gamma=None,
                seed=index, wall_time=time.perf_counter() - start)
        return _run_indexed(one, trials, spec.master_seed, base, spec.workers)

    def selftrain_arm(experiment: str, base: int) -> list[TrialRow]:
        def one(index: int, stream: RngStream) -> TrialRow:
            start = time.perf_counter()
            res = _selftrain_draw(model, n0, n_tilde, spec.relevant_fraction,
                                  stream, spec.use_fast_sampler)
            return _closed_form_row(
                experiment, model, res.final, spec, n_labeled=n0,
                n_unlabeled=n_tilde, relevant_fraction=spec.relevant_fraction,
                trial=index - base, gamma=res.pseudo_label_agreement,
                seed=index, wall_time=time.perf_counter() - start)
        return _run_indexed(one, trials, spec.master_seed, base, spec.workers)

    arms = [
        ("gap:supervised_n0", supervised_arm("gap:supervised_n0", n0, 0)),
        ("gap:supervised_scaled",
         supervised_arm("gap:supervised_scaled", n_big, trials)),
        ("gap:selftrain", selftrain_arm("gap:selftrain", 2 * trials)),
    ]
    for name, arm_rows in arms:
        rows.extend(arm_rows)
        summaries.extend(_summaries_for(name, "arm", name.split(":")[1],
                                        arm_rows))
    return rows, summaries


def run_unlabeled_sweep(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                       list[SummaryRow]]:
    """Self-training error as the unlabeled pool grows; 0 means no pool."""
    grid = spec.n_unlabeled_grid
    if not grid:
        raise ValueError("unlabeled_sweep needs a nonempty n_unlabeled_grid")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_unlabeled_grid must be ascending")
    if any(g < 0 for g in grid):
        raise ValueError("n_unlabeled_grid entries must be >= 0")
    model = spec.model()
    n = spec.n_labeled if spec.n_labeled is not None else spec.n0
    trials = spec.trial_count
    rows: list[TrialRow] = []
    summaries: list[SummaryRow] = []
    for j, n_tilde in enumerate(grid):
        base = j * trials

        def one(index: int, stream: RngStream, n_tilde=n_tilde,
                base=base) -> TrialRow:
            start = time.perf_counter()
            if n_tilde == 0:
                clf = _supervised_draw(model, n, stream, spec.use_fast_sampler)
                gamma = None
            else:
                res = _selftrain_draw(model, n, n_tilde,
                                      spec.relevant_fraction, stream,
                                      spec.use_fast_sampler)
                clf, gamma = res.final, res.pseudo_label_agreement
            return _closed_form_row(
                "unlabeled_sweep", model, clf, spec, n_labeled=n,
                n_unlabeled=n_tilde,
                relevant_fraction=spec.relevant_fraction if n_tilde else None,
                trial=index - base, gamma=gamma, seed=index,
                wall_time=time.perf_counter() - start)

        point_rows = _run_indexed(one, trials, spec.master_seed, base,
                                  spec.workers)
        rows.extend(point_rows)
        summaries.extend(_summaries_for("unlabeled_sweep", "n_unlabeled",
                                        str(n_tilde), point_rows))
    return rows, summaries


def run_irrelevant_sweep(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                        list[SummaryRow]]:
    """Two curves over the relevant fraction: fixed pool size, and pool size
    scaled by 1/alpha^2 (the scaling the theory says restores low error).
    The scaled curve skips alpha = 0 (its pool size would be infinite)."""
    grid = spec.alpha_grid
    if not grid:
        raise ValueError("irrelevant_sweep needs a nonempty alpha_grid")
    if any(not (0.0 <= a <= 1.0) for a in grid):
        raise ValueError("alpha_grid entries must lie in [0, 1]")
    model = spec.model()
    n = spec.n_labeled if spec.n_labeled is not None else spec.n0
    n_tilde = (spec.n_unlabeled if spec.n_unlabeled is not None
               else selftrain_pool_threshold(spec.n0, spec.d, spec.epsilon))
    trials = spec.trial_count
    rows: list[TrialRow] = []
    summaries: list[SummaryRow] = []

    def curve(experiment: str, alphas, sizes, base0: int):
        for j, (alpha, size) in enumerate(zip(alphas, sizes)):
            base = base0 + j * trials

            def one(index: int, stream: RngStream, alpha=alpha, size=size,
                    base=base) -> TrialRow:
                start = time.perf_counter()
                res = _selftrain_draw(model, n, size, alpha, stream,
                                      spec.use_fast_sampler)
                return _closed_form_row(
                    experiment, model, res.final, spec, n_labeled=n,
                    n_unlabeled=size, relevant_fraction=alpha,
                    trial=index - base, gamma=res.pseudo_label_agreement,
                    seed=index, wall_time=time.perf_counter() - start)

            point_rows = _run_indexed(one, trials, spec.master_seed, base,
                                      spec.workers)
            rows.extend(point_rows)
            summaries.extend(_summaries_for(experiment, "relevant_fraction",
                                            format_float(alpha), point_rows))

    curve("irrelevant_sweep:fixed", grid, [n_tilde] * len(grid), 0)
    scaled_alphas = [a for a in grid if a > 0.0]
    scaled_sizes = [math.ceil(n_tilde / (a * a)) for a in scaled_alphas]
    curve("irrelevant_sweep:scaled", scaled_alphas, scaled_sizes,
          len(grid) * trials)
    return rows, summaries


def run_label_sweep(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                   list[SummaryRow]]:
    """Self-training error as the labeled count varies at a fixed pool."""
    grid = spec.n_labeled_grid
    if not grid:
        raise ValueError("label_sweep needs a nonempty n_labeled_grid")
    if any(g < 1 for g in grid):
        raise ValueError("n_labeled_grid entries must be >= 1")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_labeled_grid must be ascending")
    model = spec.model()
    n_tilde = (spec.n_unlabeled if spec.n_unlabeled is not None
               else selftrain_pool_threshold(spec.n0, spec.d, spec.epsilon))
    trials = spec.trial_count
    rows: list[TrialRow] = []
    summaries: list[SummaryRow] = []
    for j, n in enumerate(grid):
        base = j * trials

        def one(index: int, stream: RngStream, n=n, base=base) -> TrialRow:
            start = time.perf_counter()
            res = _selftrain_draw(model, n, n_tilde, spec.relevant_fraction,
                                  stream, spec.use_fast_sampler)
            return _closed_form_row(
                "label_sweep", model, res.final, spec, n_labeled=n,
                n_unlabeled=n_tilde, relevant_fraction=spec.relevant_fraction,
                trial=index - base, gamma=res.pseudo_label_agreement,
                seed=index, wall_time=time.perf_counter() - start)

        point_rows = _run_indexed(one, trials, spec.master_seed, base,
                                  spec.workers)
        rows.extend(point_rows)
        summaries.extend(_summaries_for("label_sweep", "n_labeled", str(n),
                                        point_rows))
    return rows, summaries


def default_rst_config(epsilon: float) -> RstConfig:
    """Training budget tuned for the demo model (d = 100, 30 + 3000 points)."""
    return RstConfig(beta=3.0, w_unlabeled=1.0, epsilon=epsilon,
                     learning_rate=1e-3, grad_steps=50, batch_size=256,
                     reg_kind="adversarial_exact")


def run_rst_demo(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                list[SummaryRow]]:
    """Paired comparison of robust self-training against labeled-only robust
    training, both trained with the same budget; the margin is the mean
    robust-error improvement."""
    model = spec.model()
    n = spec.n_labeled if spec.n_labeled is not None else spec.n0
    n_tilde = spec.n_unlabeled if spec.n_unlabeled is not None else 3_000
    if n_tilde < 1:
        raise ValueError("rst_demo needs n_unlabeled >= 1")
    config = (spec.rst_config if spec.rst_config is not None
              else default_rst_config(spec.epsilon))
    trials = spec.trial_count

    def one(index: int, stream: RngStream):
        start = time.perf_counter()
        labeled = sample_labeled(model, n, stream)
        pool, hidden = sample_mixture(model, n_tilde, spec.relevant_fraction,
                                      stream)
        stage1 = standard_train(labeled, spec.stage1_learning_rate,
                                spec.stage1_steps, spec.stage1_batch, stream)
        scores = np.einsum("ij,j->i", pool.xs, stage1.theta)
        pseudo = np.where(scores >= 0.0, 1, -1).astype(np.int64)
        gamma = float(np.mean(pseudo * hidden))
        rst = rst_train(labeled, (pool, pseudo), config, stream)
        base = rst_train(labeled, None, config, stream)
        elapsed = time.perf_counter() - start
        rst_row = _closed_form_row(
            "rst_demo:rst", model, LinearClassifier(theta=rst.model.theta),
            spec, n_labeled=n, n_unlabeled=n_tilde,
            relevant_fraction=spec.relevant_fraction, trial=index,
            gamma=gamma, seed=index, wall_time=elapsed)
        base_row = _closed_form_row(
            "rst_demo:labeled_only", model,
            LinearClassifier(theta=base.model.theta), spec, n_labeled=n,
            n_unlabeled=None, relevant_fraction=None, trial=index, gamma=None,
            seed=index, wall_time=0.0)
        return rst_row, base_row

    pairs = _run_indexed(one, trials, spec.master_seed, 0, spec.workers)
    rst_rows = [p[0] for p in pairs]
    base_rows = [p[1] for p in pairs]
    rows = [row for pair in pairs for row in pair]
    summaries = _summaries_for("rst_demo:rst", "arm", "rst", rst_rows)
    summaries += _summaries_for("rst_demo:labeled_only", "arm", "labeled_only",
                                base_rows)
    diffs = [b.rob_err - r.rob_err for r, b in pairs]
    mean, ci = _mean_ci(diffs)
    summaries.append(SummaryRow("rst_demo", "comparison", "margin",
                                "rob_err_margin", mean, ci, trials))
    return rows, summaries


def min_votes_for_radius(radius: float, config: SmoothingConfig) -> int:
    """Smallest estimation-stage vote count certifying at least this radius.

    Returns n_estimation + 1 when no count suffices. Monotone in radius.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    lo, hi = 0, config.n_estimation + 1

    def certifies(k: int) -> bool:
        p = clopper_pearson_lower(k, config.n_estimation, config.conf_alpha)
        if p <= 0.5:
            return False
        return config.noise_sigma * inverse_gaussian_cdf(p) >= radius

    while lo < hi:
        mid = (lo + hi) // 2
        if certifies(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def analytic_certified_accuracy(model: LogisticModel, xs: np.ndarray,
                                ys: np.ndarray, radii, config: SmoothingConfig
                                ) -> list[tuple[float, float, float]]:
    """Exact expectation of the finite-sample certification protocol.

    For each point: the plurality stage selects the true label with a
    binomial tail probability, and the estimation stage certifies radius r
    exactly when its vote count reaches min_votes_for_radius(r). Returns
    (radius, expected accuracy, standard deviation of empirical accuracy).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys)
    theta = model.theta
    l2 = float(np.sqrt(np.sum(theta * theta)))
    if l2 == 0.0:
        raise ValueError("theta must be nonzero")
    ratios = np.einsum("ij,j->i", xs, theta) / (config.noise_sigma * l2)
    p_plus = np.array([gaussian_cdf(r) for r in ratios])
    need = config.n0_selection // 2 + 1
    sel_plus = np.array([binomial_upper_tail(need, config.n0_selection, p)
                         for p in p_plus])
    p_sel = np.where(ys == 1, sel_plus, 1.0 - sel_plus)
    p_true = np.where(ys == 1, p_plus, 1.0 - p_plus)
    out = []
    for r in radii:
        k_min = min_votes_for_radius(float(r), config)
        probs = p_sel * np.array([binomial_upper_tail(k_min,
                                                      config.n_estimation, p)
                                  for p in p_true])
        mean = float(np.mean(probs))
        sd = float(np.sqrt(np.sum(probs * (1.0 - probs)))) / len(probs)
        out.append((float(r), mean, sd))
    return out


def run_certify_demo(spec: ExperimentSpec) -> tuple[list[TrialRow],
                                                    list[SummaryRow]]:
    """Certified accuracy curve of the smoothed mean-direction classifier.

    Test points are fresh draws from the model; the base classifier is the
    halfspace along mu. Per-trial CSV is header-only (certification results
    do not fit the error-rate schema); the curve lands in the summary file
    as certified_accuracy / analytic_accuracy / radius_linf per radius. The
    analytic rows carry 1.96 x the protocol's exact standard deviation in
    the ci95 column.
    """
    model = spec.model()
    config = (spec.smoothing if spec.smoothing is not None
              else SmoothingConfig(noise_sigma=model.sigma))
    radii = tuple(float(r) for r in spec.radii)
    if not radii:
        radii = tuple(config.noise_sigma * f for f in (0.0, 0.5, 1.0, 1.5, 2.0))
    if any(r < 0 for r in radii):
        raise ValueError("radii must be nonnegative")
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be ascending")
    n_points = spec.trial_count
    points = sample_labeled(model, n_points, split_stream(spec.master_seed, 0))
    base_model = LogisticModel(theta=model.mu.copy())
    theta = base_model.theta

    def oracle(batch):
        scores = np.einsum("ij,j->i", np.asarray(batch), theta)
        return np.where(scores >= 0.0, 1, -1)

    def one(index: int, stream: RngStream) -> float:
        i = index - 1
        res = certify(oracle, points.xs[i], config, stream)
        if res.certified and res.label == int(points.ys[i]):
            return res.radius
        return 0.0

    certified = _run_indexed(one, n_points, spec.master_seed, 1, spec.workers)
    certified = np.asarray(certified)
    analytic = analytic_certified_accuracy(base_model, points.xs, points.ys,
                                           radii, config)
    summaries: list[SummaryRow] = []
    for (r, mean_a, sd_a) in analytic:
        if r > 0:
            acc = float(np.mean(certified >= r))
        else:
            acc = float(np.mean(certified > 0.0))
        ci = 1.96 * math.sqrt(max(acc * (1 - acc), 0.0) / n_points)
        key = format_float(r)
        summaries.append(SummaryRow("certify_demo", "radius_l2", key,
                                    "certified_accuracy", acc, ci, n_points))
        summaries.append(SummaryRow("certify_demo", "radius_l2", key,
                                    "analytic_accuracy", mean_a, 1.96 * sd_a,
                                    n_points))
        summaries.append(SummaryRow("certify_demo", "radius_l2", key,
                                    "radius_linf",
                                    linf_radius_from_l2(r, spec.d), None,
                                    n_points))
    return [], summaries


RUNNERS = {
    "verify_closed_form": run_verify_closed_form,
    "gap": run_gap,
    "unlabeled_sweep": run_unlabeled_sweep,
    "irrelevant_sweep": run_irrelevant_sweep,
    "label_sweep": run_label_sweep,
    "rst_demo": run_rst_demo,
    "certify_demo": run_certify_demo,
}


# One versioned table of gate thresholds; check_results consults only this.
ACCEPTANCE_THRESHOLDS = {
    "version": 1,
    "verify_closed_form": {"tolerance_sigmas": 4.0, "tolerance_floor": 1e-6},
    "gap": {"supervised_rob_err_min": 0.45, "supervised_std_err_max": 1 / 3,
            "selftrain_rob_err_max": 0.01},
    "unlabeled_sweep": {"trend_ci_widths": 2.0, "trend_abs_floor": 1e-6},
    "irrelevant_sweep": {"scaled_rob_err_max": 0.01,
                         "zero_alpha_rob_err_min": 0.45},
    "label_sweep": {"plateau_ci_widths": 2.0, "plateau_abs_floor": 1e-6},
    "rst_demo": {"min_margin": 0.05},
    "certify_demo": {"analytic_sd_sigmas": 3.0, "slack": 1e-9},
}


def check_results(spec: ExperimentSpec, rows: list[TrialRow],
                  summaries: list[SummaryRow]) -> list[str]:
    """Threshold gate for --check; returns human-readable failure lines."""
    th = ACCEPTANCE_THRESHOLDS.get(spec.kind, {})
    failures: list[str] = []

    def such(experiment=None, metric=None, grid_value=None):
        found = [s for s in summaries
                 if (experiment is None or s.experiment == experiment)
                 and (metric is None or s.metric == metric)
                 and (grid_value is None or s.grid_value == grid_value)]
        return found

    if spec.kind == "verify_closed_form":
        for metric in ("max_tolerance_excess_std", "max_tolerance_excess_rob"):
            for s in such(metric=metric):
                if s.mean > 0:
                    failures.append(
                        f"{metric} = {s.mean:.3e} exceeds the MC tolerance")
    elif spec.kind == "gap":
        for s in such("gap:supervised_n0", "rob_err"):
            if s.mean < th["supervised_rob_err_min"]:
                failures.append(
                    f"supervised robust error {s.mean:.4f} < "
                    f"{th['supervised_rob_err_min']}")
        for s in such("gap:supervised_n0", "std_err"):
            if s.mean > th["supervised_std_err_max"]:
                failures.append(
                    f"supervised standard error {s.mean:.4f} > "
                    f"{th['supervised_std_err_max']:.4f}")
        for s in such("gap:selftrain", "rob_err"):
            if s.mean > th["selftrain_rob_err_max"]:
                failures.append(
                    f"self-training robust error {s.mean:.3e} > "
                    f"{th['selftrain_rob_err_max']}")
    elif spec.kind == "unlabeled_sweep":
        points = such("unlabeled_sweep", "rob_err")
        for a, b in zip(points, points[1:]):
            slack = th["trend_abs_floor"] + th["trend_ci_widths"] * math.sqrt(
                (a.ci95_half_width or 0.0) ** 2 + (b.ci95_half_width or 0.0) ** 2)
            if b.mean > a.mean + slack:
                failures.append(
                    f"robust error rose from {a.mean:.4f} (n~={a.grid_value}) "
                    f"to {b.mean:.4f} (n~={b.grid_value}) beyond the CI slack")
    elif spec.kind == "irrelevant_sweep":
        scaled = {s.grid_value: s.mean
                  for s in such("irrelevant_sweep:scaled", "rob_err")}
        fixed = {s.grid_value: s.mean
                 for s in such("irrelevant_sweep:fixed", "rob_err")}
        for key, mean in scaled.items():
            if mean > th["scaled_rob_err_max"]:
                failures.append(
                    f"scaled-pool robust error {mean:.3e} at alpha={key} > "
                    f"{th['scaled_rob_err_max']}")
            if key in fixed and float(key) < 1.0 and fixed[key] <= mean:
                failures.append(
                    f"fixed-pool error {fixed[key]:.3e} at alpha={key} is not "
                    f"strictly worse than the scaled pool's {mean:.3e}")
        zero_key = format_float(0.0)
        if zero_key in fixed and fixed[zero_key] < th["zero_alpha_rob_err_min"]:
            failures.append(
                f"alpha=0 robust error {fixed[zero_key]:.4f} < "
                f"{th['zero_alpha_rob_err_min']}")
    elif spec.kind == "label_sweep":
        points = [s for s in such("label_sweep", "rob_err")
                  if int(s.grid_value) >= spec.n0]
        for i, a in enumerate(points):
            for b in points[i + 1:]:
                slack = th["plateau_abs_floor"] + th["plateau_ci_widths"] * math.sqrt(
                    (a.ci95_half_width or 0.0) ** 2
                    + (b.ci95_half_width or 0.0) ** 2)
                if abs(a.mean - b.mean) > slack:
                    failures.append(
                        f"label-plateau spread between n={a.grid_value} and "
                        f"n={b.grid_value}: |{a.mean:.4f} - {b.mean:.4f}| "
                        "exceeds the CI slack")
    elif spec.kind == "rst_demo":
        for s in such("rst_demo", "rob_err_margin"):
            if s.mean < th["min_margin"]:
                failures.append(
                    f"robust-error margin {s.mean:.4f} < {th['min_margin']}")
    elif spec.kind == "certify_demo":
        emp = {s.grid_value: s for s in such(metric="certified_accuracy")}
        for s in such(metric="analytic_accuracy"):
            e = emp.get(s.grid_value)
            if e is None:
                continue
            sd = (s.ci95_half_width or 0.0) / 1.96
            bound = th["analytic_sd_sigmas"] * sd + th["slack"]
            if abs(e.mean - s.mean) > bound:
                failures.append(
                    f"certified accuracy {e.mean:.4f} at radius "
                    f"{s.grid_value} deviates from the analytic "
                    f"{s.mean:.4f} by more than {bound:.4f}")
    return failures
