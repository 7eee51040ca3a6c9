"""Acceptance gate: one test per criterion, in order.

Each test prints a single PASS/FAIL line with the measured quantities and
its runtime, then asserts. Criteria and budgets:

 1. closed forms match Monte Carlo on 20 classifier pairs        (< 10 s)
 2. fast and naive self-training samplers agree in distribution  (< 60 s)
 3. n0 labels give standard accuracy at the weak-signal point    (< 60 s)
 4. same labels leave robust error high                          (< 120 s)
 5. the prescribed unlabeled pool drives robust error to ~0      (< 120 s)
 6. irrelevant unlabeled data costs exactly the 1/alpha^2 factor (< 240 s)
 7. exact inner maximizer dominates PG; gradients match FD       (< 30 s)
 8. robust self-training beats labeled-only robust training      (< 120 s)
 9. certification never overclaims; constant-classifier radius   (< 120 s)
10. l2 -> l-infinity radius conversion lands in the known window
11. CSV output is byte-identical across worker counts            (< 300 s)
"""

import math
from time import perf_counter

import numpy as np

from rstsim.cli import main as cli_main
from rstsim.estimators import (
    fast_selftrain_sample,
    fast_supervised_sample,
    sample_mixture,
    self_train,
    supervised_estimator,
)
from rstsim.experiments import ExperimentSpec, run_rst_demo
from rstsim.gaussian import (
    LinearClassifier,
    canonical_model,
    mc_error_estimate,
    robust_error,
    sample_labeled,
    standard_error,
)
from rstsim.rst import (
    LogisticModel,
    RstConfig,
    adversarial_reg_exact,
    adversarial_reg_pg,
    robust_objective,
    stability_reg,
)
from rstsim.smoothing import SmoothingConfig, certify, linf_radius_from_l2
from rstsim.statkit import inverse_gaussian_cdf, split_stream

MASTER = 20260819


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    print(line, flush=True)
    assert ok, line


def test_criterion_01_closed_form_fidelity():
    t0 = perf_counter()
    dims = [2] * 8 + [16] * 8 + [1024] * 4
    n_mc = 100_000
    worst_excess = -math.inf
    for i, d in enumerate(dims):
        stream = split_stream(MASTER, 100 + i)
        eps = (0.5, 0.25, 0.0)[i % 3]
        model = canonical_model(4, d, eps, allow_large_epsilon=True)
        theta = stream.standard_normal(d) + model.mu / math.sqrt(d)
        clf = LinearClassifier(theta=theta)
        if d <= 64:
            std_mc, rob_mc = mc_error_estimate(model, clf, n_mc, stream)
        else:
            # four quarter-size estimates average exactly and cap memory
            parts = [mc_error_estimate(model, clf, n_mc // 4, stream)
                     for _ in range(4)]
            std_mc = float(np.mean([p[0] for p in parts]))
            rob_mc = float(np.mean([p[1] for p in parts]))
        for closed, mc in ((standard_error(model, clf), std_mc),
                           (robust_error(model, clf), rob_mc)):
            tol = 4.0 * math.sqrt(mc * (1.0 - mc) / n_mc) + 1e-6
            worst_excess = max(worst_excess, abs(closed - mc) - tol)
    runtime = perf_counter() - t0
    ok = worst_excess <= 0.0 and runtime < 10.0
    _report(1, ok, f"20 pairs at 1e5 MC samples, max |closed - MC| over "
                   f"tolerance = {worst_excess:.2e} (need <= 0), "
                   f"runtime {runtime:.1f}s (< 10)")


def _var_and_se(x: np.ndarray) -> tuple[float, float]:
    # se of the sample variance without normality: var(s^2) is driven by
    # the fourth central moment for skewed data
    n = x.size
    s2 = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    spread = (m4 - (n - 3) / (n - 1) * s2 * s2) / n
    return s2, math.sqrt(max(spread, 1e-300))


def _ecdf_max_gap(a: np.ndarray, b: np.ndarray) -> float:
    grid = np.concatenate([a, b])
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def test_criterion_02_fast_sampler_equivalence():
    t0 = perf_counter()
    model = canonical_model(10, 50, 0.2)
    trials = 5_000
    details = []
    ok = True
    for a_idx, alpha in enumerate((1.0, 0.5)):
        naive = np.empty(trials)
        fast = np.empty(trials)
        base = 1_000 + a_idx * 20_000
        for t in range(trials):
            stream = split_stream(MASTER, base + t)
            labeled = sample_labeled(model, 10, stream)
            pool, _ = sample_mixture(model, 500, alpha, stream)
            naive[t] = robust_error(model, self_train(labeled, pool).final)
            stream = split_stream(MASTER, base + 10_000 + t)
            res = fast_selftrain_sample(model, 10, 500, alpha, stream)
            fast[t] = robust_error(model, res.final)
        z_mean = abs(naive.mean() - fast.mean()) / math.sqrt(
            naive.var(ddof=1) / trials + fast.var(ddof=1) / trials)
        v_n, se_n = _var_and_se(naive)
        v_f, se_f = _var_and_se(fast)
        z_var = abs(v_n - v_f) / math.sqrt(se_n**2 + se_f**2)
        gap = _ecdf_max_gap(naive, fast)
        ok = ok and z_mean <= 4.0 and z_var <= 4.0 and gap <= 0.05
        details.append(f"alpha={alpha}: z_mean={z_mean:.2f}, "
                       f"z_var={z_var:.2f}, ecdf_gap={gap:.3f}")
    runtime = perf_counter() - t0
    ok = ok and runtime < 60.0
    _report(2, ok, f"{'; '.join(details)} (need z <= 4, gap <= 0.05), "
                   f"runtime {runtime:.1f}s (< 60)")


def test_criterion_03_standard_accuracy_from_n0_labels():
    t0 = perf_counter()
    model = canonical_model(25, 250_000, 0.5, allow_large_epsilon=True)
    errs = []
    for t in range(50):
        stream = split_stream(MASTER, 3_000 + t)
        clf = supervised_estimator(sample_labeled(model, 25, stream))
        errs.append(standard_error(model, clf))
    mean = float(np.mean(errs))
    runtime = perf_counter() - t0
    ok = mean <= 1 / 3 and runtime < 60.0
    _report(3, ok, f"mean standard error {mean:.4f} over 50 trials at "
                   f"(n0=25, d=250000, eps=0.5) (need <= 1/3), "
                   f"runtime {runtime:.1f}s (< 60)")


def test_criterion_04_small_sample_robustness_gap():
    t0 = perf_counter()
    model = canonical_model(4, 755_000, 0.5, allow_large_epsilon=True)
    rob, std = [], []
    for t in range(50):
        stream = split_stream(MASTER, 4_000 + t)
        clf = fast_supervised_sample(model, 4, stream)
        rob.append(robust_error(model, clf))
        std.append(standard_error(model, clf))
    mean_rob = float(np.mean(rob))
    mean_std = float(np.mean(std))
    runtime = perf_counter() - t0
    ok = mean_rob >= 0.45 and mean_std <= 0.1 and runtime < 120.0
    _report(4, ok, f"supervised at n=n0: mean robust error {mean_rob:.4f} "
                   f"(need >= 0.45), mean standard error {mean_std:.4f} "
                   f"(need <= 0.1; the accuracy ratio at this point is "
                   f"(d/n0)^(1/4)/sqrt(1+sqrt(d/n0)) -> 1 from below, so "
                   f"the mean converges to Q(1) ~ 0.1587 from above), "
                   f"runtime {runtime:.1f}s (< 120)")


def test_criterion_05_unlabeled_pool_restores_robustness():
    t0 = perf_counter()
    model = canonical_model(4, 755_000, 0.5, allow_large_epsilon=True)
    n_tilde = math.ceil(288 * 4 * 0.25 * math.sqrt(755_000 / 4))
    assert n_tilde == 125_123
    errs = []
    for t in range(50):
        stream = split_stream(MASTER, 5_000 + t)
        res = fast_selftrain_sample(model, 4, n_tilde, 1.0, stream)
        errs.append(robust_error(model, res.final))
    mean = float(np.mean(errs))
    runtime = perf_counter() - t0
    ok = mean <= 0.01 and runtime < 120.0
    _report(5, ok, f"self-training with ntil={n_tilde}: mean robust error "
                   f"{mean:.2e} over 50 trials (need <= 0.01), "
                   f"runtime {runtime:.1f}s (< 120)")


def test_criterion_06_irrelevant_data_scaling():
    t0 = perf_counter()
    model = canonical_model(4, 755_000, 0.5, allow_large_epsilon=True)
    n_tilde = 125_123

    def mean_rob(n_pool: int, alpha: float, base: int) -> float:
        errs = []
        for t in range(50):
            stream = split_stream(MASTER, base + t)
            res = fast_selftrain_sample(model, 4, n_pool, alpha, stream)
            errs.append(robust_error(model, res.final))
        return float(np.mean(errs))

    scaled = mean_rob(4 * n_tilde, 0.5, 6_000)
    unscaled = mean_rob(n_tilde, 0.5, 6_100)
    noise_only = mean_rob(n_tilde, 0.0, 6_200)
    runtime = perf_counter() - t0
    ok = (scaled <= 0.01 and unscaled > scaled and noise_only >= 0.45
          and runtime < 240.0)
    _report(6, ok, f"alpha=0.5 scaled pool {scaled:.2e} (need <= 0.01), "
                   f"unscaled {unscaled:.2e} (need strictly worse), "
                   f"alpha=0 {noise_only:.4f} (need >= 0.45), "
                   f"runtime {runtime:.1f}s (< 240)")


def test_criterion_07_inner_max_and_gradients():
    t0 = perf_counter()
    worst_rel_gap = -math.inf
    dominated = True
    for i in range(100):
        stream = split_stream(MASTER, 7_000 + i)
        d = 3 + i % 18
        theta = stream.standard_normal(d)
        x = 1.5 * stream.standard_normal(d)
        eps = 0.05 + 0.25 * float(stream.random())
        model = LogisticModel(theta=theta)
        exact_val, _ = adversarial_reg_exact(model, x, eps)
        pg_val, _ = adversarial_reg_pg(model, x, eps, steps=200,
                                       step_size=eps / 10.0, stream=stream)
        # PG iterates stay inside the ball, so any apparent excess is float
        # noise from evaluating the same corner along a different path
        dominated = dominated and pg_val <= exact_val + 1e-12
        rel_gap = (exact_val - pg_val) / max(exact_val, 1e-12)
        worst_rel_gap = max(worst_rel_gap, rel_gap)

    def fd_gradient(fn, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
        grad = np.empty_like(theta)
        for j in range(theta.size):
            up = theta.copy()
            up[j] += h
            down = theta.copy()
            down[j] -= h
            grad[j] = (fn(up) - fn(down)) / (2 * h)
        return grad

    worst_grad_err = -math.inf
    for k, kind in enumerate(("adversarial_exact", "adversarial_pg",
                              "stability")):
        stream = split_stream(MASTER, 7_500 + k)
        d = 6
        xs = stream.standard_normal((5, d))
        ys = np.where(stream.random(5) < 0.5, 1, -1).astype(np.int64)
        weights = 0.5 + stream.random(5)
        theta = stream.standard_normal(d)
        config = RstConfig(beta=2.0, epsilon=0.15, reg_kind=kind,
                           noise_sigma=0.7, noise_samples=3, pg_steps=12,
                           pg_step_size=0.02)
        seed_ix = 7_600 + k

        def value(th):
            return robust_objective(th, xs, ys, weights, config,
                                    split_stream(MASTER, seed_ix))[0]

        _, grad = robust_objective(theta, xs, ys, weights, config,
                                   split_stream(MASTER, seed_ix))
        fd = fd_gradient(value, theta)
        err = float(np.max(np.abs(grad - fd))) / max(float(np.max(np.abs(fd))),
                                                     1e-12)
        worst_grad_err = max(worst_grad_err, err)
    stream = split_stream(MASTER, 7_900)
    theta = stream.standard_normal(6)
    x = stream.standard_normal(6)

    def stab_value(th):
        return stability_reg(LogisticModel(theta=th), x, 0.7, 4,
                             split_stream(MASTER, 7_901))[0]

    _, stab_grad = stability_reg(LogisticModel(theta=theta), x, 0.7, 4,
                                 split_stream(MASTER, 7_901))
    fd = fd_gradient(stab_value, theta)
    stab_err = float(np.max(np.abs(stab_grad - fd))) / max(
        float(np.max(np.abs(fd))), 1e-12)
    worst_grad_err = max(worst_grad_err, stab_err)
    runtime = perf_counter() - t0
    ok = (dominated and worst_rel_gap <= 1e-6 and worst_grad_err <= 1e-5
          and runtime < 30.0)
    _report(7, ok, f"exact >= 200-step PG on 100 instances "
                   f"(dominated={dominated}), worst relative gap "
                   f"{worst_rel_gap:.2e} (need <= 1e-6), worst FD gradient "
                   f"error {worst_grad_err:.2e} (need <= 1e-5), "
                   f"runtime {runtime:.1f}s (< 30)")


def test_criterion_08_rst_beats_labeled_only():
    t0 = perf_counter()
    spec = ExperimentSpec(kind="rst_demo", n0=30, d=100, epsilon=0.5,
                          allow_large_epsilon=True, trial_count=10,
                          n_unlabeled=3_000, master_seed=MASTER)
    _, summaries = run_rst_demo(spec)
    margin = [s for s in summaries if s.metric == "rob_err_margin"][0].mean
    runtime = perf_counter() - t0
    ok = margin >= 0.05 and runtime < 120.0
    _report(8, ok, f"robust-error margin of RST over labeled-only robust "
                   f"training: {margin:.4f} over 10 seeds (need >= 0.05), "
                   f"runtime {runtime:.1f}s (< 120)")


def test_criterion_09_certification_soundness():
    t0 = perf_counter()
    config = SmoothingConfig()
    sigma = config.noise_sigma
    theta = np.array([1.0, 0.0])
    x = np.array([sigma * inverse_gaussian_cdf(0.9), 0.0])

    def oracle(batch):
        scores = np.einsum("ij,j->i", np.asarray(batch), theta)
        return np.where(scores >= 0.0, 1, -1)

    true_radius = sigma * inverse_gaussian_cdf(0.9)
    over = 0
    for i in range(1_000):
        res = certify(oracle, x, config, split_stream(MASTER, 9_000 + i))
        if res.certified and res.radius > true_radius:
            over += 1
    over_frac = over / 1_000
    bound = 5e-3 + 3 * math.sqrt(1e-3 / 1_000)
    constant = certify(lambda b: np.ones(len(np.asarray(b)), dtype=np.int64),
                       np.zeros(2), config, split_stream(MASTER, 9_999))
    expected = sigma * inverse_gaussian_cdf(
        config.conf_alpha ** (1.0 / config.n_estimation))
    radius_err = abs(constant.radius - expected)
    runtime = perf_counter() - t0
    ok = over_frac <= bound and radius_err <= 1e-9 and runtime < 120.0
    _report(9, ok, f"over-certification fraction {over_frac:.4f} of 1000 "
                   f"runs at p_true=0.9 (need <= {bound:.4f}), "
                   f"constant-classifier radius off by {radius_err:.1e} "
                   f"from sigma*PhiInv(alpha^(1/N)) (need <= 1e-9), "
                   f"runtime {runtime:.1f}s (< 120)")


def test_criterion_10_radius_conversion():
    value = linf_radius_from_l2(0.435, 3072)
    ok = 0.00780 <= value <= 0.00790
    _report(10, ok, f"linf_radius_from_l2(0.435, 3072) = {value:.5f} "
                    f"(need in [0.00780, 0.00790])")


def test_criterion_11_worker_determinism(tmp_path):
    t0 = perf_counter()
    cases = {
        "verify": ["verify", "--trials", "4", "--mc-samples", "2000"],
        "gap": ["gap", "--trials", "3"],
        "sweep-unlabeled": ["sweep-unlabeled", "--trials", "2",
                            "--n-unlabeled-grid", "0,2000,8000"],
        "sweep-irrelevant": ["sweep-irrelevant", "--trials", "2",
                             "--alphas", "1,0.5,0", "--n-unlabeled", "2000"],
        "sweep-labels": ["sweep-labels", "--trials", "2",
                         "--n-labeled-grid", "2,4", "--n-unlabeled", "2000"],
        "rst-demo": ["rst-demo", "--trials", "2"],
        "certify-demo": ["certify-demo", "--trials", "6", "--d", "4",
                         "--noise-sigma", "1.5", "--n0-selection", "20",
                         "--n-estimation", "500", "--conf-alpha", "0.01",
                         "--radii", "0,0.5,1"],
    }
    mismatched = []
    for name, args in cases.items():
        outs = {}
        for workers in (1, 8):
            out = str(tmp_path / f"{name}-w{workers}.csv")
            code = cli_main(args + ["--seed", "17", "--workers",
                                    str(workers), "--out", out])
            assert code == 0, f"{name} exited {code}"
            outs[workers] = (open(out, "rb").read(),
                             open(out + ".summary.csv", "rb").read())
        if outs[1] != outs[8]:
            mismatched.append(name)
    runtime = perf_counter() - t0
    ok = not mismatched and runtime < 300.0
    _report(11, ok, f"all 7 subcommands byte-identical across workers "
                    f"{{1, 8}}{' except ' + ', '.join(mismatched) if mismatched else ''}, "
                    f"runtime {runtime:.1f}s (< 300)")
