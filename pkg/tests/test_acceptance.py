"""Acceptance gate: every release criterion at its stated tolerance.

Each test prints one ``[PASS]``/``[FAIL]`` line per criterion (visible with
``pytest -s`` or on failure) and then asserts.  Tolerances are fixed here,
not calibrated at runtime.
"""

import hashlib
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from frontier_lab import geometry, market_data, signals
from frontier_lab.cli import main as cli_main
from frontier_lab.experiments import (
    make_config,
    run_attenuation,
    run_calibration,
    run_cancellation,
)
from frontier_lab.factor_bias import (
    CancellationParams,
    ConfounderModel,
    TwoAssetStructure,
    attenuated_slope,
    attenuation_bounds,
    attenuation_derivative,
    biased_loading,
    misspecified_exposure,
)
from frontier_lab.frontier import convexity_report, min_variance_at_target, sweep_frontier
from frontier_lab.geometry import SignalVector, SpdCovariance
from frontier_lab.stochastics import (
    RngStream,
    empirical_moments,
    normals_from,
    open_uniforms,
    uniforms_from,
)

BENCH = CancellationParams(alpha=0.6, beta=0.2, gamma=0.7, sigma_eta=0.8, sigma_zeta=0.0)


def _line(num: int, ok: bool, text: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")


@pytest.fixture(scope="module")
def paper_cov() -> SpdCovariance:
    return geometry.make_spd_cov(RngStream(42, 0), 120)


@pytest.fixture(scope="module")
def paper_mu(paper_cov) -> SignalVector:
    raw = normals_from(RngStream(42, 1).generator(0), 120)
    return SignalVector(raw / np.linalg.norm(raw) * 0.25, "mu_true")


def test_criterion_1_attenuation_table(monkeypatch):
    monkeypatch.delenv("FRONTIER_LAB_THREADS", raising=False)
    start = time.perf_counter()
    report = run_attenuation(make_config("attenuation", seed=42))
    elapsed = time.perf_counter() - start

    theory = np.array(report.summary["theory_slope"])
    mc = np.array(report.summary["mc_slope"])
    anchor_ok = abs(theory[0] - (-0.220000)) <= 1e-12
    dev = np.max(np.abs(mc - theory))
    dev_ok = dev <= 5e-3
    runtime_ok = elapsed < 30.0
    ok = anchor_ok and dev_ok and runtime_ok
    _line(1, ok, f"attenuation table: max|MC-theory|={dev:.2e} (<=5e-3), "
                 f"theory(0)={theory[0]:.6f}, runtime={elapsed:.1f}s (<30s)")
    assert anchor_ok and dev_ok and runtime_ok


def test_criterion_2_monotonicity_bounds_derivative():
    grid = np.linspace(0.0, 0.8, 17)
    theory = np.array([attenuated_slope(replace(BENCH, sigma_zeta=s)) for s in grid])
    lower, upper = attenuation_bounds(BENCH)
    increasing = bool(np.all(np.diff(theory) > 0))
    sandwiched = bool(np.all((theory >= lower) & (theory <= upper)))
    attained = theory[0] == lower

    h = 1e-5
    fd_dev = 0.0
    for s in grid[grid > h]:
        fd = (
            attenuated_slope(replace(BENCH, sigma_zeta=s + h))
            - attenuated_slope(replace(BENCH, sigma_zeta=s - h))
        ) / (2 * h)
        fd_dev = max(fd_dev, abs(fd - attenuation_derivative(replace(BENCH, sigma_zeta=s))))
    deriv_ok = fd_dev <= 1e-6 and attenuation_derivative(BENCH) == 0.0

    ok = increasing and sandwiched and attained and deriv_ok
    _line(2, ok, f"theory strictly increasing={increasing}, bounds exact={sandwiched and attained}, "
                 f"max fd deviation={fd_dev:.2e} (<=1e-6)")
    assert ok


def test_criterion_3_cosine_sharpe_law(paper_cov, paper_mu):
    start = time.perf_counter()
    family = geometry.build_alignment_family(
        paper_mu, paper_cov, RngStream(42, 2), np.linspace(0.0, math.pi, 25)
    )
    _, _, sharpe0 = geometry.sharpe_of_weights(
        geometry.tangency_direction(paper_mu, paper_cov), paper_mu, paper_cov
    )
    max_dev = 0.0
    boundary_ok = True
    for theta in family.theta_grid:
        sharpe = geometry.sharpe_of_weights(
            geometry.tangency_direction(family.mu_tilde(theta), paper_cov), paper_mu, paper_cov
        )[2]
        cos_t = math.cos(theta)
        max_dev = max(max_dev, abs(sharpe / sharpe0 - cos_t))
        if abs(cos_t) > 1e-8:
            boundary_ok = boundary_ok and ((sharpe <= 0.0) == (cos_t <= 0.0))
        else:
            # Collapse point: the ratio law already pins |Sharpe| <= 1e-8.
            boundary_ok = boundary_ok and abs(sharpe / sharpe0) <= 2e-8
    elapsed = time.perf_counter() - start
    ok = max_dev <= 1e-8 and boundary_ok and elapsed < 5.0
    _line(3, ok, f"cosine law: max|ratio-cos|={max_dev:.2e} (<=1e-8), "
                 f"collapse boundary={boundary_ok}, runtime={elapsed:.2f}s (<5s)")
    assert ok


def test_criterion_4_surrogate_sharpe_identity(paper_cov, paper_mu):
    mu_norm = geometry.vm_norm(paper_mu, paper_cov)
    worst = 0.0
    for k in range(100):
        surrogate = SignalVector(
            normals_from(RngStream(42, 100 + k).generator(0), 120), f"s{k}"
        )
        sharpe = geometry.sharpe_of_weights(
            geometry.tangency_direction(surrogate, paper_cov), paper_mu, paper_cov
        )[2]
        target = mu_norm * geometry.cosine_alignment(paper_mu, surrogate, paper_cov)
        worst = max(worst, abs(sharpe - target) / abs(target))
    ok = worst <= 1e-10
    _line(4, ok, f"surrogate Sharpe identity: worst relative error={worst:.2e} (<=1e-10), 100 surrogates")
    assert ok


def test_criterion_5_calibration_peak():
    report = run_calibration(make_config("calibration", seed=42))
    exponents = report.summary["exponents"]
    rels = report.summary["relative_sharpes"]
    argmax_ok = report.summary["argmax_exponent"] == 1.0
    peak_ok = abs(rels[exponents.index(1.0)] - 1.0) <= 1e-10
    bounded_ok = all(r <= 1.0 + 1e-10 for r in rels)
    ranks = report.tables["sharpe"].column("rank_correlation")
    rank_ok = all(r == 1.0 for r in ranks)
    ok = argmax_ok and peak_ok and bounded_ok and rank_ok
    _line(5, ok, f"calibration peak at p=1 (rel={rels[exponents.index(1.0)]:.12f}), "
                 f"all<=1+1e-10={bounded_ok}, rank correlation exactly 1={rank_ok}")
    assert ok


def _nonlinear_frontier_inputs():
    cfg = signals.NonlinearDgpConfig()
    features, _, _, returns = signals.generate_nonlinear_dataset(cfg, RngStream(42, 0))
    p_pred, _ = signals.drawn_beta_probabilities(features, RngStream(42, 1))
    mu_hat = SignalVector(signals.prob_to_weight(p_pred).mean(axis=0), "surrogate-mean")
    _, sigma = empirical_moments(returns)
    return mu_hat, SpdCovariance.from_matrix(sigma)


def test_criterion_6_frontier_correctness(tmp_path):
    # (a) two-asset hand solution
    eye = np.eye(2)
    cov2 = SpdCovariance(matrix=eye, inverse=eye.copy())
    mu01 = SignalVector(np.array([0.0, 1.0]), "mu01")
    hand_ok = True
    for target in np.linspace(0.0, 1.0, 9):
        pt = min_variance_at_target(mu01, cov2, float(target))
        hand_ok = hand_ok and np.allclose(pt.weights, [1 - target, target], atol=1e-12)

    # (b) every solve of the nonlinear configuration beats 10,000 random
    # feasible perturbations
    mu_hat, cov = _nonlinear_frontier_inputs()
    front = sweep_frontier(mu_hat, cov, 50)
    a = np.column_stack([np.ones(cov.n), mu_hat.values])
    proj = np.eye(cov.n) - a @ np.linalg.inv(a.T @ a) @ a.T
    directions = normals_from(RngStream(42, 3).generator(0), 10_000 * cov.n).reshape(
        10_000, cov.n
    ) @ proj.T
    optimal_ok = True
    for pt in front.points:
        perturbed = pt.weights[None, :] + directions
        variances = np.einsum("ij,jk,ik->i", perturbed, cov.matrix, perturbed)
        base = pt.volatility**2
        optimal_ok = optimal_ok and bool(np.all(variances >= base - 1e-12 * max(1.0, base)))

    # (c) convexity of every frontier produced here, incl. the bundled
    # deterministic fixture standing in for unnamed real tickers
    conv_nonlinear = convexity_report(front)
    demo = market_data.write_demo_prices(tmp_path / "demo.csv")
    sub = market_data.subset(
        market_data.to_simple_returns(market_data.load_price_csv(demo)), 1000, 5
    )
    means, sigma = empirical_moments(sub.to_sample_panel())
    front_demo = sweep_frontier(
        SignalVector(means, "empirical-mean"), SpdCovariance.from_matrix(sigma), 50
    )
    conv_demo = convexity_report(front_demo)
    convex_ok = (
        conv_nonlinear.min_second_divided_difference >= -1e-10
        and conv_demo.min_second_divided_difference >= -1e-10
        and conv_nonlinear.is_convex()
        and conv_demo.is_convex()
    )
    ok = hand_ok and optimal_ok and convex_ok
    _line(6, ok, f"frontier: hand solution 1e-12={hand_ok}, beats 10k random feasible "
                 f"portfolios on all 50 solves={optimal_ok}, convexity (incl. fixture)={convex_ok}")
    assert ok


def test_criterion_7_structural_cancellation():
    report = run_cancellation(make_config("cancellation", seed=42))
    rates = report.summary["rates"]
    corrs = report.summary["correlations"]
    rate_ok = all(r > 0.8 for r in rates)
    corr_ok = all(c > 0.9 for c in corrs)
    no_inversion_ok = all(c > 0.0 for c in corrs)
    ok = rate_ok and corr_ok and no_inversion_ok
    _line(7, ok, f"cancellation over 10 sub-streams: min rate={min(rates):.3f} (>0.8), "
                 f"min corr={min(corrs):.3f} (>0.9), no inversion={no_inversion_ok}")
    assert ok


def test_criterion_8_logistic_oracle_equivalence():
    x = np.array([-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0])
    y = np.array([0, 0, 1, 0, 1, 1, 1, 1.0])
    model = signals.fit_logistic(x[:, None], y)

    # Dense brute-force grid over (intercept, slope) in [-5,5]^2 at 1e-3.
    grid = np.arange(-5.0, 5.0 + 1e-9, 1e-3)
    best_ll = -np.inf
    best = (np.nan, np.nan)
    chunk = 200
    for i in range(0, grid.size, chunk):
        b0 = grid[i : i + chunk][:, None]
        ll = np.zeros((b0.size, grid.size))
        for xi, yi in zip(x, y):
            s = b0 + grid[None, :] * xi
            ll += yi * s - np.logaddexp(0.0, s)
        flat = int(np.argmax(ll))
        if ll.ravel()[flat] > best_ll:
            best_ll = ll.ravel()[flat]
            best = (float(b0[flat // grid.size, 0]), float(grid[flat % grid.size]))

    grid_ok = (
        abs(model.intercept - best[0]) <= 2e-3
        and abs(model.coefficients[0] - best[1]) <= 2e-3
    )

    # Consistency at n=100000 against known truth.
    n = 100_000
    s = RngStream(42, 5)
    features = normals_from(s.generator(0), 2 * n).reshape(n, 2)
    truth = np.array([0.8, -0.5])
    p = 1.0 / (1.0 + np.exp(-(0.3 + features @ truth)))
    outcomes = (open_uniforms(s.generator(1), n) < p).astype(float)
    big = signals.fit_logistic(features, outcomes)
    consist_ok = (
        abs(big.intercept - 0.3) <= 0.05 and np.all(np.abs(big.coefficients - truth) <= 0.05)
    )
    ok = grid_ok and consist_ok
    _line(8, ok, f"logistic: IRLS=({model.intercept:.4f},{model.coefficients[0]:.4f}) vs "
                 f"grid argmax=({best[0]:.4f},{best[1]:.4f}) within 2e-3={grid_ok}; "
                 f"100k consistency within 0.05={consist_ok}")
    assert ok


def test_criterion_9_bias_formulas():
    # 20 deterministic random triples, each at n=200000 within 0.01.
    gen = RngStream(42, 7)
    betas = uniforms_from(gen.generator(0), -1.0, 1.0, 20)
    gammas = uniforms_from(gen.generator(1), -1.0, 1.0, 20)
    deltas = uniforms_from(gen.generator(2), -0.95, 0.95, 20)
    n = 200_000
    mc_ok = True
    worst = 0.0
    for k in range(20):
        model = ConfounderModel(float(betas[k]), float(gammas[k]), float(deltas[k]))
        s = RngStream(42, 200 + k)
        z = normals_from(s.generator(0), n)
        eta = math.sqrt(1.0 - model.delta**2) * normals_from(s.generator(1), n)
        f2 = model.delta * z + eta
        x_n = model.gamma_n * z + model.beta_n * f2 + 0.5 * normals_from(s.generator(2), n)
        from frontier_lab.stochastics import ols_simple

        slope = ols_simple(x_n, f2).slope
        err = abs(slope - biased_loading(model))
        worst = max(worst, err)
        mc_ok = mc_ok and err <= 0.01

    # Closed-form exposure checks.
    exposure_ok = True
    gen2 = RngStream(42, 8)
    vals = uniforms_from(gen2.generator(0), -1.0, 1.0, 120).reshape(20, 6)
    for row in vals:
        g1, b1, g2, b2, delta, _ = row
        bhat1, bhat2 = b1 + g1 * delta, b2 + g2 * delta
        if abs(bhat2 - bhat1) < 1e-3:
            continue
        _, realized = misspecified_exposure(
            TwoAssetStructure(np.array([[g1, b1], [g2, b2]])), float(delta)
        )
        expected = np.array([g2 - g1, b2 - b1]) / (bhat2 - bhat1)
        exposure_ok = exposure_ok and np.allclose(realized, expected, atol=1e-12)
    _, clean = misspecified_exposure(
        TwoAssetStructure(np.array([[0.0, 0.5], [0.0, 1.25]])), 0.9
    )
    exact_ok = clean[0] == 0.0 and clean[1] == 1.0
    ok = mc_ok and exposure_ok and exact_ok
    _line(9, ok, f"bias formulas: 20-triple MC worst error={worst:.4f} (<=0.01), "
                 f"exposure closed form 1e-12={exposure_ok}, exact (0,1) clean case={exact_ok}")
    assert ok


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_criterion_10_end_to_end_determinism(tmp_path, monkeypatch):
    fast_args = {
        "cancellation": ["--n-obs", "300", "--reps", "2"],
        "attenuation": ["--n-obs", "3000", "--grid-points", "5", "--reps", "2",
                        "--mc-tolerance", "0.1"],
        "calibration": ["--n-assets", "40"],
        "nonlinear-frontier": ["--n-obs", "400"],
        "alignment": ["--n-assets", "40", "--theta-points", "9", "--n-targets", "15"],
        "real-data-frontier": ["--write-demo", "--demo-days", "400", "--n-days", "300",
                               "--n-assets", "5"],
    }
    all_ok = True
    for name, args in fast_args.items():
        digests = []
        # One shared fixture path: the csv parameter is part of the config
        # identity, so byte-identity is defined for a fixed path.
        shared_csv = tmp_path / name / "demo.csv"
        for run, threads in (("a", "1"), ("b", "1"), ("c", "3")):
            monkeypatch.setenv("FRONTIER_LAB_THREADS", threads)
            out = tmp_path / name / run
            full = [name, "--out", str(out), "--seed", "5", *args]
            if name == "real-data-frontier":
                full += ["--csv", str(shared_csv)]
            rc = cli_main(full)
            assert rc == 0, f"{name} exited {rc}"
            run_dir = next(p for p in out.iterdir() if p.is_dir())
            digests.append(_tree_digest(run_dir))
        same = digests[0] == digests[1] == digests[2]
        all_ok = all_ok and same
        if not same:
            print(f"  mismatch in {name}: {digests}")
    _line(10, all_ok, "all six subcommands byte-identical across re-runs and thread counts")
    assert all_ok
