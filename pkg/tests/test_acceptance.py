"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed even when output capture is on.
"""

import math
import time

import numpy as np
import pytest

import oracles
from leoslice.constellation import ConstellationConfig, slant_range_at_elevation
from leoslice.demand import RegimeSpec, Segment, generate, trace_features
from leoslice.linkmodel import Gaussian, LinkParams, Poisson, effective_bandwidth, full_rate
from leoslice.predictor import GaussianFit, PoissonFit, fit_predictor, gaussian_kl, predict
from leoslice.simkit import ModelCache, ScenarioConfig, Seeds, run, sweep_elevation
from leoslice.slicer import SliceProblem, served_capacity, solve_window
from test_predictor import finite_difference_check

LINK = LinkParams()


@pytest.fixture
def verdict(capsys):
    def emit(number, title, checks, elapsed, limit):
        checks = dict(checks)
        checks[f"runtime {elapsed:.1f} s < {limit:g} s"] = elapsed < limit
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        with capsys.disabled():
            tail = "" if ok else "  failed: " + "; ".join(failed)
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}  {title}{tail}")
        assert ok, failed
    return emit


def test_criterion_1_orbit_sanity(verdict):
    t0 = time.perf_counter()
    cfg = ConstellationConfig()
    period = cfg.period
    nadir = slant_range_at_elevation(90.0, 550.0)
    d30 = slant_range_at_elevation(30.0, 550.0)
    checks = {
        "period 5731 +/- 1 s": abs(period - 5731) <= 1,
        "period equals Kepler oracle": math.isclose(period, oracles.kepler_period(550.0), rel_tol=1e-12),
        "nadir slant range 550 km": math.isclose(nadir, 550.0, abs_tol=1e-9),
        "30 deg slant range 992.8 +/- 0.5 km": abs(d30 - 992.8) <= 0.5,
        "30 deg slant range equals geometric oracle":
            math.isclose(d30, oracles.slant_range_bisect(30.0, 550.0), abs_tol=1e-6),
    }
    verdict(1, f"period {period:.2f} s, nadir {nadir:.6f} km, 30 deg {d30:.3f} km", checks,
            time.perf_counter() - t0, 1)


def test_criterion_2_effective_bandwidth(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    theta = 0.1
    eb_p = effective_bandwidth(Poisson(100), theta)
    mc_p = oracles.mc_effective_bandwidth(rng.poisson(100, 10**6), theta)
    eb_g = effective_bandwidth(Gaussian(100, 400), theta)
    mc_g = oracles.mc_effective_bandwidth(rng.normal(100, 20, 10**6), theta)
    lim_p = effective_bandwidth(Poisson(100), 1e-8)
    lim_g = effective_bandwidth(Gaussian(100, 400), 1e-8)
    checks = {
        "Poisson within 1% of MC": abs(eb_p / mc_p - 1) < 0.01,
        "Gaussian within 1% of MC": abs(eb_g / mc_g - 1) < 0.01,
        "Poisson theta->0 limit": abs(lim_p / 100 - 1) < 1e-5,
        "Gaussian theta->0 limit": abs(lim_g / 100 - 1) < 1e-5,
    }
    verdict(2, f"Poisson {eb_p:.3f} vs MC {mc_p:.3f}, Gaussian {eb_g:.3f} vs MC {mc_g:.3f}", checks,
            time.perf_counter() - t0, 30)


def rand_instance(rng, n=3, T=4):
    while True:
        vis = (rng.random((n, T)) < 0.6).astype(int)
        if vis.any(axis=1).all():
            break
    d = rng.uniform(550, 1500, (n, T))
    capfull = (vis * full_rate(d, LINK)).sum(axis=0)
    th = rng.uniform(0, 0.8, T) * capfull
    return SliceProblem(np.arange(n), vis, d, th, LINK, beta_res=rng.uniform(0, 2e-6),
                        beta_delay=rng.uniform(0, 200))


def test_criterion_3_solver_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, meets, fourteen_a = 0.0, True, True
    for _ in range(50):
        p = rand_instance(rng, n=int(rng.integers(1, 4)), T=int(rng.integers(1, 5)))
        dec = solve_window(p)
        ref = oracles.grid_oracle(p.visible, p.distance, p.thresholds, p.beta_res, p.beta_delay)
        worst = max(worst, dec.objective / ref if ref > 0 else (0.0 if dec.objective <= 1e-12 else math.inf))
        meets &= bool(np.all(served_capacity(dec.candidate, p.visible, p.capacity_matrix()) >= p.thresholds))
        fourteen_a &= bool(np.all(dec.candidate <= dec.active) and np.all(dec.candidate[dec.active == 0] == 0))
    checks = {
        "objective <= oracle x 1.01": worst <= 1.01,
        "all thresholds met": meets,
        "b <= r exactly": fourteen_a,
    }
    verdict(3, f"50 instances, worst solver/oracle ratio {worst:.5f}", checks, time.perf_counter() - t0, 300)


def random_fit(rng):
    if rng.random() < 0.5:
        lam = rng.uniform(5, 60)
        return PoissonFit(lam, rng.uniform(0, 0.3) * lam)
    mu = rng.uniform(5, 60)
    var = rng.uniform(0.2, 5) * mu
    return GaussianFit(mu, rng.uniform(0, 0.3) * mu, var, rng.uniform(0, 0.5) * var)


def realized_bandwidth(fit, theta, rng, n):
    if isinstance(fit, PoissonFit):
        lam = rng.normal(fit.intensity, fit.intensity_std, n)
        return lam * math.expm1(theta) / theta
    mu = rng.normal(fit.mean_mean, fit.mean_std, n)
    var = rng.normal(fit.var_mean, fit.var_std, n)
    return mu + 0.5 * theta * var


def test_criterion_4_chance_constraint_certificate(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    theta = LINK.qos_exponent
    worst = {0.9: 1.0, 0.99: 1.0}
    solved = 0
    while solved < 20:
        n, T = 3, 4
        vis = np.ones((n, T), dtype=int)
        vis[rng.random((n, T)) < 0.3] = 0
        vis[0] = 1
        d = rng.uniform(550, 1300, (n, T))
        fits = [random_fit(rng) for _ in range(T)]
        problems = {g: SliceProblem.from_distributions(np.arange(n), vis, d, fits, LINK, g) for g in worst}
        cap = problems[0.99].capacity_matrix().sum(axis=0)
        if np.any(problems[0.99].thresholds >= cap):
            continue    # demand beyond full reservation: no plan to certify
        solved += 1
        draws = [realized_bandwidth(f, theta, rng, 10**5) for f in fits]
        for g, p in problems.items():
            dec = solve_window(p)
            served = served_capacity(dec.candidate, p.visible, p.capacity_matrix())
            for t in range(T):
                worst[g] = min(worst[g], float(np.mean(draws[t] <= served[t])))
    checks = {f"gamma {g}: worst slot {w:.4f} >= {g - 0.01:.2f}": w >= g - 0.01 for g, w in worst.items()}
    verdict(4, f"20 windows, worst satisfaction {worst[0.9]:.4f} (0.9), {worst[0.99]:.4f} (0.99)", checks,
            time.perf_counter() - t0, 120)


def test_criterion_5_bnn_correctness(verdict):
    t0 = time.perf_counter()
    rel = finite_difference_check()
    rng = np.random.default_rng(5)
    kl_err = 0.0
    for _ in range(3):
        m, s, sp = rng.normal(0, 1), rng.uniform(0.2, 2), rng.uniform(0.3, 2)
        closed = float(gaussian_kl(m, s, sp))
        kl_err = max(kl_err, abs(oracles.gaussian_kl_mc(m, s, sp, 10**6, rng) / closed - 1))
    feats = trace_features(generate(RegimeSpec((Segment(0, "poisson", 30.0, 30.0),), 800), 5), 10)
    model = fit_predictor(feats[:60], epochs=50, seed=5).model
    pf = predict(model.point_estimate(), feats[-10:], mc_samples=30, seed=5)
    checks = {
        "gradient rel. error < 1e-4": rel < 1e-4,
        "KL closed form vs MC within 1%": kl_err < 0.01,
        "zero-std spread exactly 0": pf.mean_std == 0.0 and pf.variance_std == 0.0,
    }
    verdict(5, f"gradient rel. error {rel:.2e}, KL rel. error {kl_err:.2e}", checks,
            time.perf_counter() - t0, 120)


def test_criterion_6_predictive_calibration(verdict):
    t0 = time.perf_counter()
    feats = trace_features(generate(RegimeSpec((Segment(0, "poisson", 300.0, 300.0),), 2700), 0), 10)
    model = fit_predictor(feats[:60], seed=1).model
    hits = 0
    for j in range(60, 260):
        lo, hi = predict(model, feats[j - 10:j], mc_samples=30, seed=j).interval(0.9)
        hits += lo <= feats[j, 0] <= hi
    cover = hits / 200
    verdict(6, f"90% intervals cover {100 * cover:.1f}% of 200 held-out slot means",
            {"coverage >= 80%": cover >= 0.8}, time.perf_counter() - t0, 600)


ROWS = (("FRS", 0.9), ("FDTRS", 0.9), ("FDTRS", 0.99), ("ADTRS", 0.9), ("ADTRS", 0.99), ("PerfectRS", 0.9))
ANGLES = (10, 20, 30, 40)


@pytest.mark.slow
def test_criterion_7_end_to_end_trends(verdict, capsys):
    t0 = time.perf_counter()
    res, viol, repred, sweep = {}, {}, {}, []
    for sd in range(10):
        cfg = ScenarioConfig(seeds=Seeds(sd, sd + 100, sd + 200))
        cache = ModelCache()
        for scheme, g in ROWS:
            r = run(cfg, scheme, g, model_cache=cache)
            res.setdefault(r.scheme, []).append(r.avg_resource_hz)
            viol.setdefault(r.scheme, []).append(r.violation_rate)
            repred.setdefault(r.scheme, []).append(r.repredictions)
        sw = sweep_elevation(cfg, ANGLES, "ADTRS", 0.9, model_cache=cache)
        sweep.append([x.avg_resource_hz for x in sw])
    med = {k: float(np.median(v)) for k, v in viol.items()}
    mres = {k: float(np.median(v)) for k, v in res.items()}
    mrep = {k: float(np.median(v)) for k, v in repred.items()}
    msweep = np.median(np.array(sweep), axis=0)
    with capsys.disabled():
        print("\n  scheme       median resource  median violation  median re-predictions")
        for k in med:
            print(f"  {k:<12} {mres[k] / 1e6:>11.1f} MHz {100 * med[k]:>15.1f} % {mrep[k]:>12.1f}")
        print("  ADTRS 0.9 sweep medians (MHz): "
              + ", ".join(f"{a} deg {v / 1e6:.1f}" for a, v in zip(ANGLES, msweep)))
    checks = {
        "(a) FRS > FDTRS 0.9 > ADTRS 0.9": med["FRS"] > med["FDTRS 0.9"] > med["ADTRS 0.9"],
        "(a) ADTRS 0.99 <= ADTRS 0.9": med["ADTRS 0.99"] <= med["ADTRS 0.9"],
        "(b) PerfectRS violation exactly 0": all(v == 0.0 for v in viol["PerfectRS"]),
        "(c) FRS and FDTRS re-predictions 0": all(
            c == 0 for k in ("FRS", "FDTRS 0.9", "FDTRS 0.99") for c in repred[k]),
        "(c) ADTRS re-predictions > 0": mrep["ADTRS 0.9"] > 0 and mrep["ADTRS 0.99"] > 0,
        "(d) ADTRS resource nondecreasing in elevation": bool(np.all(np.diff(msweep) >= 0)),
    }
    verdict(7, "10-seed medians on the default scenario", checks, time.perf_counter() - t0, 1800)


def test_criterion_8_determinism(verdict):
    t0 = time.perf_counter()
    cfg = ScenarioConfig(n_windows=3)
    same = {}
    for scheme in ("FRS", "ADTRS", "PerfectRS"):
        a = run(cfg, scheme).to_json()
        b = run(cfg, scheme).to_json()
        same[f"{scheme} byte-identical"] = a.encode() == b.encode()
    verdict(8, "repeated runs with identical config and seeds", same, time.perf_counter() - t0, math.inf)
