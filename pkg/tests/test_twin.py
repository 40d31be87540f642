import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leoslice.demand import DemandFeature
from leoslice.linkmodel import LinkParams, full_rate
from leoslice.predictor import PredictedFeature, init_model
from leoslice.slicer import execute_on_coverage, solve_window
from leoslice.twin import (KEEP, RESLICE, FeatureCache, SliceTwin, TwinPolicy, WindowContext, emulate,
                           maybe_reslice, revise_features, thresholds_from_predictions, write_event_log)

LINK = LinkParams()


def cache_with(means, history=()):
    c = FeatureCache(history)
    c.start_window([PredictedFeature(m, m, 1.0, 1.0) for m in means])
    return c


# ------------------------------------------------------------------- revision

def test_revision_example():
    c = cache_with([10.0, 10.0, 10.0])
    out = revise_features(c, DemandFeature(14.0, 10.0), 0, 0.5)
    assert out[1].mean == 12.0 and out[2].mean == 11.0
    assert 0 not in out


def test_revision_zero_residual():
    c = cache_with([10.0, 10.0, 10.0])
    before = dict(c.predicted)
    revise_features(c, DemandFeature(10.0, 10.0), 0, 0.6)
    assert c.predicted[1] == before[1] and c.predicted[2] == before[2]


def test_revision_small_alpha_decay():
    c = cache_with([10.0, 10.0, 10.0])
    revise_features(c, DemandFeature(110.0, 10.0), 0, 0.01)
    assert c.predicted[2].mean - 10.0 == pytest.approx(1e-4 * 100.0, rel=1e-9)


def test_revision_idempotent_per_slot():
    c = cache_with([10.0, 10.0, 10.0])
    revise_features(c, DemandFeature(14.0, 10.0), 0, 0.5)
    snap = dict(c.predicted)
    revise_features(c, DemandFeature(14.0, 10.0), 0, 0.5)
    assert c.predicted == snap


def test_revision_clamps_variance():
    c = cache_with([10.0, 10.0])
    revise_features(c, DemandFeature(10.0, 0.0), 0, 0.9)
    assert c.predicted[1].variance == pytest.approx(10.0 - 0.9 * 10.0)
    c = cache_with([10.0, 2.0])
    c.predicted[1] = PredictedFeature(10.0, 1.0)
    revise_features(c, DemandFeature(10.0, 0.0), 0, 0.99)
    assert c.predicted[1].variance == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-50, 50), st.integers(2, 8))
def test_revision_geometric_shift(alpha, resid, n):
    c = cache_with([100.0] * n)
    revise_features(c, DemandFeature(100.0 + resid, 100.0), 0, alpha)
    for t in range(1, n):
        assert c.predicted[t].mean - 100.0 == pytest.approx(alpha**t * resid, abs=1e-9)


def test_policy_validation():
    with pytest.raises(ValueError):
        TwinPolicy(alpha=1.0)


# ------------------------------------------------------------------ emulation

def two_satellite_context():
    # satellite 0 covers the first half of the window, satellite 1 the second half
    T = 10
    vis = np.zeros((2, T), dtype=np.int8)
    vis[0, :5] = 1
    vis[1, 5:] = 1
    d = np.full((2, T), 800.0)
    cap = np.where(vis > 0, full_rate(d, LINK), 0.0)
    prop = np.where(vis > 0, d / LINK.light_speed, 0.0)
    return WindowContext(np.array([0, 1]), vis, d, cap, prop, LINK, 1e-6, 100.0)


def planned(ctx, mean=20.0, gamma=0.9):
    preds = [PredictedFeature(mean, mean, 1.0, 1.0, slot=t) for t in range(10)]
    th = thresholds_from_predictions(preds, LINK.qos_exponent, gamma)
    dec = solve_window(ctx.problem(np.arange(10), th, gamma, {}))
    return preds, dec


def test_emulation_consistent_with_solver():
    ctx = two_satellite_context()
    preds, dec = planned(ctx)
    rep = emulate(dec, ctx.visible, ctx.cap, ctx.prop, dict(enumerate(preds)), LINK, 1e-6, 100.0, 0.9)
    assert rep.cost == pytest.approx(dec.objective, rel=1e-6)
    assert rep.satisfied.all()
    assert rep.unexecuted_remaining


def test_emulation_flags_excess_demand():
    ctx = two_satellite_context()
    preds, dec = planned(ctx)
    big = {t: PredictedFeature(2 * full_rate(800.0, LINK), 1.0) for t in range(10)}
    rep = emulate(dec, ctx.visible, ctx.cap, ctx.prop, big, LINK, 1e-6, 100.0, 0.9)
    assert not rep.satisfied.all()


def test_emulation_no_remaining_slots():
    ctx = two_satellite_context()
    _, dec = planned(ctx)
    rep = emulate(dec, ctx.visible, ctx.cap, ctx.prop, {}, LINK, 1e-6, 100.0, 0.9)
    assert rep.cost == 0.0 and len(rep.satisfied) == 0 and not rep.unexecuted_remaining


# ----------------------------------------------------------------- re-slicing

def constant_model(level):
    """Predictor whose output is ``level`` for both features whatever the history."""
    m = init_model(4, 10, seed=0)
    m.mu["Wo"][:] = 0.0
    m.mu["bo"][:] = 0.0
    m.feat_mean = np.array([level, level])
    return m.point_estimate()


def step_change_run(policy):
    ctx = two_satellite_context()
    preds, dec = planned(ctx)
    cache = FeatureCache([DemandFeature(20.0, 20.0)] * 10)
    cache.start_window(preds)
    twin = SliceTwin(constant_model(45.0), ctx, policy, cache, mc_samples=1)
    history = []
    for t in range(5):
        dec = execute_on_coverage(dec, ctx.visible, t)
        history.append(dec)
        dec = twin.observe(t, DemandFeature(45.0, 45.0), dec)
    return twin, history, dec


def test_step_change_triggers_reslice():
    twin, history, dec = step_change_run(TwinPolicy(alpha=0.6, gamma=0.9))
    assert twin.repredictions >= 1
    assert RESLICE in [e["action"] for e in twin.events]
    first = [e["action"] for e in twin.events].index(RESLICE)
    assert twin.events[first]["repredictions"] == 1
    # the late satellite's plan now covers the new demand level
    th = thresholds_from_predictions([PredictedFeature(45.0, 45.0)], LINK.qos_exponent, None)[0]
    assert dec.candidate[1] * full_rate(800.0, LINK) >= th


def test_reslice_keeps_locked_values():
    twin, history, dec = step_change_run(TwinPolicy())
    assert history[0].locked[0]
    assert dec.executed[0] == history[0].executed[0]
    assert dec.candidate[0] == history[0].candidate[0]


def test_fixed_policy_never_reslices():
    twin, history, dec = step_change_run(TwinPolicy(reslice=False))
    assert twin.repredictions == 0
    assert all(e["action"] == KEEP for e in twin.events)
    assert np.array_equal(dec.candidate, history[0].candidate)


def test_all_executed_keeps():
    ctx = two_satellite_context()
    preds, dec = planned(ctx)
    dec = execute_on_coverage(dec, ctx.visible, 9)
    cache = cache_with([300.0] * 10, [DemandFeature(1.0, 1.0)] * 10)
    big = {t: PredictedFeature(1e4, 1.0) for t in range(6, 10)}
    rep = emulate(dec, ctx.visible, ctx.cap, ctx.prop, big, LINK, 1e-6, 100.0, 0.9)
    assert not rep.satisfied.all() and not rep.unexecuted_remaining
    action, out, _ = maybe_reslice(rep, cache, constant_model(300.0), ctx, dec, 5, TwinPolicy())
    assert action == KEEP and out is dec


def test_satisfied_and_not_cheaper_keeps():
    ctx = two_satellite_context()
    preds, dec = planned(ctx)
    dec = execute_on_coverage(dec, ctx.visible, 0)
    cache = FeatureCache([DemandFeature(20.0, 20.0)] * 10)
    cache.start_window(preds)
    revise_features(cache, DemandFeature(20.0, 20.0), 0, 0.6)
    rep = emulate(dec, ctx.visible, ctx.cap, ctx.prop, cache.predicted, LINK, 1e-6, 100.0, 0.9)
    assert rep.satisfied.all()
    action, out, _ = maybe_reslice(rep, cache, constant_model(20.0), ctx, dec, 0, TwinPolicy())
    assert action == KEEP and out is dec


def test_event_log_csv(tmp_path):
    twin, _, _ = step_change_run(TwinPolicy())
    path = tmp_path / "events.csv"
    write_event_log(twin.events, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "slot,emulated_cost,unsatisfied,action,repredictions"
    assert len(lines) == 1 + len(twin.events)
