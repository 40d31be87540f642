"""Slice digital twin: feature caches, decision emulation and adaptive re-slicing.

Within a window the twin compares each completed slot's observed feature
with its prediction, propagates the residual to the remaining slots with a
geometric discount, emulates the current reservation against the revised
demand, and re-predicts and re-solves for satellites that have not yet been
executed when the emulation shows an unmet threshold or a cheaper plan.
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .demand import DemandFeature
from .errors import Infeasible, NonPositiveMean
from .linkmodel import LinkParams
from .predictor import PredictedFeature, fit_distribution, multistep_predict
from .slicer import (SliceProblem, SlicingDecision, demand_threshold, point_threshold,
                     served_capacity, slot_costs, solve_or_best_effort, solve_window)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwinPolicy:
    alpha: float = 0.6
    gamma: float = 0.9
    reslice: bool = True
    dispersion_tolerance: float = 0.2
    # re-solve must beat the emulated cost by this relative margin to count as cheaper
    reslice_margin: float = 0.02

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


class FeatureCache:
    """Observed features (bounded history) and predictions for the open window.

    ``predicted`` maps window-local slot index to :class:`PredictedFeature`
    and always covers exactly the window's not-yet-observed slots.
    """

    def __init__(self, history=(), max_history: int = 256):
        self.historical = deque(maxlen=max_history)
        for h in history:
            self.push(h)
        self.predicted: dict = {}
        self.last_observed: Optional[int] = None
        self.residual = None

    def push(self, feature) -> None:
        if not isinstance(feature, DemandFeature):
            feature = DemandFeature(float(feature[0]), float(max(feature[1], 0.0)))
        self.historical.append(feature)

    def history_array(self, k: int) -> np.ndarray:
        rows = [f.as_array() for f in list(self.historical)[-k:]]
        return np.array(rows)

    def start_window(self, predictions) -> None:
        self.predicted = dict(enumerate(predictions))
        self.last_observed = None
        self.residual = None


def revise_features(cache: FeatureCache, actual: DemandFeature, t_obs: int, alpha: float) -> dict:
    """Shift remaining predictions by ``alpha**(t - t_obs)`` times the residual at ``t_obs``.

    Repeated calls for the same ``t_obs`` are no-ops.
    """
    if cache.last_observed == t_obs:
        return cache.predicted
    pred = cache.predicted.pop(t_obs, None)
    cache.last_observed = t_obs
    if pred is None:
        return cache.predicted
    dm = actual.mean - pred.mean
    dv = actual.variance - pred.variance
    cache.residual = (dm, dv)
    if dm == 0 and dv == 0:
        return cache.predicted
    for t in sorted(cache.predicted):
        if t > t_obs:
            w = alpha ** (t - t_obs)
            cache.predicted[t] = cache.predicted[t].shifted(w * dm, w * dv)
    return cache.predicted


@dataclass
class EmulationReport:
    cost: float
    satisfied: np.ndarray
    unexecuted_remaining: bool
    slots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def thresholds_from_predictions(preds, theta: float, gamma: Optional[float],
                                dispersion_tolerance: float = 0.2) -> np.ndarray:
    """Demand thresholds for predicted features (``gamma=None``: no uncertainty margin)."""
    out = []
    for pf in preds:
        try:
            dist = fit_distribution(pf, dispersion_tolerance)
        except NonPositiveMean:
            out.append(0.0)
            continue
        th = point_threshold(dist, theta) if gamma is None else demand_threshold(dist, theta, gamma)
        out.append(max(th, 0.0))
    return np.array(out)


def _planned_fractions(decision: SlicingDecision) -> np.ndarray:
    # executed satellites keep their locked value; the rest will execute their candidate
    return np.where(decision.locked, decision.executed, decision.candidate)


def emulate(decision: SlicingDecision, visible: np.ndarray, cap: np.ndarray, prop: np.ndarray,
            revised: dict, link: LinkParams, beta_res: float, beta_delay: float, gamma: float,
            dispersion_tolerance: float = 0.2) -> EmulationReport:
    """Cost and threshold satisfaction of ``decision`` over the slots in ``revised``."""
    slots = np.array(sorted(revised), dtype=int)
    unexecuted = bool(np.any(~decision.locked & visible[:, slots].any(axis=1))) if len(slots) else False
    if len(slots) == 0:
        return EmulationReport(0.0, np.zeros(0, dtype=bool), False, slots)
    b = _planned_fractions(decision)
    vis, K, P = visible[:, slots], cap[:, slots], prop[:, slots]
    res, delay = slot_costs(b, vis, K, P, link)
    cost = float(np.sum(beta_res * res + beta_delay * delay))
    th = thresholds_from_predictions([revised[t] for t in slots], link.qos_exponent, gamma,
                                     dispersion_tolerance)
    served = served_capacity(b, vis, K)
    return EmulationReport(cost, served >= th, unexecuted, slots)


def remaining_cost(decision: SlicingDecision, visible, cap, prop, slots, link, beta_res, beta_delay) -> float:
    b = _planned_fractions(decision)
    res, delay = slot_costs(b, visible[:, slots], cap[:, slots], prop[:, slots], link)
    return float(np.sum(beta_res * res + beta_delay * delay))


def merge_decision(base: SlicingDecision, update: SlicingDecision) -> SlicingDecision:
    """Take candidates of unexecuted satellites from ``update``; locked ones stay bit-identical."""
    keep = base.locked
    return replace(
        base,
        candidate=np.where(keep, base.candidate, update.candidate),
        active=np.where(keep, base.active, update.active).astype(np.int8),
        objective=update.objective,
        infeasible=update.infeasible,
    )


@dataclass
class WindowContext:
    """Everything the twin needs about the open window."""

    sat_ids: np.ndarray
    visible: np.ndarray
    distance: np.ndarray
    cap: np.ndarray
    prop: np.ndarray
    link: LinkParams
    beta_res: float
    beta_delay: float
    window: int = 0
    big_m: float = 1e9
    exact_limit: int = 12

    def problem(self, slots, thresholds, gamma, locked) -> SliceProblem:
        slots = np.asarray(slots, dtype=int)
        return SliceProblem(self.sat_ids, self.visible[:, slots], self.distance[:, slots], thresholds,
                            self.link, self.beta_res, self.beta_delay, gamma, self.big_m,
                            locked, self.window, int(slots[0]) if len(slots) else 0)


KEEP = "keep"
RESLICE = "reslice"


def maybe_reslice(report: EmulationReport, cache: FeatureCache, model, ctx: WindowContext,
                  decision: SlicingDecision, t: int, policy: TwinPolicy, mc_samples: int = 30,
                  seed=0):
    """Decide after slot ``t`` whether to re-predict and re-slice.

    Returns ``(action, decision, predictions)`` where action is ``"keep"`` or
    ``"reslice"``; on keep the inputs are returned unchanged.
    """
    if not policy.reslice or not report.unexecuted_remaining or len(report.slots) == 0:
        return KEEP, decision, None
    slots = report.slots
    theta = ctx.link.qos_exponent
    trigger = not bool(report.satisfied.all())
    if not trigger:
        th = thresholds_from_predictions([cache.predicted[s] for s in slots], theta, policy.gamma,
                                         policy.dispersion_tolerance)
        try:
            alt = solve_window(ctx.problem(slots, th, policy.gamma, decision.locked_map()),
                               exact_limit=ctx.exact_limit)
        except Infeasible:
            alt = None
        if alt is not None:
            alt_cost = remaining_cost(merge_decision(decision, alt), ctx.visible, ctx.cap, ctx.prop,
                                      slots, ctx.link, ctx.beta_res, ctx.beta_delay)
            trigger = alt_cost < report.cost * (1.0 - policy.reslice_margin)
    if not trigger:
        return KEEP, decision, None

    hist = cache.history_array(model.history_length)
    preds = multistep_predict(model, hist, len(slots), mc_samples=mc_samples, seed=seed,
                              first_slot=int(slots[0]))
    th = thresholds_from_predictions(preds, theta, policy.gamma, policy.dispersion_tolerance)
    new = solve_or_best_effort(ctx.problem(slots, th, policy.gamma, decision.locked_map()),
                               exact_limit=ctx.exact_limit)
    cache.predicted = {int(s): p for s, p in zip(slots, preds)}
    return RESLICE, merge_decision(decision, new), preds


class SliceTwin:
    """Per-window driver of revise -> emulate -> maybe_reslice with an event log."""

    def __init__(self, model, ctx: WindowContext, policy: TwinPolicy, cache: FeatureCache,
                 mc_samples: int = 30, seed_fn: Callable = None):
        self.model = model
        self.ctx = ctx
        self.policy = policy
        self.cache = cache
        self.mc_samples = mc_samples
        self.seed_fn = seed_fn or (lambda t: t)
        self.repredictions = 0
        self.events = []

    def observe(self, t: int, actual: DemandFeature, decision: SlicingDecision,
                global_slot: Optional[int] = None) -> SlicingDecision:
        self.cache.push(actual)
        revise_features(self.cache, actual, t, self.policy.alpha)
        report = emulate(decision, self.ctx.visible, self.ctx.cap, self.ctx.prop, self.cache.predicted,
                         self.ctx.link, self.ctx.beta_res, self.ctx.beta_delay, self.policy.gamma,
                         self.policy.dispersion_tolerance)
        action, decision, _ = maybe_reslice(report, self.cache, self.model, self.ctx, decision, t,
                                            self.policy, self.mc_samples, self.seed_fn(t))
        if action == RESLICE:
            self.repredictions += 1
        self.events.append({
            "slot": t if global_slot is None else global_slot,
            "emulated_cost": report.cost,
            "unsatisfied": int((~report.satisfied).sum()),
            "action": action,
            "repredictions": self.repredictions,
        })
        return decision


def write_event_log(events, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", "emulated_cost", "unsatisfied", "action", "repredictions"])
        for e in events:
            writer.writerow([e["slot"], repr(float(e["emulated_cost"])), e["unsatisfied"], e["action"],
                             e["repredictions"]])
