"""Time-slotted simulation of the four slicing schemes and their reporting.

Schemes
-------
``FRS``        plan once per window from a deterministic (zero-variance) LSTM,
               thresholds are the plain effective bandwidth.
``FDTRS``      plan once per window with the chance-constrained thresholds.
``ADTRS``      FDTRS plus the in-window twin loop (revise, emulate, re-slice).
``PerfectRS``  plan with the realized per-slot effective bandwidths.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import demand as dm
from .constellation import ConstellationConfig, GroundArea, build_schedule
from .errors import ConfigError
from .linkmodel import LinkParams, empirical_effective_bandwidth, full_rate
from .predictor import fit_predictor, multistep_predict
from .slicer import (SliceProblem, execute_on_coverage, served_capacity, slot_costs,
                     solve_or_best_effort)
from .twin import FeatureCache, SliceTwin, TwinPolicy, WindowContext, thresholds_from_predictions

log = logging.getLogger(__name__)

SCHEMES = ("FRS", "FDTRS", "ADTRS", "PerfectRS")


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class PredictorConfig:
    hidden_size: int = 16
    history_length: int = 10
    prior_std: float = 0.5
    epochs: int = 500
    learning_rate: float = 0.05
    kl_weight: float = 1.0
    train_mc_samples: int = 1
    mc_samples: int = 30
    train_slots: int = 60
    retrain_every: int = 1


@dataclass(frozen=True)
class DemandConfig:
    trace_path: Optional[str] = None
    regime: Optional[dict] = None
    warmup_slots: int = 60
    violation_reference: str = "effective_bandwidth"

    def __post_init__(self):
        if self.violation_reference not in ("effective_bandwidth", "mean"):
            raise ConfigError("violation_reference must be 'effective_bandwidth' or 'mean'")


@dataclass(frozen=True)
class SlicerConfig:
    exact_limit: int = 12
    big_m: float = 1e9
    dispersion_tolerance: float = 0.2
    reslice_margin: float = 0.02


@dataclass(frozen=True)
class Seeds:
    demand: int = 0
    training: int = 1
    prediction: int = 2


@dataclass(frozen=True)
class ScenarioConfig:
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    area: GroundArea = field(default_factory=GroundArea)
    link: LinkParams = field(default_factory=LinkParams)
    n_windows: int = 9
    window_length: int = 10
    slot_duration: int = 10
    beta_res: float = 1e-6
    beta_delay: float = 100.0
    gamma: float = 0.9
    alpha: float = 0.6
    scheme: str = "ADTRS"
    demand: DemandConfig = field(default_factory=DemandConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    slicer: SlicerConfig = field(default_factory=SlicerConfig)
    seeds: Seeds = field(default_factory=Seeds)

    def __post_init__(self):
        if self.window_length < 1 or self.n_windows < 1:
            raise ConfigError("n_windows and window_length must be >= 1")
        if not self.slot_duration > 0 or int(self.slot_duration) != self.slot_duration:
            raise ConfigError("slot_duration must be a positive whole number of seconds")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.demand.warmup_slots <= self.predictor.history_length:
            raise ConfigError("warmup_slots must exceed the predictor history length")

    @property
    def horizon_slots(self) -> int:
        return self.n_windows * self.window_length

    def with_(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {
    "constellation": ConstellationConfig,
    "area": GroundArea,
    "link": LinkParams,
    "demand": DemandConfig,
    "predictor": PredictorConfig,
    "slicer": SlicerConfig,
    "seeds": Seeds,
}
_TOP = ("n_windows", "window_length", "slot_duration", "beta_res", "beta_delay", "gamma", "alpha",
        "scheme")


def config_from_dict(doc: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
    doc = dict(doc or {})
    kw = {}
    for name, cls in _SECTIONS.items():
        section = doc.pop(name, None) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        try:
            kw[name] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    for section in ("horizon", "costs", "twin"):
        for k, v in (doc.pop(section, None) or {}).items():
            if k not in _TOP:
                raise ConfigError(f"unknown key {section}.{k}")
            kw[k] = v
    for k in list(doc):
        if k in _TOP:
            kw[k] = doc.pop(k)
    if doc:
        raise ConfigError(f"unknown config sections: {sorted(doc)}")
    d = kw["demand"]
    if d.trace_path and base_dir is not None and not Path(d.trace_path).is_absolute():
        kw["demand"] = dataclasses.replace(d, trace_path=str(Path(base_dir) / d.trace_path))
    if kw["demand"].trace_path and not Path(kw["demand"].trace_path).exists():
        raise ConfigError(f"trace file {kw['demand'].trace_path} does not exist")
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(doc, path.parent)


# ---------------------------------------------------------------------- reports

@dataclass
class SlotMetrics:
    slot: int
    window: int
    resource_hz: float
    delay_s: float
    violated: bool
    served: float
    reference: float
    active_satellites: int
    fractions: dict


@dataclass
class RunReport:
    scheme: str
    slots: list
    avg_resource_hz: float
    avg_delay_s: float
    violation_rate: float
    repredictions: int
    config_digest: str
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        doc = dict(doc)
        doc["slots"] = [SlotMetrics(**s) for s in doc["slots"]]
        return cls(**doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def scheme_label(scheme: str, gamma: float) -> str:
    return f"{scheme} {gamma:g}" if scheme in ("FDTRS", "ADTRS") else scheme


# ------------------------------------------------------------------- simulation

def load_trace(config: ScenarioConfig) -> dm.DemandTrace:
    d = config.demand
    if d.trace_path:
        trace = dm.ingest_csv(d.trace_path)
    else:
        spec = (dm.RegimeSpec.from_dict(d.regime) if d.regime else
                dm.default_regime(d.warmup_slots * config.slot_duration,
                                  config.horizon_slots * config.slot_duration))
        trace = dm.generate(spec, config.seeds.demand)
    need = (d.warmup_slots + config.horizon_slots) * config.slot_duration
    if trace.duration < need:
        raise ConfigError(f"demand trace covers {trace.duration} s, run needs {need} s")
    return trace


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class ModelCache(dict):
    """Trained predictors keyed by their training inputs; shareable across runs."""


def _window_model(config: ScenarioConfig, features: np.ndarray, start: int, w: int,
                  cache: Optional[ModelCache]):
    pc = config.predictor
    anchor = (w // pc.retrain_every) * pc.retrain_every
    s = config.demand.warmup_slots + anchor * config.window_length
    data = features[max(0, s - pc.train_slots):s]
    key = (hashlib.sha256(data.tobytes()).hexdigest(), dataclasses.astuple(pc),
           config.seeds.training, anchor)
    if cache is not None and key in cache:
        return cache[key]
    res = fit_predictor(data, pc.hidden_size, pc.history_length, pc.prior_std, pc.epochs,
                        pc.learning_rate, pc.kl_weight, seed=_seed(config.seeds.training, anchor),
                        mc_samples=pc.train_mc_samples)
    if not res.converged:
        log.warning("predictor for window %d did not reduce its loss", w)
    if cache is not None:
        cache[key] = res.model
    return res.model


def scheme_plan(scheme: str, ctx: WindowContext, model, history: np.ndarray, gamma: float,
                config: ScenarioConfig, actual_samples=None, seed=0):
    """Window-start plan for ``scheme``: returns ``(decision, predictions)``."""
    T = ctx.visible.shape[1]
    theta = ctx.link.qos_exponent
    eta = config.slicer.dispersion_tolerance
    preds = None
    if scheme == "PerfectRS":
        th = np.array([empirical_effective_bandwidth(x, theta) for x in actual_samples])
    elif scheme == "FRS":
        preds = multistep_predict(model.point_estimate(), history, T, mc_samples=1, seed=seed)
        th = thresholds_from_predictions(preds, theta, None, eta)
    elif scheme in ("FDTRS", "ADTRS"):
        preds = multistep_predict(model, history, T, mc_samples=config.predictor.mc_samples, seed=seed)
        th = thresholds_from_predictions(preds, theta, gamma, eta)
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    problem = ctx.problem(np.arange(T), th, gamma, {})
    return solve_or_best_effort(problem, exact_limit=ctx.exact_limit), preds


def run(config: ScenarioConfig, scheme: Optional[str] = None, gamma: Optional[float] = None,
        model_cache: Optional[ModelCache] = None, schedule=None, trace=None) -> RunReport:
    scheme = scheme or config.scheme
    gamma = config.gamma if gamma is None else gamma
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}")
    tau = int(config.slot_duration)
    T = config.window_length
    if schedule is None:
        schedule = build_schedule(config.constellation, config.area, config.horizon_slots, tau, T)
    if trace is None:
        trace = load_trace(config)
    features = dm.trace_features(trace, tau)
    warm = config.demand.warmup_slots
    K = config.predictor.history_length
    policy = TwinPolicy(config.alpha, gamma, scheme == "ADTRS", config.slicer.dispersion_tolerance,
                        config.slicer.reslice_margin)
    link = config.link

    slots, events = [], []
    repredictions = 0
    for w in range(config.n_windows):
        sat_ids, vis, dist = schedule.window(w)
        on = vis.astype(bool)
        cap = np.where(on, full_rate(np.where(on, dist, 1.0), link), 0.0)
        prop = np.where(on, dist / link.light_speed, 0.0)
        ctx = WindowContext(sat_ids, vis, dist, cap, prop, link, config.beta_res, config.beta_delay,
                            w, config.slicer.big_m, config.slicer.exact_limit)
        first = warm + w * T
        samples = [dm.slot_samples(trace, first + t, tau) for t in range(T)]
        history = features[first - K:first]
        model = None if scheme == "PerfectRS" else _window_model(config, features, first, w, model_cache)
        decision, preds = scheme_plan(scheme, ctx, model, history, gamma, config, samples,
                                      seed=_seed(config.seeds.prediction, w))
        twin = None
        if scheme == "ADTRS":
            cache = FeatureCache(features[first - config.predictor.train_slots:first])
            cache.start_window(preds)
            twin = SliceTwin(model, ctx, policy, cache, config.predictor.mc_samples,
                             seed_fn=lambda t, w=w: _seed(config.seeds.prediction, w, t + 1))
        for t in range(T):
            decision = execute_on_coverage(decision, vis, t)
            b = decision.executed
            res, delay = slot_costs(b, vis[:, t:t + 1], cap[:, t:t + 1], prop[:, t:t + 1], link)
            served = float(served_capacity(b, vis[:, t:t + 1], cap[:, t:t + 1])[0])
            x = samples[t]
            if config.demand.violation_reference == "mean":
                ref = float(np.mean(x))
            else:
                ref = empirical_effective_bandwidth(x, link.qos_exponent)
            active = (vis[:, t] > 0) & (b > 0)
            slots.append(SlotMetrics(
                slot=w * T + t, window=w, resource_hz=float(res[0]), delay_s=float(delay[0]),
                violated=bool(served < ref), served=served, reference=ref,
                active_satellites=int(active.sum()),
                fractions={str(int(s)): float(v) for s, v in zip(sat_ids, b) if v > 0},
            ))
            if twin is not None:
                actual = dm.extract_features(x, w * T + t)
                decision = twin.observe(t, actual, decision, global_slot=w * T + t)
        if twin is not None:
            repredictions += twin.repredictions
            events.extend(twin.events)

    n = len(slots)
    return RunReport(
        scheme=scheme_label(scheme, gamma),
        slots=slots,
        avg_resource_hz=float(np.mean([s.resource_hz for s in slots])),
        avg_delay_s=float(np.mean([s.delay_s for s in slots])),
        violation_rate=sum(s.violated for s in slots) / n,
        repredictions=repredictions,
        config_digest=config.digest(),
        events=events,
    )


def sweep_elevation(config: ScenarioConfig, angles, scheme: Optional[str] = None,
                    gamma: Optional[float] = None, model_cache: Optional[ModelCache] = None) -> list:
    """One run per minimum elevation angle, everything else (seeds included) fixed."""
    angles = list(angles)
    if not angles:
        raise ValueError("angles must be non-empty")
    cache = ModelCache() if model_cache is None else model_cache
    trace = load_trace(config)
    out = []
    for a in angles:
        cfg = config.with_(area=dataclasses.replace(config.area, min_elevation=float(a)))
        out.append(run(cfg, scheme, gamma, model_cache=cache, trace=trace))
    return out


SUMMARY_COLUMNS = ("scheme", "avg_resource_hz", "delay_cost_s", "violation_rate", "repredictions")


def summary_rows(reports) -> list:
    return [
        {"scheme": r.scheme, "avg_resource_hz": r.avg_resource_hz, "delay_cost_s": r.avg_delay_s,
         "violation_rate": r.violation_rate, "repredictions": r.repredictions}
        for r in reports
    ]


def format_table(reports) -> str:
    rows = summary_rows(reports)
    lines = [f"{'scheme':<14}{'avg resource':>16}{'delay cost':>12}{'violation':>11}{'re-pred':>9}"]
    for r in rows:
        lines.append(f"{r['scheme']:<14}{r['avg_resource_hz'] / 1e6:>12.1f} MHz{r['delay_cost_s']:>10.3f} s"
                     f"{100 * r['violation_rate']:>9.1f} %{r['repredictions']:>9d}")
    return "\n".join(lines)


def file_label(label: str) -> str:
    return label.replace(" ", "_").replace("/", "_")


def report(reports, out_dir=None) -> list:
    """Table-style summary rows; with ``out_dir`` also write summary and per-slot CSVs."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    rows = summary_rows(reports)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
        for r in reports:
            with open(out / f"slots_{file_label(r.scheme)}.csv", "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["slot", "window", "resource_hz", "delay_s", "violated", "served",
                             "reference", "active_satellites"])
                for s in r.slots:
                    wr.writerow([s.slot, s.window, repr(s.resource_hz), repr(s.delay_s), int(s.violated),
                                 repr(s.served), repr(s.reference), s.active_satellites])
    return rows
