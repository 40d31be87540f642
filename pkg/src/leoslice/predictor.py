"""Bayesian LSTM demand-feature predictor and the demand-distribution fitter.

All weights of a single-layer LSTM and its linear Gaussian output head carry
a factorized Gaussian posterior ``N(mu, exp(logstd)^2)`` trained with
Bayes-by-backprop: closed-form Gaussian KL to a zero-mean prior plus a
reparameterized Monte-Carlo negative log-likelihood. Forward and backward
passes are written out in numpy and vectorized over Monte-Carlo samples.

Inputs and outputs are slot features ``(mean, variance)`` of per-second
demand, normalized with statistics stored in the model.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import NonFiniteLoss, NonPositiveMean

N_FEATURES = 2
PARAM_NAMES = ("Wx", "Wh", "b", "Wo", "bo")
LOG2PI = np.log(2 * np.pi)


@dataclass
class BnnModel:
    hidden_size: int
    history_length: int
    prior_std: float
    mu: dict
    logstd: dict
    feat_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    feat_scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))

    def copy(self) -> "BnnModel":
        return copy.deepcopy(self)

    def point_estimate(self) -> "BnnModel":
        """Copy with every weight std forced to zero (a plain LSTM)."""
        m = self.copy()
        m.logstd = {k: np.full_like(v, -np.inf) for k, v in m.logstd.items()}
        return m

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.mu.values())

    def normalize(self, features):
        return (np.asarray(features, dtype=float) - self.feat_mean) / self.feat_scale

    def denormalize(self, z):
        return self.feat_mean + self.feat_scale * np.asarray(z, dtype=float)

    def save(self, path) -> None:
        """Write a JSON checkpoint: one record per layer plus normalization stats."""
        layers = []
        for name in PARAM_NAMES:
            layers.append({
                "name": name,
                "shape": list(self.mu[name].shape),
                "mean": self.mu[name].ravel().tolist(),
                "log_std": [None if not np.isfinite(x) else float(x)
                            for x in self.logstd[name].ravel()],
            })
        doc = {
            "format": "leoslice-bnn/1",
            "hidden_size": self.hidden_size,
            "history_length": self.history_length,
            "prior_std": self.prior_std,
            "feature_mean": self.feat_mean.tolist(),
            "feature_scale": self.feat_scale.tolist(),
            "layers": layers,
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BnnModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        mu, logstd = {}, {}
        for layer in doc["layers"]:
            shape = tuple(layer["shape"])
            mu[layer["name"]] = np.array(layer["mean"], dtype=float).reshape(shape)
            ls = [-np.inf if x is None else x for x in layer["log_std"]]
            logstd[layer["name"]] = np.array(ls, dtype=float).reshape(shape)
        return cls(doc["hidden_size"], doc["history_length"], doc["prior_std"], mu, logstd,
                   np.array(doc["feature_mean"]), np.array(doc["feature_scale"]))


@dataclass
class TrainingSet:
    X: np.ndarray  # (n, K, 2) normalized history windows
    y: np.ndarray  # (n, 2) normalized next-slot features

    def __len__(self):
        return self.X.shape[0]


@dataclass(frozen=True)
class PredictedFeature:
    """Predicted slot feature with its spread across posterior samples.

    ``mean_std``/``variance_std`` are the standard deviations of the
    predicted components over weight samples. ``mean_noise``/``variance_noise``
    are the learned observation-noise standard deviations averaged over the
    same samples; they enter predictive intervals but not the spread.
    """

    mean: float
    variance: float
    mean_std: float = 0.0
    variance_std: float = 0.0
    mean_noise: float = 0.0
    variance_noise: float = 0.0
    slot: Optional[int] = None

    def shifted(self, d_mean: float, d_variance: float) -> "PredictedFeature":
        return PredictedFeature(self.mean + d_mean, max(self.variance + d_variance, 0.0),
                                self.mean_std, self.variance_std, self.mean_noise,
                                self.variance_noise, self.slot)

    def interval(self, level: float = 0.9) -> tuple[float, float]:
        """Central predictive interval for the slot mean."""
        z = norm.ppf(0.5 + level / 2)
        s = np.hypot(self.mean_std, self.mean_noise)
        return self.mean - z * s, self.mean + z * s


# ---------------------------------------------------------------- distributions

@dataclass(frozen=True)
class PoissonFit:
    """Poisson demand whose intensity is itself ``N(intensity, intensity_std^2)``."""

    intensity: float
    intensity_std: float = 0.0

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.intensity_std < 0:
            raise ValueError("intensity_std must be non-negative")


@dataclass(frozen=True)
class GaussianFit:
    """Gaussian demand with uncertain mean and variance (both Gaussian)."""

    mean_mean: float
    mean_std: float
    var_mean: float
    var_std: float

    def __post_init__(self):
        if min(self.mean_std, self.var_std, self.var_mean) < 0:
            raise ValueError("spreads and variance must be non-negative")


FittedDemandDistribution = Union[PoissonFit, GaussianFit]


def fit_distribution(pf: PredictedFeature, dispersion_tolerance: float = 0.2,
                     ) -> FittedDemandDistribution:
    """Classify a predicted feature as Poisson (index of dispersion near 1) or Gaussian."""
    if not pf.mean > 0:
        raise NonPositiveMean(f"predicted mean must be positive, got {pf.mean}")
    if abs(pf.variance / pf.mean - 1.0) <= dispersion_tolerance:
        return PoissonFit(pf.mean, pf.mean_std)
    return GaussianFit(pf.mean, pf.mean_std, max(pf.variance, 0.0), pf.variance_std)


# ---------------------------------------------------------------------- network

def init_model(hidden_size: int = 16, history_length: int = 10, prior_std: float = 1.0,
               init_std: float = 1e-2, seed=0) -> BnnModel:
    rng = np.random.default_rng(seed)
    H, D = hidden_size, N_FEATURES
    shapes = {"Wx": (D, 4 * H), "Wh": (H, 4 * H), "b": (4 * H,), "Wo": (H, 2 * D), "bo": (2 * D,)}
    mu = {
        "Wx": rng.normal(0, 1 / np.sqrt(D), shapes["Wx"]),
        "Wh": rng.normal(0, 1 / np.sqrt(H), shapes["Wh"]),
        "b": np.zeros(4 * H),
        "Wo": rng.normal(0, 1 / np.sqrt(H), shapes["Wo"]) * 0.5,
        "bo": np.zeros(2 * D),
    }
    mu["b"][H:2 * H] = 1.0  # forget gate starts open
    logstd = {k: np.full(s, np.log(init_std)) for k, s in shapes.items()}
    return BnnModel(H, history_length, prior_std, mu, logstd)


def _sample_weights(model: BnnModel, eps: dict) -> dict:
    out = {}
    for k in PARAM_NAMES:
        std = np.exp(model.logstd[k])
        out[k] = model.mu[k][None] + std[None] * eps[k]
    return out


def _draw_eps(model: BnnModel, n_samples: int, rng) -> dict:
    return {k: rng.standard_normal((n_samples,) + model.mu[k].shape) for k in PARAM_NAMES}


def _forward(W: dict, X: np.ndarray, H: int):
    """Run the sampled networks ``W`` (leading axis S) on inputs ``X`` (N, K, D)."""
    S = W["Wx"].shape[0]
    N, K, _ = X.shape
    h = np.zeros((S, N, H))
    c = np.zeros((S, N, H))
    cache = []
    for k in range(K):
        z = (np.einsum("nd,sdg->sng", X[:, k], W["Wx"])
             + np.einsum("snh,shg->sng", h, W["Wh"]) + W["b"][:, None, :])
        i = expit(z[..., :H])
        f = expit(z[..., H:2 * H])
        o = expit(z[..., 2 * H:3 * H])
        g = np.tanh(z[..., 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((h, c, i, f, o, g, tc))
        h, c = o * tc, c_new
    out = np.einsum("snh,shj->snj", h, W["Wo"]) + W["bo"][:, None, :]
    return out, cache, h


def _backward(W: dict, X: np.ndarray, H: int, cache, h_last, d_out) -> dict:
    K = X.shape[1]
    grads = {
        "Wo": np.einsum("snh,snj->shj", h_last, d_out),
        "bo": d_out.sum(axis=1),
        "Wx": np.zeros_like(W["Wx"]),
        "Wh": np.zeros_like(W["Wh"]),
        "b": np.zeros_like(W["b"]),
    }
    dh = np.einsum("snj,shj->snh", d_out, W["Wo"])
    dc = np.zeros_like(dh)
    for k in reversed(range(K)):
        h_prev, c_prev, i, f, o, g, tc = cache[k]
        dct = dc + dh * o * (1 - tc * tc)
        dz = np.concatenate([
            dct * g * i * (1 - i),
            dct * c_prev * f * (1 - f),
            dh * tc * o * (1 - o),
            dct * i * (1 - g * g),
        ], axis=-1)
        grads["Wx"] += np.einsum("nd,sng->sdg", X[:, k], dz)
        grads["Wh"] += np.einsum("snh,sng->shg", h_prev, dz)
        grads["b"] += dz.sum(axis=1)
        dh = np.einsum("sng,shg->snh", dz, W["Wh"])
        dc = dct * f
    return grads


def kl_divergence(model: BnnModel) -> float:
    """Closed-form KL of the factorized posterior from ``N(0, prior_std^2)``."""
    sp = model.prior_std
    total = 0.0
    for k in PARAM_NAMES:
        m, ls = model.mu[k], model.logstd[k]
        s2 = np.exp(2 * ls)
        total += np.sum(np.log(sp) - ls + (s2 + m * m) / (2 * sp * sp) - 0.5)
    return float(total)


def gaussian_kl(m, s, prior_std=1.0):
    """KL(N(m, s^2) || N(0, prior_std^2)) elementwise."""
    m, s = np.asarray(m, float), np.asarray(s, float)
    return np.log(prior_std / s) + (s * s + m * m) / (2 * prior_std**2) - 0.5


def elbo_loss(model: BnnModel, batch: TrainingSet, mc_samples: int = 1, seed=0,
              kl_weight: float = 1.0, eps: Optional[dict] = None):
    """Negative ELBO and its gradient with respect to every ``mu``/``logstd``.

    Returns ``(loss, grad_mu, grad_logstd)``; ``loss = kl_weight * KL +
    mean over samples of the summed Gaussian NLL``. Passing ``eps`` fixes the
    reparameterization noise (shape ``(mc_samples,) + param shape``).
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    if eps is None:
        eps = _draw_eps(model, mc_samples, np.random.default_rng(seed))
    S = next(iter(eps.values())).shape[0]
    H = model.hidden_size
    W = _sample_weights(model, eps)
    out, cache, h_last = _forward(W, batch.X, H)
    mean, logvar = out[..., :N_FEATURES], out[..., N_FEATURES:]
    resid = batch.y[None] - mean
    inv_var = np.exp(-logvar)
    nll = 0.5 * np.sum(LOG2PI + logvar + resid * resid * inv_var) / S
    d_out = np.concatenate([-resid * inv_var, 0.5 * (1 - resid * resid * inv_var)], axis=-1) / S
    gW = _backward(W, batch.X, H, cache, h_last, d_out)

    kl = kl_divergence(model)
    sp2 = model.prior_std**2
    g_mu, g_ls = {}, {}
    for k in PARAM_NAMES:
        std = np.exp(model.logstd[k])
        g_mu[k] = gW[k].sum(axis=0) + kl_weight * model.mu[k] / sp2
        g_ls[k] = (gW[k] * eps[k]).sum(axis=0) * std + kl_weight * (std * std / sp2 - 1.0)
    loss = kl_weight * kl + nll
    if not np.isfinite(loss):
        raise NonFiniteLoss("ELBO became non-finite; lower the learning rate")
    return float(loss), g_mu, g_ls


# --------------------------------------------------------------------- training

def make_training_set(features: np.ndarray, history_length: int, model: BnnModel) -> TrainingSet:
    """Sliding windows of ``history_length`` consecutive slots and their successor."""
    z = model.normalize(features)
    K = history_length
    n = len(z) - K
    if n < 1:
        raise ValueError(f"need more than {K} slots of features, got {len(z)}")
    X = np.stack([z[i:i + K] for i in range(n)])
    return TrainingSet(X, z[K:])


def set_normalization(model: BnnModel, features: np.ndarray) -> BnnModel:
    m = model.copy()
    f = np.asarray(features, dtype=float)
    m.feat_mean = f.mean(axis=0)
    m.feat_scale = np.where(f.std(axis=0) > 1e-9, f.std(axis=0), 1.0)
    return m


@dataclass
class TrainResult:
    model: BnnModel
    losses: list
    converged: bool


def train(model: BnnModel, data: TrainingSet, epochs: int = 300, learning_rate: float = 0.01,
          seed=0, mc_samples: int = 2, kl_weight: float = 1.0, momentum: float = 0.9,
          clip_norm: float = 5.0) -> TrainResult:
    """Full-batch momentum gradient descent on the per-example negative ELBO.

    The objective is divided by the batch size so the learning rate does not
    depend on how many windows are available. ``converged`` is False when the
    final loss exceeds the initial one (reported, not raised).
    """
    if len(data) < 1:
        raise ValueError("empty training set")
    m = model.copy()
    rng = np.random.default_rng(seed)
    n = len(data)
    vel_mu = {k: np.zeros_like(v) for k, v in m.mu.items()}
    vel_ls = {k: np.zeros_like(v) for k, v in m.logstd.items()}
    losses = []
    for _ in range(epochs):
        eps = _draw_eps(m, mc_samples, rng)
        loss, g_mu, g_ls = elbo_loss(m, data, kl_weight=kl_weight, eps=eps)
        losses.append(loss / n)
        gnorm = np.sqrt(sum(np.sum(g * g) for g in g_mu.values())
                        + sum(np.sum(g * g) for g in g_ls.values())) / n
        scale = 1.0 / n if gnorm <= clip_norm else clip_norm / (gnorm * n)
        for k in PARAM_NAMES:
            vel_mu[k] = momentum * vel_mu[k] - learning_rate * scale * g_mu[k]
            vel_ls[k] = momentum * vel_ls[k] - learning_rate * scale * g_ls[k]
            m.mu[k] = m.mu[k] + vel_mu[k]
            m.logstd[k] = m.logstd[k] + vel_ls[k]
    converged = True
    if epochs:
        final = elbo_loss(m, data, kl_weight=kl_weight, eps=_draw_eps(m, 8, np.random.default_rng(seed)))[0] / n
        start = elbo_loss(model, data, kl_weight=kl_weight, eps=_draw_eps(m, 8, np.random.default_rng(seed)))[0] / n
        converged = final <= start
    return TrainResult(m, losses, converged)


def fit_predictor(features: np.ndarray, hidden_size: int = 16, history_length: int = 10,
                  prior_std: float = 0.5, epochs: int = 500, learning_rate: float = 0.05,
                  kl_weight: float = 1.0, seed=0, mc_samples: int = 1) -> TrainResult:
    """Initialize, normalize on ``features`` and train a fresh model."""
    ss = np.random.SeedSequence(seed)
    init_seed, train_seed = ss.spawn(2)
    model = init_model(hidden_size, history_length, prior_std, seed=init_seed)
    model = set_normalization(model, features)
    data = make_training_set(features, history_length, model)
    return train(model, data, epochs, learning_rate, train_seed, mc_samples, kl_weight)


# ------------------------------------------------------------------- prediction

def _history_array(history) -> np.ndarray:
    rows = [h.as_array() if hasattr(h, "as_array") else
            np.array([h.mean, h.variance]) if hasattr(h, "variance") else np.asarray(h, float)
            for h in history]
    return np.asarray(rows, dtype=float).reshape(len(rows), N_FEATURES)


def _spread(x: np.ndarray) -> np.ndarray:
    # std is shift invariant; subtracting the first pass makes identical passes give exactly 0
    return np.std(x - x[:1], axis=0)


def predict(model: BnnModel, history, mc_samples: int = 30, seed=0, slot=None,
            eps: Optional[dict] = None) -> PredictedFeature:
    """One-slot-ahead feature prediction from the last ``history_length`` slots."""
    hist = _history_array(history)
    if hist.shape[0] != model.history_length:
        raise ValueError(f"history must hold {model.history_length} slots, got {hist.shape[0]}")
    if eps is None:
        eps = _draw_eps(model, mc_samples, np.random.default_rng(seed))
    W = _sample_weights(model, eps)
    out, _, _ = _forward(W, model.normalize(hist)[None], model.hidden_size)
    out = out[:, 0, :]
    mean = model.denormalize(out[:, :N_FEATURES])
    noise = model.feat_scale * np.sqrt(np.mean(np.exp(np.clip(out[:, N_FEATURES:], -30, 30)), axis=0))
    centre = mean.mean(axis=0)
    spread = _spread(mean)
    return PredictedFeature(float(centre[0]), float(max(centre[1], 0.0)), float(spread[0]),
                            float(spread[1]), float(noise[0]), float(noise[1]), slot)


def multistep_predict(model: BnnModel, history, steps: int, mc_samples: int = 30, seed=0,
                      first_slot: Optional[int] = None) -> list:
    """Autoregressive rollout feeding each averaged prediction back as history.

    The same posterior draws are used at every step, so ``steps=1`` equals
    :func:`predict` with the same seed.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    hist = list(_history_array(history)[-model.history_length:])
    eps = _draw_eps(model, mc_samples, np.random.default_rng(seed))
    out = []
    for j in range(steps):
        slot = None if first_slot is None else first_slot + j
        pf = predict(model, hist[-model.history_length:], eps=eps, slot=slot)
        out.append(pf)
        hist.append(np.array([pf.mean, pf.variance]))
    return out
