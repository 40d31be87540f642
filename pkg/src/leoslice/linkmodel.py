"""Link-level QoS algebra: channel gain, service rate, delay bounds and the
effective capacity / effective bandwidth pair.

Rates are in packets per second and the QoS exponent ``theta`` is per packet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, EffectiveBandwidthOverflow, NonPositiveDistance, ZeroRate

LIGHT_SPEED_KM_S = 299792.458


def _default_noise_power(tx_power=10.0, antenna_gain=1e5, pathloss_exp=2.5,
                         reference_km=550.0, spectral_eff=10.0):
    # noise such that a satellite at the reference range gets log2(1 + SNR) = spectral_eff
    gain = (reference_km * 1e3) ** (-pathloss_exp)
    return tx_power * antenna_gain * gain / (2.0**spectral_eff - 1.0)


@dataclass(frozen=True)
class LinkParams:
    bandwidth: float = 500e6             # Hz per satellite
    packet_size: float = 8e7             # bits (10 MB)
    tx_power: float = 10.0               # W (10 dBW)
    noise_power: float = _default_noise_power()
    pathloss_exp: float = 2.5
    antenna_gain: float = 1e5            # 50 dBi, linear
    qos_exponent: float = 0.05           # per packet
    delay_violation_target: float = 0.05
    light_speed: float = LIGHT_SPEED_KM_S

    def __post_init__(self):
        for name in ("bandwidth", "packet_size", "tx_power", "noise_power",
                     "pathloss_exp", "qos_exponent"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.delay_violation_target < 1:
            raise ConfigError("delay_violation_target must lie in (0, 1)")

    @property
    def queue_constant(self) -> float:
        """``-ln(eps) / theta``: the queue delay bound is this divided by the rate."""
        return -np.log(self.delay_violation_target) / self.qos_exponent


@dataclass(frozen=True)
class Poisson:
    intensity: float

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError("Poisson intensity must be positive")

    @property
    def mean(self):
        return self.intensity


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be non-negative")


@dataclass(frozen=True)
class Empirical:
    samples: tuple

    def __init__(self, samples):
        arr = tuple(float(x) for x in np.ravel(samples))
        if not arr:
            raise ValueError("Empirical demand needs at least one sample")
        object.__setattr__(self, "samples", arr)

    @property
    def mean(self):
        return float(np.mean(self.samples))


DemandModel = Union[Poisson, Gaussian, Empirical]


def channel_gain(d_km, pathloss_exp: float):
    """Power-law channel gain ``d^-delta`` with ``d`` converted to meters."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDistance(f"distance must be positive, got {d_km!r}")
    g = (d * 1e3) ** (-pathloss_exp)
    return float(g) if g.ndim == 0 else g


def spectral_efficiency(d_km, params: LinkParams):
    """``log2(1 + P G h / sigma^2)`` in bits/s/Hz."""
    snr = params.tx_power * params.antenna_gain * channel_gain(d_km, params.pathloss_exp) / params.noise_power
    return np.log2(1.0 + snr)


def full_rate(d_km, params: LinkParams):
    """Service rate (packets/s) of a satellite reserving its whole bandwidth."""
    return params.bandwidth / params.packet_size * spectral_efficiency(d_km, params)


def rate(a, b, params: LinkParams, d_km):
    """Reserved service rate ``a * b * B / kappa * log2(1 + SNR)``.

    Zero whenever the satellite is not visible or reserves nothing; the
    distance is not evaluated in that case so placeholder values are fine.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((b < 0) | (b > 1)):
        raise ValueError("reserved fraction must lie in [0, 1]")
    on = (a * b) > 0
    d = np.where(on, d_km, 1.0)
    r = np.where(on, a * b * full_rate(d, params), 0.0)
    return float(r) if r.ndim == 0 else r


def effective_capacity(R, theta: float = None):
    """Effective capacity of a constant-rate server; equals the rate itself."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("rate must be non-negative")
    return float(R) if R.ndim == 0 else R.copy()


def queue_delay_bound(R, theta: float, eps: float):
    """``-ln(eps) / (theta * R)``: delay exceeded with probability about ``eps``."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ZeroRate("queue delay bound is undefined at zero rate")
    out = -np.log(eps) / (theta * R)
    return float(out) if out.ndim == 0 else out


def total_delay(a, b, params: LinkParams, d_km, theta: float = None, eps: float = None):
    """Queue bound plus propagation delay, or 0 for a link that carries nothing."""
    theta = params.qos_exponent if theta is None else theta
    eps = params.delay_violation_target if eps is None else eps
    R = np.asarray(rate(a, b, params, d_km), dtype=float)
    on = R > 0
    safe = np.where(on, R, 1.0)
    d = np.where(on, d_km, 0.0)
    out = np.where(on, -np.log(eps) / (theta * safe) + d / params.light_speed, 0.0)
    return float(out) if out.ndim == 0 else out


def effective_bandwidth(model: DemandModel, theta: float) -> float:
    """Minimum constant service rate ``(1/theta) ln E[exp(theta * l)]``."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if isinstance(model, Poisson):
        return float(model.intensity * np.expm1(theta) / theta)
    if isinstance(model, Gaussian):
        return float(model.mean + 0.5 * model.variance * theta)
    if isinstance(model, Empirical):
        return empirical_effective_bandwidth(model.samples, theta)
    raise TypeError(f"unsupported demand model {type(model).__name__}")


def empirical_effective_bandwidth(samples: Sequence[float], theta: float) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    # centred on the mean so rounding is not amplified by 1/theta near theta -> 0
    with np.errstate(over="ignore", invalid="ignore"):
        mu = x.mean()
        z = theta * (x - mu)
        if np.max(np.abs(z)) < 1.0:
            val = mu + np.log1p(np.mean(np.expm1(z))) / theta
        else:
            val = mu + (logsumexp(z) - np.log(x.size)) / theta
    if not np.isfinite(val):
        raise EffectiveBandwidthOverflow(f"effective bandwidth not representable at theta={theta}")
    # guard the theta -> 0 rounding floor: the result never drops below the sample mean
    return float(max(val, mu))
