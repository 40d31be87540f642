"""Walker-delta constellation propagation and ground-area coverage schedules.

Orbits are circular Keplerian on a spherical, rotating Earth. Positions are
returned in an Earth-fixed Cartesian frame (km) whose x axis points at
(lat 0, lon 0) and whose z axis is the rotation axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyCoverage

EARTH_RADIUS_KM = 6371.0
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s
MU_EARTH = 398600.4418  # km^3/s^2


@dataclass(frozen=True)
class ConstellationConfig:
    orbit_count: int = 72
    sats_per_orbit: int = 22
    phasing_factor: int = 17
    altitude: float = 550.0
    inclination: float = 53.0
    earth_radius: float = EARTH_RADIUS_KM
    earth_rotation_rate: float = EARTH_ROTATION_RATE
    gravitational_parameter: float = MU_EARTH
    epoch_raan_offset: float = 0.0

    def __post_init__(self):
        if self.orbit_count < 1 or self.sats_per_orbit < 1:
            raise ConfigError("orbit_count and sats_per_orbit must be >= 1")
        if not 0 <= self.phasing_factor < self.orbit_count:
            raise ConfigError("phasing_factor must lie in [0, orbit_count)")
        if self.altitude <= 0:
            raise ConfigError("altitude must be positive")
        if not 0 <= self.inclination <= 180:
            raise ConfigError("inclination must lie in [0, 180] degrees")

    @property
    def n_satellites(self) -> int:
        return self.orbit_count * self.sats_per_orbit

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def mean_motion(self) -> float:
        """Angular rate of every satellite along its orbit (rad/s)."""
        return float(np.sqrt(self.gravitational_parameter / self.orbit_radius**3))

    @property
    def period(self) -> float:
        return 2 * np.pi / self.mean_motion


@dataclass(frozen=True)
class GroundArea:
    lat_min: float = 30.0
    lat_max: float = 31.5
    lon_min: float = -84.0
    lon_max: float = -82.5
    min_elevation: float = 30.0

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise ConfigError("lat_min must be below lat_max")
        if not self.lon_min < self.lon_max:
            raise ConfigError("lon_min must be below lon_max")
        # above-zenith thresholds are accepted so callers can probe EmptyCoverage
        if self.min_elevation <= 0:
            raise ConfigError("min_elevation must be positive")

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.lat_min + self.lat_max), 0.5 * (self.lon_min + self.lon_max)

    def center_position(self, earth_radius: float = EARTH_RADIUS_KM) -> np.ndarray:
        lat, lon = np.radians(self.center)
        return earth_radius * np.array(
            [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)]
        )


@dataclass
class CoverageSchedule:
    """Per-slot visibility flags and slant ranges for every satellite.

    ``visible[s, g]`` and ``distance[s, g]`` are indexed by satellite id and
    global slot ``g = w * window_length + t``.
    """

    visible: np.ndarray
    distance: np.ndarray
    slot_duration: float
    window_length: int
    altitude: float
    sat_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.sat_ids is None:
            self.sat_ids = np.arange(self.visible.shape[0])

    @property
    def horizon(self) -> int:
        return self.visible.shape[1]

    @property
    def n_windows(self) -> int:
        return -(-self.horizon // self.window_length)

    def window_slice(self, w: int) -> slice:
        return slice(w * self.window_length, min((w + 1) * self.window_length, self.horizon))

    def serving_set(self, w: int) -> np.ndarray:
        """Satellite ids with at least one visible slot in window ``w``."""
        rows = self.visible[:, self.window_slice(w)].any(axis=1)
        return self.sat_ids[rows]

    def window(self, w: int, sats=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(sat_ids, visible, distance)`` restricted to window ``w``."""
        if sats is None:
            sats = self.serving_set(w)
        rows = np.searchsorted(self.sat_ids, sats)
        sl = self.window_slice(w)
        return np.asarray(sats), self.visible[rows, sl].copy(), self.distance[rows, sl].copy()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sat_id", "slot", "visible", "distance_km"])
            for i, sid in enumerate(self.sat_ids):
                for g in range(self.horizon):
                    writer.writerow(
                        [int(sid), g, int(self.visible[i, g]), repr(float(self.distance[i, g]))]
                    )


def _plane_geometry(config: ConstellationConfig):
    P, S, F = config.orbit_count, config.sats_per_orbit, config.phasing_factor
    plane = np.repeat(np.arange(P), S)
    index = np.tile(np.arange(S), P)
    raan = np.radians(config.epoch_raan_offset) + 2 * np.pi * plane / P
    phase0 = 2 * np.pi * index / S + 2 * np.pi * F * plane / (P * S)
    return raan, phase0


def propagate(config: ConstellationConfig, time) -> np.ndarray:
    """Earth-fixed positions (km) of all satellites at ``time`` seconds.

    ``time`` may be a scalar (result shape ``(n_sat, 3)``) or a 1-D array
    (result shape ``(n_sat, n_times, 3)``). Satellite id ``p * sats_per_orbit + k``
    is satellite ``k`` of plane ``p``.
    """
    t = np.asarray(time, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    scalar = t.ndim == 0
    t = np.atleast_1d(t)

    raan, phase0 = _plane_geometry(config)
    inc = np.radians(config.inclination)
    u = phase0[:, None] + config.mean_motion * t[None, :]
    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_o, sin_o = np.cos(raan)[:, None], np.sin(raan)[:, None]
    r = config.orbit_radius
    x = r * (cos_o * cos_u - sin_o * sin_u * np.cos(inc))
    y = r * (sin_o * cos_u + cos_o * sin_u * np.cos(inc))
    z = r * (sin_u * np.sin(inc)) * np.ones_like(cos_o)

    # inertial -> Earth-fixed: rotate by -omega_E * t about z
    ang = config.earth_rotation_rate * t[None, :]
    ca, sa = np.cos(ang), np.sin(ang)
    pos = np.stack([ca * x + sa * y, -sa * x + ca * y, z], axis=-1)
    return pos[:, 0, :] if scalar else pos


def elevation_and_range(sat_position, area: GroundArea, earth_radius: float = EARTH_RADIUS_KM):
    """Elevation angle (deg) and slant range (km) seen from the area center.

    Broadcasts over leading dimensions of ``sat_position`` (last axis = xyz).
    """
    sat_position = np.asarray(sat_position, dtype=float)
    ground = area.center_position(earth_radius)
    up = ground / np.linalg.norm(ground)
    los = sat_position - ground
    rng = np.linalg.norm(los, axis=-1)
    vert = los @ up
    horiz = np.linalg.norm(los - vert[..., None] * up, axis=-1)
    elev = np.degrees(np.arctan2(vert, horiz))
    if elev.ndim == 0:
        return float(elev), float(rng)
    return elev, rng


def slant_range_at_elevation(elevation_deg: float, altitude: float,
                             earth_radius: float = EARTH_RADIUS_KM) -> float:
    """Closed-form slant range to a satellite at the given elevation."""
    e = np.radians(elevation_deg)
    ratio = (earth_radius + altitude) / earth_radius
    return float(earth_radius * (np.sqrt(ratio**2 - np.cos(e) ** 2) - np.sin(e)))


def build_schedule(config: ConstellationConfig, area: GroundArea, horizon_slots: int,
                   slot_duration: float, window_length: int = 10,
                   start_time: float = 0.0) -> CoverageSchedule:
    """Sample every satellite at each slot midpoint and flag visibility."""
    if horizon_slots < 1:
        raise ValueError("horizon_slots must be >= 1")
    times = start_time + (np.arange(horizon_slots) + 0.5) * slot_duration
    pos = propagate(config, times)
    elev, rng = elevation_and_range(pos, area, config.earth_radius)
    visible = elev >= area.min_elevation
    if not visible.any():
        raise EmptyCoverage(
            f"no satellite reaches {area.min_elevation} deg elevation within "
            f"{horizon_slots} slots"
        )
    return CoverageSchedule(
        visible=visible.astype(np.int8),
        distance=rng,
        slot_duration=float(slot_duration),
        window_length=int(window_length),
        altitude=config.altitude,
    )


def read_schedule_csv(path, slot_duration: float, window_length: int, altitude: float):
    """Inverse of :meth:`CoverageSchedule.to_csv`."""
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["sat_id"]), int(rec["slot"]), int(rec["visible"]),
                         float(rec["distance_km"])))
    ids = np.array(sorted({r[0] for r in rows}))
    horizon = max(r[1] for r in rows) + 1
    visible = np.zeros((len(ids), horizon), dtype=np.int8)
    distance = np.zeros((len(ids), horizon))
    pos = {sid: i for i, sid in enumerate(ids)}
    for sid, g, v, d in rows:
        visible[pos[sid], g] = v
        distance[pos[sid], g] = d
    return CoverageSchedule(visible, distance, slot_duration, window_length, altitude, ids)
