"""
Who is overhead? Coverage of a small ground area
================================================

A 72 x 22 Walker-delta shell at 550 km is propagated over the 15-minute
horizon and every satellite is tested against a 30 degree elevation mask.
"""

import numpy as np

from leoslice.constellation import (ConstellationConfig, GroundArea, build_schedule,
                                    slant_range_at_elevation)

cfg = ConstellationConfig()
area = GroundArea()
print(f"orbital period {cfg.period:.1f} s, {cfg.orbit_count * cfg.sats_per_orbit} satellites")

# The elevation mask bounds the slant range: overhead is 550 km, at the mask it is longer
for e in (90, 40, 30, 20, 10):
    print(f"  elevation {e:>2} deg -> slant range {slant_range_at_elevation(e, cfg.altitude):7.1f} km")

# One coverage row per satellite, one column per 10 s slot
sched = build_schedule(cfg, area, 90, 10.0, 10)
per_slot = sched.visible.sum(axis=0)
print(f"\nvisible satellites per slot: min {per_slot.min()}, max {per_slot.max()}")

# A window's candidate set S_w is every satellite seen at least once in it
for w in range(9):
    ids, vis, dist = sched.window(w)
    d = dist[vis > 0]
    print(f"  window {w}: {len(ids):2d} candidates, distance {d.min():6.1f}-{d.max():6.1f} km")

# Lowering the mask widens every window's candidate set
for e in (10, 20, 30, 40):
    s = build_schedule(cfg, GroundArea(min_elevation=e), 90, 10.0, 10)
    print(f"mask {e} deg: mean candidates per window "
          f"{np.mean([len(s.serving_set(w)) for w in range(9)]):.1f}")
