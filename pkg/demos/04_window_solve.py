"""
Slicing one window
==================

Given the candidate satellites of a window and per-slot thresholds, pick
which satellites to activate and how much of each to reserve. The delay
weight decides between one well-placed satellite and spreading the load.
"""

import numpy as np

from leoslice.constellation import ConstellationConfig, GroundArea, build_schedule
from leoslice.linkmodel import LinkParams, full_rate
from leoslice.slicer import SliceProblem, execute_on_coverage, solve_window

link = LinkParams()
sched = build_schedule(ConstellationConfig(), GroundArea(), 90, 10.0, 10)
ids, vis, dist = sched.window(2)
thresholds = np.full(10, 28.0)

for beta_delay in (0.0, 100.0, 2000.0):
    p = SliceProblem(ids, vis, dist, thresholds, link, beta_res=1e-6, beta_delay=beta_delay)
    dec = solve_window(p)
    on = np.flatnonzero(dec.active)
    plan = ", ".join(f"sat {ids[i]}: b={dec.candidate[i]:.3f}" for i in on)
    print(f"beta_delay {beta_delay:>6}: objective {dec.objective:8.3f}  [{plan}]")

# Reservations only take effect when a satellite first covers the area
p = SliceProblem(ids, vis, dist, thresholds, link)
dec = solve_window(p)
for t in range(10):
    dec = execute_on_coverage(dec, vis, t)
    print(f"slot {t}: locked {[int(ids[i]) for i in np.flatnonzero(dec.locked & (dec.active > 0))]}")
print(f"full rate range in window: {full_rate(dist[vis > 0], link).min():.1f}"
      f"-{full_rate(dist[vis > 0], link).max():.1f} packets/s")
