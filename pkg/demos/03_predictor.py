"""
A Bayesian LSTM on per-slot demand features
===========================================

The predictor sees the last 10 slots of (mean, variance) and outputs the
next slot's pair. Weight uncertainty gives the spread used as a safety
margin; a separate noise head gives predictive intervals.
"""

import numpy as np

from leoslice.demand import RegimeSpec, Segment, generate, trace_features
from leoslice.predictor import fit_distribution, fit_predictor, multistep_predict, predict

trace = generate(RegimeSpec((Segment(0, "poisson", 300.0, 300.0),), 2700), seed=0)
feats = trace_features(trace, 10)

res = fit_predictor(feats[:60], seed=1)
print(f"loss {res.losses[0]:.3f} -> {res.losses[-1]:.3f} over {len(res.losses)} epochs")

# Held-out one-step predictions and their 90% intervals
hits, widths = 0, []
for j in range(60, 260):
    pf = predict(res.model, feats[j - 10:j], mc_samples=30, seed=j)
    lo, hi = pf.interval(0.9)
    hits += lo <= feats[j, 0] <= hi
    widths.append(hi - lo)
print(f"90% interval coverage {hits / 200:.3f}, mean width {np.mean(widths):.2f} packets/s")

# The fitted distribution the slicer consumes
pf = predict(res.model, feats[250:260], mc_samples=30, seed=0)
print(f"next slot: {pf}\n  fitted as {fit_distribution(pf)}")

# A window-long rollout shares one set of posterior draws across steps
for p in multistep_predict(res.model, feats[250:260], 5, seed=3, first_slot=260):
    print(f"  slot {p.slot}: mean {p.mean:7.2f} +/- {p.mean_std:.2f}")
