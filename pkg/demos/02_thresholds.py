"""
From uncertain demand to a capacity threshold
=============================================

The predictor does not give one demand value. It gives a distribution whose
parameters are themselves uncertain. The slicer turns that into a single
capacity threshold that holds with probability gamma.
"""

import numpy as np

from leoslice.linkmodel import Gaussian, LinkParams, Poisson, effective_bandwidth, full_rate
from leoslice.predictor import GaussianFit, PoissonFit
from leoslice.slicer import demand_threshold, point_threshold

link = LinkParams()
theta = link.qos_exponent
print(f"full-reservation rate at 550 km: {full_rate(550.0, link):.2f} packets/s")

# Effective bandwidth sits above the mean, more so for bursty demand
for name, model in (("Poisson(30)", Poisson(30)), ("Gaussian(30, 90)", Gaussian(30, 90))):
    print(f"{name:<18} effective bandwidth {effective_bandwidth(model, theta):.3f}")

# The quantile margin grows with gamma and with the parameter uncertainty
fits = [PoissonFit(30.0, 0.0), PoissonFit(30.0, 3.0), GaussianFit(30.0, 3.0, 90.0, 20.0)]
print("\n" + " " * 44 + "  ".join(f"g={g:<5}" for g in (0.5, 0.9, 0.99)))
for f in fits:
    row = "  ".join(f"{demand_threshold(f, theta, g):7.3f}" for g in (0.5, 0.9, 0.99))
    print(f"{str(f):<44}{row}   (point {point_threshold(f, theta):.3f})")

# Monte-Carlo check: draw the uncertain intensity, compare with the 0.9 threshold
rng = np.random.default_rng(0)
lam = rng.normal(30.0, 3.0, 10**5)
th = demand_threshold(PoissonFit(30.0, 3.0), theta, 0.9)
print(f"\ncovered fraction at gamma 0.9: {np.mean(lam * np.expm1(theta) / theta <= th):.4f}")
