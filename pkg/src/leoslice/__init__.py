"""Demand-aware bandwidth slicing over a LEO constellation.

Modules
-------
constellation  Walker-delta propagation and coverage schedules
linkmodel      rates, effective capacity/bandwidth and delay bounds
demand         demand traces and per-slot features
predictor      Bayesian LSTM forecaster and distribution fitting
slicer         chance-constrained window reservation solver
twin           emulation and in-window re-slicing
simkit         scheme simulation, configs and reports
"""

from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
