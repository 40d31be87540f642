"""
Four ways to slice the same 15 minutes
======================================

FRS plans from a point forecast, FDTRS adds the chance-constraint margin,
ADTRS also lets the twin re-plan satellites that have not started serving,
and PerfectRS plans with the demand it will actually see.
"""

from leoslice.simkit import ModelCache, ScenarioConfig, format_table, run

cfg = ScenarioConfig()
cache = ModelCache()
reports = [run(cfg, s, g, model_cache=cache)
           for s, g in (("FRS", 0.9), ("FDTRS", 0.9), ("ADTRS", 0.9), ("ADTRS", 0.99), ("PerfectRS", 0.9))]
print(format_table(reports))

# Where ADTRS re-planned, and why the violations moved
adtrs = reports[2]
resliced = [e["slot"] for e in adtrs.events if e["action"] == "reslice"]
print(f"\nADTRS 0.9 re-planned after slots {resliced}")
for r in reports:
    bad = [s.slot for s in r.slots if s.violated]
    print(f"{r.scheme:<12} violated slots: {bad}")
