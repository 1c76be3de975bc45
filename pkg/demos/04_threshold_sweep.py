"""
Larger thresholds stop earlier
==============================

Sweep tau for each client algorithm. The trajectory itself does not depend
on tau, so larger thresholds can only fire sooner; accuracy at the stop
tends to drop once the rule fires before training has settled.
"""
from fedstop import ExperimentConfig, run_sweep
from fedstop.harness import comparison_table

base = ExperimentConfig().with_overrides({"R": 200, "seeds": [0], "val_monitors": False})
grid = {"method": ["fedavg", "scaffold", "feddyn"], "tau": [0.005, 0.01, 0.05, 0.1]}
runs, rows = run_sweep(grid, base)

print(comparison_table(rows))
