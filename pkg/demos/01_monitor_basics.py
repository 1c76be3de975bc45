"""
Watching a task vector saturate
===============================

The data-free monitor only needs the initial model and the global model
after each round. Here we feed it a hand-made trajectory whose distance
from the start grows fast at first and then levels off, and print what
the monitor sees round by round.
"""
import numpy as np

from fedstop import MonitorConfig, TaskVectorMonitor

rng = np.random.default_rng(0)
theta0 = rng.normal(size=20)
direction = rng.normal(size=20)
direction /= np.linalg.norm(direction)

# distance from theta0 follows 5 * (1 - exp(-r / 8)), plus a little noise
# orthogonal to the main direction
cfg = MonitorConfig(tau=0.01, rho=5)
mon = TaskVectorMonitor(theta0, cfg)
for r in range(1, 61):
    theta = theta0 + 5 * (1 - np.exp(-r / 8)) * direction + 1e-3 * rng.normal(size=20)
    if mon.observe(theta, r):
        print(f"-> stop fired at round {r}")

print(f"\n{'round':>5} {'delta':>8} {'growth':>9} {'kappa':>5}")
for rec in mon.records[:40]:
    g = "-" if rec.growth_rate is None else f"{rec.growth_rate:.4f}"
    print(f"{rec.round:>5} {rec.delta:8.4f} {g:>9} {rec.kappa:>5}{'  <- stop' if rec.stop else ''}")

# The counter resets whenever growth pops back above tau, so the stop
# needs rho *consecutive* quiet rounds.
print("\nstopped at", mon.stopped_at)
