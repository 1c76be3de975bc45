"""
Screening bad configurations cheaply
====================================

A configuration that cannot learn makes the task vector stall almost
immediately, so the data-free rule fires after about rho rounds instead of
burning the whole budget. A diverging configuration is reported as FAILED
rather than as an early stop.
"""
from fedstop import ExperimentConfig, run_single

base = ExperimentConfig().with_overrides({"R": 500, "seeds": [0], "monitor.tau": 0.1})
cases = {
    "healthy (lr=0.05)": {},
    "frozen (lr=0)": {"method.local_lr": 0.0},
    "tiny steps (lr=1e-6)": {"method.local_lr": 1e-6},
    "diverging (lr=1e308)": {"method.local_lr": 1e308},
}
for name, over in cases.items():
    res = run_single(base.with_overrides({**over, "halt_at_stop": "datafree"}), seed=0)
    s = res.summary
    acc = "-" if s.acc_at_datafree is None else f"{100 * s.acc_at_datafree:.1f}%"
    print(f"{name:<22} status={s.status:<17} rounds used={s.last_round:>3}  test acc={acc}")
