"""
FedAvg with three stopping rules side by side
=============================================

One FedAvg run on non-IID synthetic data (Dirichlet c=0.1, 100 clients,
10 sampled per round). The run goes to the full budget so we can see where
the data-free rule, the two validation rules and the test-accuracy oracle
would each have stopped.

If matplotlib is installed the accuracy and growth-rate curves are saved
to ``fedavg_early_stop.png``.
"""
from fedstop import ExperimentConfig, run_single

cfg = ExperimentConfig().with_overrides({"R": 200, "seeds": [0]})
res = run_single(cfg, seed=0)
s = res.summary

print(f"data-free stop   r*={s.r_star_datafree:>4}  test acc {100 * s.acc_at_datafree:.2f}%")
print(f"val-loss stop    r*={s.r_star_val_loss!s:>4}  test acc {100 * s.acc_at_val_loss:.2f}% (best checkpoint)")
print(f"val-acc stop     r*={s.r_star_val_acc!s:>4}  test acc {100 * s.acc_at_val_acc:.2f}% (best checkpoint)")
print(f"oracle           r ={s.oracle_round:>4}  test acc {100 * s.oracle_acc:.2f}%")
print(f"data-free minus best validation rule: {100 * s.delta_acc:+.2f} pts, {s.delta_r:+d} rounds")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    rounds = [r.round for r in res.records]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax1.plot(rounds, [100 * r.test_acc for r in res.records])
    ax1.set_ylabel("test accuracy (%)")
    ax2.semilogy(rounds[1:], [max(r.growth_rate, 1e-6) for r in res.records[1:]])
    ax2.axhline(cfg.monitor.tau, ls="--", c="k", lw=0.8)
    ax2.set_ylabel("growth rate")
    ax2.set_xlabel("global round")
    for ax in (ax1, ax2):
        ax.axvline(s.r_star_datafree, c="C3", lw=0.8)
    fig.tight_layout()
    fig.savefig("fedavg_early_stop.png", dpi=120)
    print("saved fedavg_early_stop.png")
