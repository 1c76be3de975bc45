import inspect
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fedstop.errors import ArgumentError, ConfigError, DimensionError, NumericError, ProtocolError
from fedstop.fedcore import ClientState, MethodConfig, ServerState, run_round
from fedstop.model import ModelSpec, init_params, loss_and_grad
from fedstop.data import generate_synthetic
from fedstop.stopping import (MonitorConfig, MonitorState, TaskVectorMonitor, ValMonitorState,
                              check_early_stop, check_val_stop, gradient_flow_check, growth_rate,
                              oracle_best_round, replay)

from reference import reference_monitor


def feed_deltas(deltas, tau, rho):
    """Drive the monitor with parameters whose distance from theta0 = 0 is deltas[r-1]."""
    mon = TaskVectorMonitor(np.zeros(3), MonitorConfig(tau, rho))
    for r, d in enumerate(deltas, start=1):
        mon.observe(np.array([d, 0.0, 0.0]), r)
    return mon


def feed_growth(gs, tau, rho, d1=1.0):
    deltas = [d1]
    for g in gs:
        deltas.append(deltas[-1] * (1 + g))
    return feed_deltas(deltas, tau, rho)


# ------------------------------------------------------------ examples

def test_constant_small_growth_stops_at_rho_plus_one():
    mon = feed_growth([0.005] * 20, tau=0.01, rho=10)
    assert mon.stopped_at == 11
    assert [rec.stop for rec in mon.records].count(True) == 1
    assert mon.records[10].stop and mon.records[10].kappa == 10


def test_indicator_resets_counter():
    mon = feed_growth([0.005, 0.02, 0.003, 0.002], tau=0.01, rho=10)
    assert [rec.kappa for rec in mon.records] == [0, 1, 0, 1, 2]


def test_stationary_run_stops_after_patience():
    mon = TaskVectorMonitor(np.ones(4), MonitorConfig(0.01, 10))
    stops = [mon.observe(np.ones(4), r) for r in range(1, 30)]
    assert mon.stopped_at == 11
    assert stops.index(11) == 10
    assert all(rec.growth_rate == 0.0 for rec in mon.records[1:])


def test_growth_rate_arithmetic():
    mon = feed_deltas([1.0, 1.1, 1.21], 0.01, 10)
    g = [rec.growth_rate for rec in mon.records]
    assert g[0] is None
    assert g[1] == pytest.approx(0.1, rel=1e-14) and g[2] == pytest.approx(0.1, rel=1e-14)


def test_degenerate_guard():
    assert growth_rate(0.0, 0.0) == 0.0
    assert growth_rate(1e-13, 5e-13) == 0.0
    assert growth_rate(0.0, 0.5) == math.inf
    # a model that leaves theta0 in round 2 resets the counter
    mon = feed_deltas([0.0, 0.0, 1.0, 1.0], 0.01, 10)
    assert [rec.kappa for rec in mon.records] == [0, 1, 0, 1]


def test_first_round_never_stops_even_with_rho_one():
    mon = feed_deltas([0.0, 0.0], 0.1, 1)
    assert mon.records[0].kappa == 0 and not mon.records[0].stop
    assert mon.stopped_at == 2


def test_stopped_at_is_sticky():
    mon = feed_growth([0.0] * 5 + [1.0] * 3 + [0.0] * 5, tau=0.1, rho=2)
    assert mon.stopped_at == 3
    assert sum(rec.stop for rec in mon.records) == 1


def test_protocol_and_numeric_errors():
    state = MonitorState.start(np.zeros(2))
    cfg = MonitorConfig()
    with pytest.raises(ProtocolError):
        check_early_stop(state, cfg, np.zeros(2), 2)
    _, state, _ = check_early_stop(state, cfg, np.zeros(2), 1)
    with pytest.raises(ProtocolError):
        check_early_stop(state, cfg, np.zeros(2), 1)
    with pytest.raises(DimensionError):
        check_early_stop(state, cfg, np.zeros(3), 2)
    with pytest.raises(NumericError):
        check_early_stop(state, cfg, np.array([np.nan, 0.0]), 2)
    with pytest.raises(ConfigError):
        MonitorConfig(tau=0.0)
    with pytest.raises(ConfigError):
        MonitorConfig(rho=0)


def test_state_is_not_mutated():
    state = MonitorState.start(np.zeros(2))
    _, new, _ = check_early_stop(state, MonitorConfig(), np.ones(2), 1)
    assert state.last_round == 0 and state.prev_delta == 0.0
    assert new.last_round == 1 and new.prev_delta == pytest.approx(math.sqrt(2))


def test_update_path_sees_only_parameters_and_round():
    assert list(inspect.signature(check_early_stop).parameters) == ["state", "cfg", "theta_r", "r"]
    assert list(inspect.signature(TaskVectorMonitor.observe).parameters) == ["self", "theta_r", "r"]
    assert [f for f in MonitorState.__dataclass_fields__] == [
        "theta0", "prev_delta", "kappa", "last_g", "last_round", "stopped_at"]


# ------------------------------------------------------------ properties

deltas_st = st.lists(st.floats(0.0, 100.0, allow_nan=False), min_size=2, max_size=60)


@settings(max_examples=200)
@given(deltas_st, st.sampled_from([0.005, 0.01, 0.05, 0.1]), st.integers(1, 12))
def test_matches_reference_recursion(deltas, tau, rho):
    mon = feed_deltas(deltas, tau, rho)
    gs, kappas, r_star = reference_monitor(deltas, tau, rho)
    assert [rec.growth_rate for rec in mon.records] == gs
    assert [rec.kappa for rec in mon.records] == kappas
    assert mon.stopped_at == r_star


@given(deltas_st, st.integers(1, 12))
def test_larger_tau_never_stops_later(deltas, rho):
    stops = [feed_deltas(deltas, tau, rho).stopped_at for tau in (0.005, 0.01, 0.05, 0.1)]
    as_num = [s if s is not None else math.inf for s in stops]
    assert all(a >= b for a, b in zip(as_num, as_num[1:]))


@given(deltas_st, st.sampled_from([0.01, 0.1]), st.integers(1, 12))
def test_patience_exactness(deltas, tau, rho):
    mon = feed_deltas(deltas, tau, rho)
    assume(mon.stopped_at is not None)
    r_star = mon.stopped_at
    g = {rec.round: rec.growth_rate for rec in mon.records}
    start = r_star
    while start - 1 >= 2 and g[start - 1] < tau:
        start -= 1
    assert r_star - start == rho - 1


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.integers(2, 40))
def test_replay_equals_online(seed, R):
    rng = np.random.default_rng(seed)
    snaps = [rng.standard_normal(6)]
    for _ in range(R):
        snaps.append(snaps[-1] + rng.standard_normal(6) * rng.uniform(0, 0.3))
    cfg = MonitorConfig(0.05, 3)
    state = MonitorState.start(snaps[0])
    online = []
    for r, th in enumerate(snaps[1:], start=1):
        _, state, rec = check_early_stop(state, cfg, th, r)
        online.append(rec)
    assert replay(snaps, cfg) == online


# ------------------------------------------------------------ validation baseline

def run_val(mode, metrics, tau, rho):
    st_ = ValMonitorState(mode)
    cfg = MonitorConfig(tau, rho)
    for r, m in enumerate(metrics, start=1):
        fired, st_ = check_val_stop(st_, cfg, m, r)
        if fired:
            return fired, st_
    return None, st_


def test_val_flat_loss_stops_after_patience():
    fired, st_ = run_val("loss", [1.0, 1.0, 1.0], 0.01, 2)
    assert fired == 3 and st_.best_round == 1


def test_val_improving_loss_never_stops():
    fired, st_ = run_val("loss", [0.95 ** k for k in range(100)], 0.01, 2)
    assert fired is None and st_.best_round == 100


def test_val_flat_accuracy():
    fired, _ = run_val("accuracy", [0.9] * 30, 0.01, 10)
    assert fired == 11


def test_val_small_improvements_do_not_count():
    fired, st_ = run_val("accuracy", [0.5, 0.502, 0.504, 0.6, 0.6, 0.6, 0.6], 0.01, 3)
    # rounds 2-3 gain < 1% and count; 0.6 at round 4 resets; rounds 5-7 are flat
    assert fired == 7 and st_.best_round == 4 and st_.best_metric == 0.6


def test_val_errors():
    with pytest.raises(NumericError):
        check_val_stop(ValMonitorState("loss"), MonitorConfig(), float("nan"), 1)
    with pytest.raises(ConfigError):
        ValMonitorState("f1")


# ------------------------------------------------------------ oracle

def test_oracle_best_round():
    assert oracle_best_round([(1, 0.5), (2, 0.9), (3, 0.9)]) == (2, 0.9)
    assert oracle_best_round([(4, 0.3)]) == (4, 0.3)
    assert oracle_best_round([(r, r / 10) for r in range(1, 8)]) == (7, 0.7)
    assert oracle_best_round([(1, None), (2, 0.1)]) == (2, 0.1)
    with pytest.raises(ArgumentError):
        oracle_best_round([])


# ------------------------------------------------------------ accumulated gradient

def _gd_trajectory(M, rounds, lr=0.3, steps=1):
    spec = ModelSpec("logreg", 3, 3)
    ds = generate_synthetic(3, 3, 30, 2.0, 0)
    data = [ds.batch(ix) for ix in np.array_split(np.arange(len(ds)), M)]
    server = ServerState.initial(init_params(spec, 0))
    clients = [ClientState.zeros(spec.dim) for _ in range(M)]
    cfg = MethodConfig("fedavg", local_lr=lr, local_steps=steps, batch_size=10_000)
    traj, grads = [server.global_params], []
    full = ds.batch()
    for _ in range(rounds):
        grads.append(loss_and_grad(spec, server.global_params, full)[1])
        server, clients, _ = run_round(cfg, spec, server, clients, data, M=M, seed=0)
        traj.append(server.global_params)
    return traj, grads


def test_gradient_flow_single_step():
    traj, grads = _gd_trajectory(1, 1)
    assert gradient_flow_check(traj, grads, 0.3) < 1e-15


def test_gradient_flow_fifty_rounds():
    traj, grads = _gd_trajectory(1, 50)
    assert gradient_flow_check(traj, grads, 0.3) < 1e-10


def test_gradient_flow_multi_client_is_only_approximate():
    traj, grads = _gd_trajectory(2, 20, steps=5)
    err = gradient_flow_check(traj, grads, 0.3)
    assert math.isfinite(err) and err > 1e-10


def test_gradient_flow_length_check():
    with pytest.raises(DimensionError):
        gradient_flow_check([np.zeros(2)] * 3, [np.zeros(2)], 0.1)
