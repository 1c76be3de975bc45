"""Stopping rules for federated training.

The data-free monitor looks only at global parameters. With ``theta0`` the
initial model and ``theta_r`` the global model after round ``r``::

    delta_r = || theta_r - theta0 ||_2                  (accumulated distance)
    g_r     = (delta_r - delta_{r-1}) / delta_{r-1}      (growth rate, r >= 2)
    kappa_r = [g_r < tau] * (kappa_{r-1} + 1),  kappa_1 = 0
    r*      = min { r >= 2 : kappa_r >= rho }

Training halts at ``r*`` and the model ``theta_{r*}`` is returned.

A validation-based monitor with the same ``(tau, rho)`` pair and an
exhaustive oracle over test accuracy are provided for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import vecmath
from .errors import ArgumentError, ConfigError, DimensionError, NumericError, ProtocolError

__all__ = [
    "DEGENERATE_EPS",
    "MonitorConfig",
    "MonitorState",
    "MonitorRecord",
    "ValMonitorState",
    "check_early_stop",
    "growth_rate",
    "TaskVectorMonitor",
    "replay",
    "check_val_stop",
    "oracle_best_round",
    "gradient_flow_check",
]

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class MonitorConfig:
    tau: float = 0.01
    rho: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError("tau must be a positive finite number")
        if int(self.rho) != self.rho or self.rho < 1:
            raise ConfigError("rho must be an integer >= 1")


@dataclass(frozen=True, eq=False)
class MonitorState:
    theta0: np.ndarray
    prev_delta: float = 0.0
    kappa: int = 0
    last_g: float | None = None
    last_round: int = 0
    stopped_at: int | None = None

    @classmethod
    def start(cls, theta0: np.ndarray) -> "MonitorState":
        theta0 = vecmath.as_vector(theta0)
        vecmath.check_finite(theta0, "theta0")
        return cls(theta0)


class MonitorRecord(NamedTuple):
    round: int
    delta: float
    growth_rate: float | None
    kappa: int
    stop: bool


def growth_rate(prev_delta: float, delta: float) -> float:
    """Relative increase of the accumulated distance.

    When the previous distance is (numerically) zero the ratio is undefined:
    a model that is still at its start counts as zero growth, a model that
    has just left it counts as infinite growth.
    """
    if prev_delta <= DEGENERATE_EPS:
        return 0.0 if delta <= DEGENERATE_EPS else math.inf
    return (delta - prev_delta) / prev_delta


def check_early_stop(state: MonitorState, cfg: MonitorConfig, theta_r: np.ndarray,
                     r: int) -> tuple[int | None, MonitorState, MonitorRecord]:
    """Observe the global model after round ``r``.

    Returns ``(stop_round, new_state, record)`` where ``stop_round`` is
    ``r`` on the single round at which the rule fires and ``None``
    otherwise. Only parameters and the round index enter here.
    """
    if r != state.last_round + 1:
        raise ProtocolError(f"expected round {state.last_round + 1}, got {r}")
    theta_r = np.asarray(theta_r, dtype=np.float64)
    if theta_r.shape != state.theta0.shape:
        raise DimensionError("theta_r and theta0 differ in length")
    if not np.all(np.isfinite(theta_r)):
        raise NumericError(f"non-finite global parameters at round {r}")

    delta = vecmath.l2_norm(vecmath.sub(theta_r, state.theta0))
    if r == 1:
        g, kappa = None, 0
    else:
        g = growth_rate(state.prev_delta, delta)
        kappa = state.kappa + 1 if g < cfg.tau else 0

    fired = state.stopped_at is None and r >= 2 and kappa >= cfg.rho
    stopped_at = r if fired else state.stopped_at
    new = replace(state, prev_delta=delta, kappa=kappa, last_g=g, last_round=r, stopped_at=stopped_at)
    return (r if fired else None), new, MonitorRecord(r, delta, g, kappa, fired)


class TaskVectorMonitor:
    """Stateful wrapper around :func:`check_early_stop`.

    >>> mon = TaskVectorMonitor(theta0, MonitorConfig(tau=0.01, rho=10))
    >>> for r in range(1, R + 1):
    ...     theta = train_one_round(theta)
    ...     if mon.observe(theta, r):
    ...         break
    """

    def __init__(self, theta0: np.ndarray, cfg: MonitorConfig):
        self.cfg = cfg
        self.state = MonitorState.start(theta0)
        self.records: list[MonitorRecord] = []

    def observe(self, theta_r: np.ndarray, r: int) -> int | None:
        stop, self.state, rec = check_early_stop(self.state, self.cfg, theta_r, r)
        self.records.append(rec)
        return stop

    @property
    def stopped_at(self) -> int | None:
        return self.state.stopped_at


def replay(snapshots: Sequence[np.ndarray], cfg: MonitorConfig) -> list[MonitorRecord]:
    """Re-run the monitor over ``[theta0, theta1, ..., thetaR]``."""
    if len(snapshots) < 1:
        raise ArgumentError("replay needs at least theta0")
    mon = TaskVectorMonitor(snapshots[0], cfg)
    for r, theta in enumerate(snapshots[1:], start=1):
        mon.observe(theta, r)
    return mon.records


@dataclass(frozen=True)
class ValMonitorState:
    mode: str
    best_metric: float | None = None
    best_round: int | None = None
    rounds_since_improve: int = 0
    stopped_at: int | None = None

    def __post_init__(self):
        if self.mode not in ("loss", "accuracy"):
            raise ConfigError(f"validation mode must be 'loss' or 'accuracy', got {self.mode!r}")


_VAL_EPS = 1e-12


def _improves(mode: str, best: float, metric: float, tau: float) -> bool:
    scale = max(abs(best), _VAL_EPS)
    if mode == "loss":
        return (best - metric) / scale > tau
    return (metric - best) / scale > tau


def check_val_stop(state: ValMonitorState, cfg: MonitorConfig, val_metric: float,
                   r: int) -> tuple[int | None, ValMonitorState]:
    """Patience-based stopping on a validation metric.

    An observation improves when it beats the best value so far by more than
    ``tau`` relative to it; the first observation always sets the best. The
    rule fires once ``rho`` consecutive observations fail to improve. The
    checkpoint to use afterwards is ``state.best_round``.
    """
    if not np.isfinite(val_metric):
        raise NumericError(f"non-finite validation metric at round {r}")
    if state.best_metric is None or _improves(state.mode, state.best_metric, val_metric, cfg.tau):
        new = replace(state, best_metric=float(val_metric), best_round=r, rounds_since_improve=0)
    else:
        new = replace(state, rounds_since_improve=state.rounds_since_improve + 1)
    if new.stopped_at is None and new.rounds_since_improve >= cfg.rho:
        return r, replace(new, stopped_at=r)
    return None, new


def oracle_best_round(records) -> tuple[int, float]:
    """Round with the highest test accuracy; the earliest one wins ties.

    ``records`` holds objects with ``round`` and ``test_acc`` attributes or
    ``(round, test_acc)`` pairs. Entries whose accuracy is missing are
    skipped.
    """
    best = None
    for rec in records:
        if isinstance(rec, tuple) and not hasattr(rec, "test_acc"):
            rnd, acc = rec
        else:
            rnd, acc = rec.round, rec.test_acc
        if acc is None or (isinstance(acc, float) and math.isnan(acc)):
            continue
        if best is None or acc > best[1]:
            best = (int(rnd), float(acc))
    if best is None:
        raise ArgumentError("oracle_best_round needs at least one evaluated record")
    return best


def gradient_flow_check(trajectory: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                        lr: float) -> float:
    """Max sup-norm gap between the task vector and ``-lr * sum(grads)``.

    ``trajectory`` is ``[theta0, ..., thetaR]`` and ``grads[k]`` is the
    full gradient at ``trajectory[k]``. The gap is exactly zero (up to
    rounding) for single-client, single-step, full-batch gradient descent;
    elsewhere it measures how far the accumulated-gradient picture is off.
    """
    if len(grads) != len(trajectory) - 1:
        raise DimensionError("need one gradient per transition")
    theta0 = np.asarray(trajectory[0], dtype=np.float64)
    acc = np.zeros_like(theta0)
    worst = 0.0
    for theta, g in zip(trajectory[1:], grads):
        v = vecmath.sub(theta, theta0)
        acc = vecmath.axpy(1.0, g, acc)
        gap = vecmath.axpy(lr, acc, v)
        worst = max(worst, float(np.max(np.abs(gap))) if gap.size else 0.0)
    return worst
