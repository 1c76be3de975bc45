"""Federated round loop: client sampling, local optimisation, aggregation.

Local update rules
------------------
All methods run ``local_steps`` minibatch steps from the global model with
step size ``local_lr``; they differ in the direction used per step:

=========  ==============================================================
fedavg     ``g``
fedprox    ``g + mu * (theta - global)``
scaffold   ``g - c_i + c``; afterwards
           ``c_i <- c_i - c + (global - local) / (local_steps * local_lr)``
feddyn     ``g - dual_i + alpha * (theta - global)``; afterwards
           ``dual_i <- dual_i - alpha * (local - global)``
fedsam     gradient evaluated at ``theta + sam_radius * g / ||g||``
=========  ==============================================================

The server averages the local models uniformly. SCAFFOLD additionally
moves its control variate by ``(M/N) * mean(delta c_i)``; FedDyn keeps a
correction state ``h`` and returns ``mean(locals) - h / alpha``.

New client algorithms plug in by adding a branch to :func:`_direction`
(per-step direction), :func:`_finalize_client` (post-training state) and
:func:`server_aggregate`.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import vecmath
from .errors import ClientFailure, ConfigError, DimensionError, NumericError
from .model import Batch, ModelSpec, loss_and_grad
from .seeding import derive_rng

__all__ = [
    "METHODS",
    "MethodConfig",
    "ClientState",
    "ServerState",
    "RoundResult",
    "sample_clients",
    "minibatch_schedule",
    "client_update",
    "server_aggregate",
    "run_round",
    "default_threads",
]

METHODS = ("fedavg", "fedprox", "scaffold", "feddyn", "fedsam")


@dataclass(frozen=True)
class MethodConfig:
    method: str = "fedavg"
    local_lr: float = 0.05
    local_steps: int = 5
    batch_size: int = 32
    mu: float = 0.01
    alpha: float = 0.1
    sam_radius: float = 0.05

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        for name in ("local_lr", "mu", "alpha", "sam_radius"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and non-negative, got {v}")
        if self.local_steps < 1:
            raise ConfigError("local_steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class ClientState:
    control_variate: np.ndarray
    dyn_dual: np.ndarray

    @classmethod
    def zeros(cls, d: int) -> "ClientState":
        return cls(np.zeros(d), np.zeros(d))


@dataclass
class ServerState:
    global_params: np.ndarray
    server_control: np.ndarray
    dyn_h: np.ndarray
    round: int = 0

    @classmethod
    def initial(cls, params: np.ndarray) -> "ServerState":
        params = vecmath.as_vector(params)
        d = params.shape[0]
        return cls(params, np.zeros(d), np.zeros(d), 0)


class RoundResult(NamedTuple):
    sampled: list[int]
    locals: list[np.ndarray]


def default_threads() -> int:
    env = os.environ.get("FEDSTOP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"FEDSTOP_THREADS must be an integer, got {env!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def sample_clients(N: int, M: int, round: int, seed: int) -> list[int]:
    """``M`` distinct client ids drawn uniformly without replacement (sorted)."""
    if not 1 <= M <= N:
        raise ConfigError(f"need 1 <= M <= N, got M={M}, N={N}")
    rng = derive_rng(seed, "sampling", round)
    return sorted(int(i) for i in rng.choice(N, size=M, replace=False))


def minibatch_schedule(n: int, batch_size: int, steps: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Index arrays for ``steps`` minibatches.

    Consecutive slices of a shuffled order; the order is redrawn whenever a
    pass over the data is exhausted. A batch never straddles two passes, so
    the final batch of a pass may be short. When ``batch_size >= n`` every
    step is the full batch in natural order.
    """
    if batch_size >= n:
        full = np.arange(n)
        return [full] * steps
    out = []
    order = rng.permutation(n)
    pos = 0
    for _ in range(steps):
        if pos >= n:
            order = rng.permutation(n)
            pos = 0
        out.append(order[pos:pos + batch_size])
        pos += batch_size
    return out


def _direction(method: MethodConfig, spec: ModelSpec, theta, glob, state: ClientState,
               server_control, batch: Batch) -> np.ndarray:
    _, g = loss_and_grad(spec, theta, batch)
    m = method.method
    if m == "fedprox":
        return g + method.mu * (theta - glob)
    if m == "scaffold":
        return g - state.control_variate + server_control
    if m == "feddyn":
        return g - state.dyn_dual + method.alpha * (theta - glob)
    if m == "fedsam":
        gnorm = float(np.sqrt(np.dot(g, g)))
        if gnorm == 0.0:
            return g
        _, g_adv = loss_and_grad(spec, theta + (method.sam_radius / gnorm) * g, batch)
        return g_adv
    return g


def _finalize_client(method: MethodConfig, glob, local, state: ClientState,
                     server_control) -> ClientState:
    m = method.method
    if m == "scaffold":
        if method.local_lr > 0:
            drift = (glob - local) / (method.local_steps * method.local_lr)
        else:
            drift = np.zeros_like(glob)
        return replace(state, control_variate=state.control_variate - server_control + drift)
    if m == "feddyn":
        return replace(state, dyn_dual=state.dyn_dual - method.alpha * (local - glob))
    return state


def client_update(method: MethodConfig, spec: ModelSpec, global_params: np.ndarray,
                  state: ClientState, server_control: np.ndarray, data: Batch,
                  rng: np.random.Generator, *, round: int | None = None,
                  client: int | None = None) -> tuple[np.ndarray, ClientState]:
    """Run local training from ``global_params`` and return ``(local, new_state)``."""
    glob = np.asarray(global_params, dtype=np.float64)
    if state.control_variate.shape != glob.shape or server_control.shape != glob.shape:
        raise DimensionError("client/server state length does not match parameters")
    theta = glob.copy()
    schedule = minibatch_schedule(len(data), method.batch_size, method.local_steps, rng)
    for idx in schedule:
        batch = data if len(idx) == len(data) else data.take(idx)
        try:
            d = _direction(method, spec, theta, glob, state, server_control, batch)
        except NumericError as exc:
            raise ClientFailure(f"client {client} diverged in round {round}: {exc}",
                                round=round, client=client) from exc
        with np.errstate(over="ignore", invalid="ignore"):
            theta = theta - method.local_lr * d
        if not np.all(np.isfinite(theta)):
            raise ClientFailure(f"client {client} produced non-finite parameters in round {round}",
                                round=round, client=client)
    return theta, _finalize_client(method, glob, theta, state, server_control)


def server_aggregate(method: MethodConfig, server: ServerState, locals: Sequence[np.ndarray],
                     control_deltas: Sequence[np.ndarray] | None = None,
                     num_clients: int | None = None) -> ServerState:
    """Combine local models into the next global state (``round + 1``).

    ``control_deltas`` (SCAFFOLD only) are the per-client changes of the
    control variate; ``num_clients`` is the population size N.
    """
    if len(locals) == 0:
        raise ConfigError("server_aggregate needs at least one local model")
    for v in locals:
        if np.shape(v) != server.global_params.shape:
            raise DimensionError("local model length does not match the global model")
    avg = vecmath.mean(locals)
    control, h = server.server_control, server.dyn_h
    m = method.method
    if m == "scaffold" and control_deltas:
        N = num_clients if num_clients is not None else len(locals)
        control = control + (len(locals) / N) * vecmath.mean(control_deltas)
        new = avg
    elif m == "feddyn" and method.alpha > 0:
        h = h - method.alpha * (avg - server.global_params)
        new = avg - h / method.alpha
    else:
        new = avg
    return ServerState(new, control, h, server.round + 1)


def run_round(method: MethodConfig, spec: ModelSpec, server: ServerState,
              clients: list[ClientState], client_data: Sequence[Batch], M: int, seed: int,
              *, threads: int = 1, order: Sequence[int] | None = None
              ) -> tuple[ServerState, list[ClientState], RoundResult]:
    """One global round: sample, train locally, aggregate.

    ``order`` permutes the execution order of the sampled clients (testing
    hook); aggregation always reduces in ascending client id, so the result
    does not depend on it nor on ``threads``.
    """
    N = len(clients)
    r = server.round + 1
    sampled = sample_clients(N, M, r, seed)
    run_order = list(sampled) if order is None else [sampled[i] for i in order]
    glob = server.global_params

    def work(cid: int):
        rng = derive_rng(seed, "minibatch", r, cid)
        return cid, client_update(method, spec, glob, clients[cid], server.server_control,
                                  client_data[cid], rng, round=r, client=cid)

    if threads > 1 and len(run_order) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(run_order))) as pool:
            done = dict(pool.map(work, run_order))
    else:
        done = dict(work(cid) for cid in run_order)

    new_clients = list(clients)
    locals_, deltas = [], []
    for cid in sampled:
        local, st = done[cid]
        locals_.append(local)
        deltas.append(st.control_variate - clients[cid].control_variate)
        new_clients[cid] = st
    new_server = server_aggregate(method, server, locals_,
                                  deltas if method.method == "scaffold" else None, N)
    return new_server, new_clients, RoundResult(sampled, locals_)
