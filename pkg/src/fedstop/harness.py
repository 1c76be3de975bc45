"""Experiment orchestration: seeded runs, sweeps and report files."""
from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import ExperimentConfig, config_hash
from .data import Partition, generate_synthetic, make_partition, split
from .errors import ArgumentError, ConfigError, NumericError
from .fedcore import ClientState, ServerState, default_threads, run_round
from .model import evaluate, init_params
from .seeding import derive_rng
from .stopping import (TaskVectorMonitor, ValMonitorState, check_val_stop,
                       oracle_best_round)

log = logging.getLogger(__name__)

__all__ = [
    "RoundRecord",
    "RunSummary",
    "RunResult",
    "SetupBundle",
    "build_setup",
    "run_single",
    "run_experiment",
    "summarize",
    "expand_grid",
    "run_sweep",
    "aggregate",
    "emit_report",
    "write_rounds_csv",
    "read_rounds_csv",
    "write_summary_csv",
    "read_summary_csv",
    "comparison_table",
]

COMPLETED = "COMPLETED"
STOPPED_DATAFREE = "STOPPED_DATAFREE"
STOPPED_VAL = "STOPPED_VAL"
FAILED = "FAILED"


@dataclass
class RoundRecord:
    run_id: str
    seed: int
    round: int
    delta: float
    growth_rate: float | None
    kappa: int
    train_loss: float | None
    val_loss: float | None
    val_acc: float | None
    test_acc: float | None
    datafree_stop: bool
    val_loss_stop: bool
    val_acc_stop: bool
    wall_ms: float


@dataclass
class RunSummary:
    run_id: str
    config_hash: str
    seed: int
    method: str
    skew: str
    c: float
    tau: float
    rho: int
    status: str
    last_round: int
    r_star_datafree: int | None
    r_star_val_loss: int | None
    r_star_val_acc: int | None
    oracle_round: int | None
    oracle_acc: float | None
    acc_at_datafree: float | None
    best_acc_until_datafree: float | None
    acc_at_val_loss: float | None
    acc_at_val_acc: float | None
    best_val_mode: str | None
    r_star_best_val: int | None
    acc_best_val: float | None
    delta_acc: float | None
    delta_r: int | None


@dataclass
class RunResult:
    summary: RunSummary
    records: list[RoundRecord]
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    error: str | None = None


@dataclass
class SetupBundle:
    """Everything a run derives from ``(config, seed)`` before round 1."""
    train: Any
    val: Any
    test: Any
    partition: Partition
    client_data: list
    theta0: np.ndarray


def build_setup(cfg: ExperimentConfig, seed: int) -> SetupBundle:
    d = cfg.data
    ds = generate_synthetic(d.num_classes, d.input_dim, d.n_per_class, d.class_sep,
                            derive_rng(seed, "data"))
    train, val, test = split(ds, d.split, derive_rng(seed, "split"))
    part = make_partition(train, cfg.partition_spec(derive_rng(seed, "partition")))
    client_data = [train.batch(ix) for ix in part.client_indices]
    theta0 = init_params(cfg.model_spec(), derive_rng(seed, "init"))
    return SetupBundle(train, val, test, part, client_data, theta0)


def _acc_at(records: list[RoundRecord], r: int | None) -> float | None:
    """Test accuracy at round ``r`` or, if not evaluated there, the latest before it."""
    if r is None:
        return None
    best = None
    for rec in records:
        if rec.round > r:
            break
        if rec.test_acc is not None:
            best = rec.test_acc
    return best


def _best_until(records: list[RoundRecord], r: int | None) -> float | None:
    vals = [rec.test_acc for rec in records if rec.test_acc is not None and (r is None or rec.round <= r)]
    return max(vals) if vals else None


def summarize(cfg: ExperimentConfig, seed: int, records: list[RoundRecord], status: str,
              r_val: dict[str, int | None], ckpt_val: dict[str, int | None],
              run_id: str, chash: str) -> RunSummary:
    last = records[-1].round if records else 0
    r_df = next((rec.round for rec in records if rec.datafree_stop), None)
    # an unfired data-free rule returns the final model
    df_round = r_df if r_df is not None else (last or None)
    acc_df = _acc_at(records, df_round)

    evaluated = [rec for rec in records if rec.test_acc is not None]
    oracle_round, oracle_acc = oracle_best_round(evaluated) if evaluated else (None, None)

    acc_val = {mode: _acc_at(records, ckpt_val.get(mode)) for mode in ("loss", "accuracy")}
    best_mode = None
    if cfg.val_monitors:
        candidates = [(mode, acc_val[mode], r_val.get(mode)) for mode in ("loss", "accuracy")
                      if acc_val[mode] is not None]
        if candidates:
            # higher accuracy first, then the earlier stop
            best_mode = min(candidates, key=lambda t: (-t[1], t[2] if t[2] is not None else math.inf))[0]
    acc_best_val = acc_val[best_mode] if best_mode else None
    r_best_val = r_val.get(best_mode) if best_mode else None
    delta_acc = acc_df - acc_best_val if acc_df is not None and acc_best_val is not None else None
    delta_r = r_df - r_best_val if r_df is not None and r_best_val is not None else None

    return RunSummary(
        run_id=run_id, config_hash=chash, seed=seed, method=cfg.method.method,
        skew=cfg.data.skew, c=float(cfg.data.c), tau=float(cfg.monitor.tau), rho=int(cfg.monitor.rho),
        status=status, last_round=last, r_star_datafree=r_df,
        r_star_val_loss=r_val.get("loss"), r_star_val_acc=r_val.get("accuracy"),
        oracle_round=oracle_round, oracle_acc=oracle_acc,
        acc_at_datafree=acc_df, best_acc_until_datafree=_best_until(records, df_round),
        acc_at_val_loss=acc_val["loss"], acc_at_val_acc=acc_val["accuracy"],
        best_val_mode=best_mode, r_star_best_val=r_best_val, acc_best_val=acc_best_val,
        delta_acc=delta_acc, delta_r=delta_r,
    )


def run_single(cfg: ExperimentConfig, seed: int, *, threads: int | None = None,
               setup: SetupBundle | None = None) -> RunResult:
    """Train one seeded run while feeding all stopping rules.

    After each aggregation the global model goes to the data-free monitor;
    the validation monitors see only validation metrics and never influence
    it. Unless ``cfg.halt_at_stop`` is set, training continues to ``R`` so
    every stopping point can be compared afterwards.
    """
    chash = config_hash(cfg)
    run_id = f"{chash[:10]}-s{seed}"
    threads = default_threads() if threads is None else threads
    spec = cfg.model_spec()
    s = setup if setup is not None else build_setup(cfg, seed)
    train_b, val_b, test_b = s.train.batch(), s.val.batch(), s.test.batch()

    server = ServerState.initial(s.theta0)
    clients = [ClientState.zeros(spec.dim) for _ in range(cfg.N)]
    monitor = TaskVectorMonitor(s.theta0, cfg.monitor)
    val_states = ({"loss": ValMonitorState("loss"), "accuracy": ValMonitorState("accuracy")}
                  if cfg.val_monitors else {})
    r_val: dict[str, int | None] = {m: None for m in val_states}

    records: list[RoundRecord] = []
    snapshots: dict[int, np.ndarray] = {}
    if cfg.snapshot_every:
        snapshots[0] = s.theta0.copy()
    status, error = COMPLETED, None

    for r in range(1, cfg.R + 1):
        t0 = time.perf_counter()
        try:
            server, clients, _ = run_round(cfg.method, spec, server, clients, s.client_data,
                                           cfg.M, seed, threads=threads)
            df_stop = monitor.observe(server.global_params, r)
        except NumericError as exc:
            status, error = FAILED, str(exc)
            log.warning("run %s failed at round %d: %s", run_id, r, exc)
            break
        theta = server.global_params
        rec_m = monitor.records[-1]

        scheduled = r % cfg.eval_every == 0
        train_loss = test_acc = val_loss = val_acc = None
        val_fired = {"loss": False, "accuracy": False}
        try:
            if scheduled or df_stop is not None or r == cfg.R:
                train_loss, _ = evaluate(spec, theta, train_b)
                _, test_acc = evaluate(spec, theta, test_b)
            if scheduled and val_states:
                val_loss, val_acc = evaluate(spec, theta, val_b)
                for mode, metric in (("loss", val_loss), ("accuracy", val_acc)):
                    fired, val_states[mode] = check_val_stop(val_states[mode], cfg.monitor, metric, r)
                    if fired is not None:
                        r_val[mode] = fired
                        val_fired[mode] = True
        except NumericError as exc:
            status, error = FAILED, str(exc)
            break

        if cfg.snapshot_every and r % cfg.snapshot_every == 0:
            snapshots[r] = theta.copy()
        records.append(RoundRecord(
            run_id=run_id, seed=seed, round=r, delta=rec_m.delta, growth_rate=rec_m.growth_rate,
            kappa=rec_m.kappa, train_loss=train_loss, val_loss=val_loss, val_acc=val_acc,
            test_acc=test_acc, datafree_stop=df_stop is not None,
            val_loss_stop=val_fired["loss"], val_acc_stop=val_fired["accuracy"],
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))
        if cfg.halt_at_stop == "datafree" and df_stop is not None:
            status = STOPPED_DATAFREE
            break
        if cfg.halt_at_stop == "val" and all(v is not None for v in r_val.values()):
            status = STOPPED_VAL
            break

    ckpt = {mode: st.best_round for mode, st in val_states.items()}
    summary = summarize(cfg, seed, records, status, r_val, ckpt, run_id, chash)
    return RunResult(summary, records, snapshots, error)


def run_experiment(cfg: ExperimentConfig, *, seed_offset: int = 0,
                   threads: int | None = None) -> list[RunResult]:
    """One :class:`RunResult` per configured seed."""
    return [run_single(cfg, seed + seed_offset, threads=threads) for seed in cfg.seeds]


# ---------------------------------------------------------------- sweeps

_GRID_ALIASES = {
    "method": "method.method",
    "skew": "data.skew",
    "c": "data.c",
    "tau": "monitor.tau",
    "rho": "monitor.rho",
    "local_lr": "method.local_lr",
}


def expand_grid(grid: dict[str, Any], base: ExperimentConfig) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    """Cross product of ``grid`` applied to ``base``.

    Keys are short names (``method``, ``skew``, ``c``, ``tau``, ``rho``,
    ``local_lr``) or dotted config paths. ``c`` may also map skew names to
    their own value lists, e.g. ``{"dirichlet": [0.1], "pathological": [2]}``.
    """
    if not grid:
        raise ArgumentError("empty sweep grid")
    grid = dict(grid)
    c_by_skew = grid.pop("c", None) if isinstance(grid.get("c"), dict) else None
    keys = list(grid)
    for k, v in grid.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"grid entry {k!r} must be a non-empty list")
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, combo))
        if c_by_skew is not None:
            skew = cell.get("skew", base.data.skew)
            if skew not in c_by_skew:
                raise ConfigError(f"no c values given for skew {skew!r}")
            variants = [dict(cell, c=c) for c in c_by_skew[skew]]
        else:
            variants = [cell]
        for v in variants:
            overrides = {_GRID_ALIASES.get(k, k): val for k, val in v.items()}
            cells.append((v, base.with_overrides(overrides)))
    return cells


def _run_cell(args):
    cfg, seed = args
    return run_single(cfg, seed, threads=1)


def run_sweep(grid: dict[str, Any], base: ExperimentConfig, *, workers: int | None = None,
              seed_offset: int = 0) -> tuple[list[RunResult], list[dict[str, Any]]]:
    """Run every grid cell for every seed.

    Returns all run results plus the seed-averaged comparison rows (see
    :func:`aggregate`). Failed runs are kept with status ``FAILED``.
    """
    cells = expand_grid(grid, base)
    jobs = [(cfg, seed + seed_offset) for _, cfg in cells for seed in cfg.seeds]
    workers = default_threads() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    return results, aggregate([r.summary for r in results])


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def aggregate(summaries: Sequence[RunSummary]) -> list[dict[str, Any]]:
    """Mean over seeds for every (config hash) cell, in first-seen order."""
    groups: dict[str, list[RunSummary]] = {}
    for s in summaries:
        groups.setdefault(s.config_hash, []).append(s)
    rows = []
    for chash, ss in groups.items():
        s0 = ss[0]
        rows.append({
            "config_hash": chash, "method": s0.method, "skew": s0.skew, "c": s0.c,
            "tau": s0.tau, "rho": s0.rho, "n_runs": len(ss),
            "n_failed": sum(s.status == FAILED for s in ss),
            "r_star_datafree": _mean(s.r_star_datafree for s in ss),
            "acc_at_datafree": _mean(s.acc_at_datafree for s in ss),
            "r_star_best_val": _mean(s.r_star_best_val for s in ss),
            "acc_best_val": _mean(s.acc_best_val for s in ss),
            "oracle_round": _mean(s.oracle_round for s in ss),
            "oracle_acc": _mean(s.oracle_acc for s in ss),
            "delta_acc": _mean(s.delta_acc for s in ss),
            "delta_r": _mean(s.delta_r for s in ss),
        })
    return rows


# ---------------------------------------------------------------- files

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parse(text: str, typ: str):
    if text == "":
        return None
    if "bool" in typ:
        return text == "1"
    if "float" in typ:
        return float(text)
    if "int" in typ:
        return int(text)
    return text


def _write_rows(path: Path, cls, rows: Iterable) -> int:
    names = [f.name for f in fields(cls)]
    n = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(getattr(row, k)) for k in names])
            n += 1
    return n


def _read_rows(path: Path, cls) -> list:
    types = {f.name: str(f.type) for f in fields(cls)}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(types) - set(reader.fieldnames or [])
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        return [cls(**{k: _parse(row[k], types[k]) for k in types}) for row in reader]


def write_rounds_csv(path, records: Sequence[RoundRecord]) -> int:
    return _write_rows(Path(path), RoundRecord, records)


def read_rounds_csv(path) -> list[RoundRecord]:
    return _read_rows(Path(path), RoundRecord)


def write_summary_csv(path, summaries: Sequence[RunSummary]) -> int:
    return _write_rows(Path(path), RunSummary, summaries)


def read_summary_csv(path) -> list[RunSummary]:
    return _read_rows(Path(path), RunSummary)


def _pct(v, signed=False) -> str:
    if v is None:
        return "-"
    return f"{100 * v:+.2f}" if signed else f"{100 * v:.2f}"


def _num(v, signed=False) -> str:
    if v is None:
        return "-"
    return f"{v:+.1f}" if signed else f"{v:.1f}"


def comparison_table(rows: Sequence[dict[str, Any]]) -> str:
    """Plain-text table of seed-averaged stopping results.

    Accuracies are in percent; the two delta columns are the data-free rule
    minus the best validation rule.
    """
    head = ["method", "skew", "c", "tau", "rho", "runs", "fail", "r*_free", "acc_free",
            "r*_val", "acc_val", "d_acc", "d_r", "r_oracle", "acc_oracle"]
    body = []
    for row in rows:
        body.append([
            row["method"], row["skew"], f"{row['c']:g}", f"{row['tau']:g}", str(row["rho"]),
            str(row["n_runs"]), str(row["n_failed"]),
            _num(row["r_star_datafree"]), _pct(row["acc_at_datafree"]),
            _num(row["r_star_best_val"]), _pct(row["acc_best_val"]),
            _pct(row["delta_acc"], signed=True), _num(row["delta_r"], signed=True),
            _num(row["oracle_round"]), _pct(row["oracle_acc"]),
        ])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def emit_report(runs: Sequence[RunResult], out_dir) -> dict[str, Path]:
    """Write per-round CSV, run summaries, comparison table and plot series.

    Layout under ``out_dir``::

        rounds.csv            one row per (run, round)
        summary.csv           one row per run
        comparison.txt        seed-averaged comparison table
        series/<run>_test_acc.csv, series/<run>_growth_rate.csv
        snapshots/<run>.npz   only for runs that kept snapshots
    """
    records = [rec for run in runs for rec in run.records]
    # a run that failed in round 1 has no records but still gets a summary row
    if not runs or (not records and not any(r.summary.status == FAILED for r in runs)):
        raise ArgumentError("nothing to report: empty round stream")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"rounds": out / "rounds.csv", "summary": out / "summary.csv",
             "comparison": out / "comparison.txt", "series": out / "series"}
    write_rounds_csv(paths["rounds"], records)
    summaries = [run.summary for run in runs]
    write_summary_csv(paths["summary"], summaries)
    paths["comparison"].write_text(comparison_table(aggregate(summaries)), encoding="utf-8")

    paths["series"].mkdir(exist_ok=True)
    for run in runs:
        rid = run.summary.run_id
        for col in ("test_acc", "growth_rate"):
            with (paths["series"] / f"{rid}_{col}.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["round", col])
                for rec in run.records:
                    v = getattr(rec, col)
                    if v is not None:
                        w.writerow([rec.round, repr(float(v))])
        if run.snapshots:
            snap_dir = out / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            rounds = sorted(run.snapshots)
            np.savez(snap_dir / f"{rid}.npz", rounds=np.array(rounds),
                     params=np.stack([run.snapshots[r] for r in rounds]))
    return paths
