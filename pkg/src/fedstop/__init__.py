"""Federated learning simulation with data-free early stopping.

The global model's displacement from its initialization (the task vector)
grows quickly early in training and saturates as training converges.
:class:`~fedstop.stopping.TaskVectorMonitor` watches the relative growth of
its norm and stops training once it stays below a threshold for a number of
rounds, without touching any data.
"""
from .config import DataConfig, ExperimentConfig, ModelConfig, load_config
from .data import Dataset, Partition, PartitionSpec, generate_synthetic, split
from .errors import (ArgumentError, ClientFailure, ConfigError, DimensionError, FedStopError,
                     NumericError, ProtocolError)
from .fedcore import ClientState, MethodConfig, ServerState, run_round
from .harness import RoundRecord, RunResult, RunSummary, emit_report, run_experiment, run_single, run_sweep
from .model import Batch, ModelSpec
from .stopping import (MonitorConfig, MonitorState, TaskVectorMonitor, check_early_stop, check_val_stop,
                       oracle_best_round)

__version__ = "0.1.0"

__all__ = [
    "DataConfig", "ExperimentConfig", "ModelConfig", "load_config",
    "Dataset", "Partition", "PartitionSpec", "generate_synthetic", "split",
    "ArgumentError", "ClientFailure", "ConfigError", "DimensionError", "FedStopError",
    "NumericError", "ProtocolError",
    "ClientState", "MethodConfig", "ServerState", "run_round",
    "RoundRecord", "RunResult", "RunSummary", "emit_report", "run_experiment", "run_single", "run_sweep",
    "Batch", "ModelSpec",
    "MonitorConfig", "MonitorState", "TaskVectorMonitor", "check_early_stop", "check_val_stop",
    "oracle_best_round",
]
