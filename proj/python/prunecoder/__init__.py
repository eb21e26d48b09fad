from ._core import (
    CheckpointError,
    DataError,
    Model,
    NumericError,
    UsageError,
    Vocab,
    base_config,
    model_grad_check,
    param_count,
    retained_indices,
    run_cli,
    tiny_config,
)

__all__ = [
    "CheckpointError",
    "DataError",
    "Model",
    "NumericError",
    "UsageError",
    "Vocab",
    "base_config",
    "model_grad_check",
    "param_count",
    "retained_indices",
    "run_cli",
    "tiny_config",
]
