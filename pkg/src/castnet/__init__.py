"""Community-attentive spatio-temporal forecasting on a small numpy autodiff core."""

from .errors import (CastnetError, ConfigError, ContractError, FingerprintMismatch, NumericError, SchemaError,
                     ShapeError)
from .model import AttentionTrace, ModelConfig, forward, init_params, predict
from .training import TrainConfig, TrainReport, TrainResult, grid_search, predict_set, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "CastnetError", "ConfigError", "ContractError", "FingerprintMismatch", "NumericError", "SchemaError",
    "ShapeError", "AttentionTrace", "ModelConfig", "forward", "init_params", "predict",
    "TrainConfig", "TrainReport", "TrainResult", "grid_search", "predict_set", "total_loss", "train",
]
