"""TabKANet: KAN-based numerical embeddings with a transformer encoder for tabular data."""

from .data import load_csv, load_schema, make_folds
from .errors import (ConfigError, DataError, DivergenceError, LeakageError, SchemaError,
                     TabKANetError)
from .kan import KanLayer, SplineGrid, bspline_basis, kan_forward, kan_init
from .metrics import auc, macro_f1, rmse
from .model import ARCHITECTURES, ModelSpec, build, load_checkpoint, predict, save_checkpoint
from .training import TrainConfig, train

__all__ = ["ARCHITECTURES", "ConfigError", "DataError", "DivergenceError", "KanLayer", "LeakageError",
           "ModelSpec", "SchemaError", "SplineGrid", "TabKANetError", "TrainConfig", "auc", "bspline_basis",
           "build", "kan_forward", "kan_init", "load_checkpoint", "load_csv", "load_schema", "macro_f1",
           "make_folds", "predict", "rmse", "save_checkpoint", "train"]
__version__ = "0.1.0"
