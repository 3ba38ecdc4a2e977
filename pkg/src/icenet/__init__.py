"""Neural Poisson frequency models whose individual conditional expectation
curves are pushed towards smoothness and monotonicity during training."""
from .data_schema import ColumnRoles, RawData, Schema, TabularDataset, fit_schema, ingest_csv, split, transform
from .kernels import BACKEND
from .network import Architecture, NetworkParams, forward, backward, predict
from .penalties import ColumnConstraint, ConstraintSpec, compound_loss, poisson_deviance
from .trainer import TrainConfig, TrainingDiverged, distill, lambda_sweep, nagging, train, train_runs

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BACKEND", "ColumnConstraint", "ColumnRoles", "ConstraintSpec", "NetworkParams", "RawData",
    "Schema", "TabularDataset", "TrainConfig", "TrainingDiverged", "backward", "compound_loss", "distill",
    "fit_schema", "forward", "ingest_csv", "lambda_sweep", "nagging", "poisson_deviance", "predict", "split",
    "train", "train_runs", "transform",
]
