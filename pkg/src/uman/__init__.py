"""U-MAN: KAN-enhanced U-Net segmentation with multi-scale adaptive stages and gated skip fusion."""

from .checkpoint import CheckpointError
from .config import ConfigError, dump_config, load_config, parse_config
from .data import DatasetSpec, SegmentationSample, generate_dataset, load_dataset, save_dataset, split
from .kan import KANBlock, KANLayer, SplineGrid, bspline_basis
from .losses import LossConfig, bce_loss, dice_loss, f1, iou, total_loss
from .man import MANStage
from .network import UMAN, NetworkConfig, build_model
from .pagf import PAGF, PagfMode
from .tensor import DimensionError, GraphError, Tensor, backward, no_grad
from .train import NumericError, OptimConfig, TrainReport, evaluate_checkpoint, evaluate_model, train

__version__ = "0.1.0"

__all__ = [
    "backward",
    "bce_loss",
    "bspline_basis",
    "build_model",
    "CheckpointError",
    "ConfigError",
    "DatasetSpec",
    "dice_loss",
    "DimensionError",
    "dump_config",
    "evaluate_checkpoint",
    "evaluate_model",
    "f1",
    "generate_dataset",
    "GraphError",
    "iou",
    "KANBlock",
    "KANLayer",
    "load_config",
    "load_dataset",
    "LossConfig",
    "MANStage",
    "NetworkConfig",
    "no_grad",
    "NumericError",
    "OptimConfig",
    "PAGF",
    "PagfMode",
    "parse_config",
    "save_dataset",
    "SegmentationSample",
    "SplineGrid",
    "split",
    "Tensor",
    "total_loss",
    "train",
    "TrainReport",
    "UMAN",
]
