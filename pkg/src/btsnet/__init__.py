"""RGB-D salient object detection with bi-directional transfer-and-selection."""

from .bts import BTS, AttentionOrder, BtsConfig, Direction
from .core_ops import (
    ASPP,
    BConv,
    ChannelSelect,
    ConfigurationError,
    DegenerateInputError,
    PredictionHead,
    SpatialAttention,
    count_parameters,
    upsample_bilinear,
)
from .data import DatasetSpec, Sample, load_dataset, preprocess, synthetic_dataset
from .decoder import GroupDecoder, UNetDecoder
from .encoder import BackboneConfig, DualEncoder, Scale
from .loss import LossWeights, bce, total_loss
from .metrics import MetricsReport, evaluate_dataset, evaluate_pair
from .model import BTSNet

__version__ = "0.1.0"

__all__ = [
    "ASPP",
    "AttentionOrder",
    "BConv",
    "BTS",
    "BTSNet",
    "BackboneConfig",
    "BtsConfig",
    "ChannelSelect",
    "ConfigurationError",
    "DatasetSpec",
    "DegenerateInputError",
    "Direction",
    "DualEncoder",
    "GroupDecoder",
    "LossWeights",
    "MetricsReport",
    "PredictionHead",
    "Sample",
    "Scale",
    "SpatialAttention",
    "UNetDecoder",
    "bce",
    "count_parameters",
    "evaluate_dataset",
    "evaluate_pair",
    "load_dataset",
    "preprocess",
    "synthetic_dataset",
    "total_loss",
    "upsample_bilinear",
]
