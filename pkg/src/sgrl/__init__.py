"""Graph representation learning for detecting black-market accounts."""

__version__ = "0.1.0"

from .encoder import EncoderConfig, param_count  # noqa: E402
from .graph import Graph, build_graph, read_dataset, write_dataset  # noqa: E402
from .metrics import NO_PREDICTIONS, auc, confusion_metrics, ks  # noqa: E402
from .pipeline import (  # noqa: E402
    CheckpointBundle,
    PipelineConfig,
    detect,
    load_checkpoint,
    pretrain,
    save_checkpoint,
)
from .synthgen import SynthConfig, default_config, generate  # noqa: E402

__all__ = [
    "CheckpointBundle",
    "EncoderConfig",
    "Graph",
    "NO_PREDICTIONS",
    "PipelineConfig",
    "SynthConfig",
    "auc",
    "build_graph",
    "confusion_metrics",
    "default_config",
    "detect",
    "generate",
    "ks",
    "load_checkpoint",
    "param_count",
    "pretrain",
    "read_dataset",
    "save_checkpoint",
    "write_dataset",
]
