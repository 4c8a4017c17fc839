"""Skeleton action recognition with block-diagonal graph convolution and invariance encodings."""
from .errors import BlockGCNError
from .kernels import BACKEND
from .model import BlockGCN, ModelConfig, desk_config, paper_config, tiny_config
from .training import TrainConfig, ensemble, train

__version__ = "0.1.0"

__all__ = ["BACKEND", "BlockGCN", "BlockGCNError", "ModelConfig", "TrainConfig", "desk_config",
           "ensemble", "paper_config", "tiny_config", "train", "__version__"]
