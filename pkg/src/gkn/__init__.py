"""Graph kernel networks: mesh-independent neural operators for elliptic PDEs."""
from .model import DESK_CONFIG, PAPER_CONFIG, GknParams, ModelConfig, gkn_forward, init_params, predict
from .training import TrainConfig, evaluate, train

__all__ = ["DESK_CONFIG", "PAPER_CONFIG", "GknParams", "ModelConfig", "TrainConfig", "evaluate",
           "gkn_forward", "init_params", "predict", "train"]
__version__ = "0.1.0"
