from .knn import EmptyTrainSetError, knn_predict
from .layers import (
    Conv2d,
    GlobalAvgPool,
    Linear,
    Relu,
    ShapeMismatchError,
    UpsampleNearest2x,
)
from .model import (
    CHECKPOINT_MAGIC,
    LogRegModel,
    FallMaskNet,
    load_checkpoint,
    save_checkpoint,
    trunk_features,
)
from .train import (
    LossConfig,
    NonFiniteLossError,
    TrainConfig,
    joint_loss,
    train,
    logreg_baseline,
)

__all__ = [
    "CHECKPOINT_MAGIC",
    "Conv2d",
    "EmptyTrainSetError",
    "GlobalAvgPool",
    "Linear",
    "LogRegModel",
    "LossConfig",
    "FallMaskNet",
    "NonFiniteLossError",
    "Relu",
    "ShapeMismatchError",
    "TrainConfig",
    "UpsampleNearest2x",
    "joint_loss",
    "knn_predict",
    "load_checkpoint",
    "logreg_baseline",
    "save_checkpoint",
    "train",
    "trunk_features",
]
