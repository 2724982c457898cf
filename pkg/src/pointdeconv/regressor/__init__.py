from .augment import AugmentDraw, apply_augmentation, augment, draw_augmentation
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .loss import weighted_bce_loss
from .network import (Network, NetworkConfig, NetworkOutput, apply_mapping_head, forward,
                      init_network)
from .optim import AdagradState, adagrad_update
from .training import predict_logits, predict_probability_map, train, train_step

__all__ = [
    "AdagradState", "AugmentDraw", "CheckpointError", "Network", "NetworkConfig", "NetworkOutput",
    "adagrad_update", "apply_augmentation", "apply_mapping_head", "augment", "draw_augmentation",
    "forward", "init_network", "load_checkpoint", "predict_logits", "predict_probability_map",
    "save_checkpoint", "train", "train_step", "weighted_bce_loss",
]
