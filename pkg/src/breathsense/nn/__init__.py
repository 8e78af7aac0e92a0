from .layers import (
    BatchNorm2D,
    Conv2D,
    DegenerateBatch,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    ReLU,
    ShapeMismatch,
    Sigmoid,
    StaleCache,
    network_from_arch,
)
from .losses import bce_grad_logits, bce_loss
from .optim import Adam
from .weights import (
    BadMagic,
    ShapeMismatchOnLoad,
    TruncatedPayload,
    load_weights,
    load_weights_into,
    pack_entries,
    save_weights,
    unpack_entries,
)
from .gradcheck import check_network, relative_error

__all__ = [
    "Adam",
    "BadMagic",
    "BatchNorm2D",
    "Conv2D",
    "DegenerateBatch",
    "Dense",
    "Flatten",
    "MaxPool2D",
    "Network",
    "ReLU",
    "ShapeMismatch",
    "ShapeMismatchOnLoad",
    "Sigmoid",
    "StaleCache",
    "TruncatedPayload",
    "bce_grad_logits",
    "bce_loss",
    "check_network",
    "load_weights",
    "load_weights_into",
    "network_from_arch",
    "pack_entries",
    "relative_error",
    "save_weights",
    "unpack_entries",
]
