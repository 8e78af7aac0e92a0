"""Binary cross-entropy over multilabel sigmoid outputs."""

import numpy as np

from .layers import ShapeMismatch

CLAMP = 1e-7


def bce_loss(predictions, targets):
    """Mean elementwise BCE and its gradient w.r.t. the (clamped) predictions."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"predictions {p.shape} vs targets {y.shape}")
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    loss = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))
    grad = (pc - y) / (pc * (1.0 - pc)) / p.size
    return loss, grad


def bce_grad_logits(predictions, targets):
    """Gradient w.r.t. pre-sigmoid logits when the loss is fused with sigmoid."""
    p = np.asarray(predictions)
    y = np.asarray(targets, dtype=p.dtype)
    if p.shape != y.shape:
        raise ShapeMismatch(f"predictions {p.shape} vs targets {y.shape}")
    return (p - y) / p.size
