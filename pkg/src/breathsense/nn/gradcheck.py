"""Central finite-difference verification of analytic gradients (float64).

Central differences are a derivative oracle only where the loss is smooth:
a coordinate whose [theta-h, theta+h] interval flips a ReLU mask, a pooling
argmax or the BCE clamp straddles a kink, so such draws are resampled rather
than compared.
"""

import numpy as np

from .layers import MaxPool2D, ReLU
from .losses import CLAMP, bce_grad_logits, bce_loss


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def _loss_and_grad(network, x, targets, readout):
    out = network.forward(x, train=True)
    if targets is not None:
        loss, _ = bce_loss(out, targets)
        dx = network.backward(bce_grad_logits(out, targets), fused_sigmoid=True)
    else:
        loss = float(np.sum(out * readout))
        dx = network.backward(readout)
    return loss, dx


def _loss_and_signature(network, x, targets, readout):
    """Loss plus the activation pattern (kink side) of this forward pass."""
    out = network.forward(x, train=True)
    sig = []
    for layer in network.layers:
        if isinstance(layer, ReLU):
            sig.append(layer._cache.copy())
        elif isinstance(layer, MaxPool2D):
            sig.append(layer._cache[0].copy())
    if targets is not None:
        sig.append((out < CLAMP) | (out > 1.0 - CLAMP))
        loss = bce_loss(out, targets)[0]
    else:
        loss = float(np.sum(out * readout))
    return loss, sig


def _same_signature(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def check_network(network, x, targets=None, h=1e-4, coords_per_tensor=5, rng=None, check_input=True):
    """Max relative error between analytic and central-difference gradients.

    The network must already be float64. With `targets`, the loss is BCE with
    the fused sigmoid backward; otherwise a fixed random linear readout of the
    output is used so any layer stack yields a scalar.
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    readout = None
    if targets is None:
        readout = rng.standard_normal(network.forward(x, train=True).shape)

    _, dx = _loss_and_grad(network, x, targets, readout)
    worst = 0.0

    tensors = [(layer.params, key, layer.grads[key]) for _, layer, key in network.trainable_params()]
    if check_input:
        tensors.append((None, None, dx))
    for store, key, grad in tensors:
        arr = x if store is None else store[key]
        flat = arr.reshape(-1)
        n_coords = min(coords_per_tensor, flat.size)
        candidates = rng.permutation(flat.size)
        accepted = 0
        for idx in candidates:
            if accepted == n_coords:
                break
            orig = flat[idx]
            flat[idx] = orig + h
            plus, sig_p = _loss_and_signature(network, x, targets, readout)
            flat[idx] = orig - h
            minus, sig_m = _loss_and_signature(network, x, targets, readout)
            flat[idx] = orig
            if not _same_signature(sig_p, sig_m):
                continue  # kink inside the interval: not a valid FD sample
            accepted += 1
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(numeric, grad.reshape(-1)[idx]))
    return worst
