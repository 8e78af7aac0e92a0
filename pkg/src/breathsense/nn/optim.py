"""Adam optimizer over a Network's trainable parameters."""

import numpy as np


class Adam:
    def __init__(self, network, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.network = network
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}
        for name, layer, key in network.trainable_params():
            self._m[name] = np.zeros_like(layer.params[key])
            self._v[name] = np.zeros_like(layer.params[key])

    def step(self):
        """Bias-corrected update from each layer's .grads; call after backward."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, layer, key in self.network.trainable_params():
            g = layer.grads[key]
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1**self.t)
            vhat = v / (1.0 - b2**self.t)
            update = self.lr * mhat / (np.sqrt(vhat) + self.eps)
            layer.params[key] -= update.astype(layer.params[key].dtype)
