"""Decoupled-weight-decay adaptive-moment optimizer with per-module rates."""

import numpy as np


def module_of(name):
    """Map a parameter name to its learning-rate group."""
    if ".adapter" in name:
        return "adapter"
    return name.split(".", 1)[0]


class AdamW:
    def __init__(self, params, lr_by_module, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=1e-4):
        """params: dict name -> Tensor (trainable only).
        lr_by_module: dict group name -> learning rate."""
        self.params = dict(params)
        self.lr_by_module = dict(lr_by_module)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def learning_rate(self, name):
        group = module_of(name)
        if group not in self.lr_by_module:
            raise KeyError(f"no learning rate configured for module {group!r}")
        return self.lr_by_module[group]

    def step(self):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            lr = self.learning_rate(name)
            m = self._m[name] = b1 * self._m[name] + (1 - b1) * g
            v = self._v[name] = b2 * self._v[name] + (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - lr * (update + self.weight_decay * p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
