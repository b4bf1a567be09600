"""Adam optimizer over named parameter dicts."""

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig


@dataclass
class AdamConfig:
    """Optimizer settings; defaults follow the training setup (lr 1e-4, batch 16)."""

    learning_rate: float = 0.0001
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self):
        if self.learning_rate < 0:
            raise BadConfig("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")


class Adam:
    def __init__(self, params, config=None):
        self.config = config or AdamConfig()
        self.config.validate()
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}
        self._t = 0

    def step(self, params, grads):
        """Update params in place from grads (same keys)."""
        cfg = self.config
        self._t += 1
        bc1 = 1.0 - cfg.beta1 ** self._t
        bc2 = 1.0 - cfg.beta2 ** self._t
        for k, g in grads.items():
            m = self._m[k]
            v = self._v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            params[k] -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
