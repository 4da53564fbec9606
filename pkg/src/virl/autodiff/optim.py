"""First-order optimizers over a ParameterStore."""

from typing import Optional

import numpy as np

from .params import ParameterStore


class Adam:
    """Adam with bias correction; moments are kept per parameter name.

    ``step`` reads the gradient slots, so callers zero gradients themselves.
    A learning rate of 0 leaves every value bit-identical.
    """

    def __init__(
        self,
        store: ParameterStore,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        names: Optional[list[str]] = None,
    ) -> None:
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.names = names if names is not None else store.names()
        self.t = 0
        self._m = {n: np.zeros_like(store.value(n), dtype=np.float64) for n in self.names}
        self._v = {n: np.zeros_like(store.value(n), dtype=np.float64) for n in self.names}

    def step(self, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in self.names:
            g = self.store.grad(name).astype(np.float64)
            self._m[name] = self.beta1 * self._m[name] + (1.0 - self.beta1) * g
            self._v[name] = self.beta2 * self._v[name] + (1.0 - self.beta2) * g * g
            if lr == 0.0:
                continue
            update = lr * (self._m[name] / c1) / (np.sqrt(self._v[name] / c2) + self.eps)
            value = self.store.value(name)
            self.store.set_value(name, value - update.astype(value.dtype))
