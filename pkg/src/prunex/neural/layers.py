"""Dense layers with hand-written backward passes, and the Adam optimizer."""
from __future__ import annotations

import numpy as np


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.W = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = rng.uniform(-bound, bound, size=n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    @property
    def grads(self) -> list[np.ndarray]:
        return [self.gW, self.gb]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W + self.b

    def backward(self, x: np.ndarray, gy: np.ndarray) -> np.ndarray:
        self.gW += x.T @ gy
        self.gb += gy.sum(axis=0)
        return gy @ self.W.T


class Mlp:
    """Stack of linear layers with ReLU between them.

    ``relu_output`` also applies ReLU after the last layer.
    """

    def __init__(self, sizes, rng: np.random.Generator, relu_output: bool = False):
        sizes = list(sizes)
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = sizes
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.relu_output = relu_output

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def forward(self, x: np.ndarray):
        cache = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z = layer.forward(x)
            cache.append(x)
            if i < last or self.relu_output:
                z = np.maximum(z, 0.0)
            x = z
        cache.append(x)
        return x, cache

    def backward(self, cache, gy: np.ndarray) -> np.ndarray:
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            if i < last or self.relu_output:
                gy = gy * (cache[i + 1] > 0)
            gy = self.layers[i].backward(cache[i], gy)
        return gy


class Adam:
    def __init__(self, params, grads, lr: float = 1e-4, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.grads = list(grads)
        if len({id(p) for p in self.params}) != len(self.params):
            raise ValueError("a parameter is registered twice")
        self.lr = lr
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def zero_grad(self) -> None:
        for g in self.grads:
            g.fill(0.0)

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, self.grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def step_decay(lr0: float, epoch: int, step_size: int = 100, rate: float = 0.96) -> float:
    """Learning rate multiplied by ``rate`` every ``step_size`` epochs."""
    return lr0 * rate ** (epoch // step_size)
