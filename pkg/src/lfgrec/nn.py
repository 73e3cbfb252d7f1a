"""Small feed-forward kernel: linear / leaky-ReLU / batchnorm / tanh layers,
manual backprop, adaptive-moment optimizer, finite-difference gradient check.

Everything is float64; batches are (rows, features) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Base layer. Parameterized layers expose params() as {name: array}."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Linear(Layer):
    """y = x @ W.T + b with W shaped (out, in)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        # He-style init, suited to the leaky-ReLU stack
        self.W = rng.normal(0.0, np.sqrt(2.0 / d_in), (d_out, d_in))
        self.b = np.zeros(d_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}

    def forward(self, x, train):
        if x.shape[1] != self.W.shape[1]:
            raise ValueError(f"linear expects {self.W.shape[1]} features, got {x.shape[1]}")
        self._x = x if train else None
        return x @ self.W.T + self.b

    def backward(self, dout):
        if self._x is None:
            raise RuntimeError("backward without a cached train-mode forward")
        self.dW[...] = dout.T @ self._x
        self.db[...] = dout.sum(axis=0)
        return dout @ self.W


class LeakyReLU(Layer):
    def __init__(self, slope: float = LEAKY_SLOPE):
        self.slope = slope
        self._mask = None

    def forward(self, x, train):
        mask = x > 0
        if train:
            self._mask = mask
        return np.where(mask, x, self.slope * x)

    def backward(self, dout):
        if self._mask is None:
            raise RuntimeError("backward without a cached train-mode forward")
        return np.where(self._mask, dout, self.slope * dout)


class Tanh(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, train):
        y = np.tanh(x)
        if train:
            self._y = y
        return y

    def backward(self, dout):
        if self._y is None:
            raise RuntimeError("backward without a cached train-mode forward")
        return dout * (1.0 - self._y ** 2)


class BatchNorm(Layer):
    """Per-feature normalization; batch statistics in train mode, running
    statistics (EMA) in infer mode."""

    def __init__(self, features: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(features)
        self.beta = np.zeros(features)
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def forward(self, x, train):
        if not train:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
            return self.gamma * xhat + self.beta
        if x.shape[0] < 2:
            raise ValueError("batchnorm in train mode needs batch size >= 2")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        self._cache = (xhat, inv_std)
        return self.gamma * xhat + self.beta

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("backward without a cached train-mode forward")
        xhat, inv_std = self._cache
        b = dout.shape[0]
        self.dgamma[...] = (dout * xhat).sum(axis=0)
        self.dbeta[...] = dout.sum(axis=0)
        dxhat = dout * self.gamma
        return (inv_std / b) * (
            b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


class Network:
    """Ordered layer stack with explicit train/infer distinction."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(qualified name, param, grad) for every trainable array."""
        out = []
        for idx, layer in enumerate(self.layers):
            grads = layer.grads()
            for name, arr in layer.params().items():
                out.append((f"layer{idx}.{name}", arr, grads[name]))
        return out


class Adam:
    """Adaptive-moment optimizer with bias correction and optional decoupled
    weight decay, keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, named_params: list[tuple[str, np.ndarray, np.ndarray]]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p, g in named_params:
            if not np.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient for {name}")
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    checked: int
    worst_param: str = ""
    failures: list[str] = field(default_factory=list)


def grad_check(loss_and_grads, params: list[tuple[str, np.ndarray]],
               tolerance: float = 1e-4, samples_per_param: int = 5,
               step: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grads()`` must re-run the full forward/backward on a fixed
    batch and return (loss, {name: grad}); ``params`` are the live arrays
    that perturbation mutates in place.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_grads()
    analytic = {name: g.copy() for name, g in grads.items()}
    max_rel, worst, checked = 0.0, "", 0
    failures = []
    for name, arr in params:
        flat = arr.reshape(-1)
        k = min(samples_per_param, flat.size)
        for j in rng.choice(flat.size, size=k, replace=False):
            orig = flat[j]
            flat[j] = orig + step
            lp, _ = loss_and_grads()
            flat[j] = orig - step
            lm, _ = loss_and_grads()
            flat[j] = orig
            fd = (lp - lm) / (2 * step)
            an = analytic[name].reshape(-1)[j]
            if abs(fd) < 1e-10 and abs(an) < 1e-10:
                continue
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-10)
            checked += 1
            if rel > max_rel:
                max_rel, worst = rel, f"{name}[{j}]"
            if rel > tolerance:
                failures.append(f"{name}[{j}]: analytic={an:.3e} fd={fd:.3e} rel={rel:.2e}")
    return GradCheckReport(passed=not failures, max_rel_err=max_rel,
                           checked=checked, worst_param=worst, failures=failures)
