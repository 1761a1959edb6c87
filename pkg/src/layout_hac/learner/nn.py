"""Small fully connected networks with hand-written backprop, plus SGD and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        dims = (self.input_dim, self.output_dim, *self.hidden)
        if any(int(d) != d or d <= 0 for d in dims):
            raise ValueError(f"all network dimensions must be positive integers, got {dims}")


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class MLP:
    """Softplus hidden layers, linear output. Parameters are ``[W0, b0, W1, b1, ...]``."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None, out_scale: float = 0.1):
        self.spec = spec
        rng = np.random.default_rng(0) if rng is None else rng
        dims = (spec.input_dim, *spec.hidden, spec.output_dim)
        self.params: list[np.ndarray] = []
        for j, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            scale = np.sqrt(2.0 / fan_in)
            if j == len(dims) - 2:
                scale *= out_scale
            self.params.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = self.n_layers - 1
        for j in range(self.n_layers):
            h = h @ self.params[2 * j] + self.params[2 * j + 1]
            if j < last:
                h = softplus(h)
        return h

    def forward(self, x: np.ndarray):
        acts = [x]
        pres = []
        h = x
        last = self.n_layers - 1
        for j in range(self.n_layers):
            z = h @ self.params[2 * j] + self.params[2 * j + 1]
            pres.append(z)
            h = softplus(z) if j < last else z
            acts.append(h)
        return h, (acts, pres)

    def backward(self, cache, dout: np.ndarray) -> list[np.ndarray]:
        acts, pres = cache
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = dout
        for j in reversed(range(self.n_layers)):
            if j < self.n_layers - 1:
                g = g * sigmoid(pres[j])
            grads[2 * j] = acts[j].T @ g
            grads[2 * j + 1] = g.sum(axis=0)
            if j > 0:
                g = g @ self.params[2 * j].T
        return grads

    def copy(self) -> MLP:
        other = MLP.__new__(MLP)
        other.spec = self.spec
        other.params = [p.copy() for p in self.params]
        return other

    def load_from(self, other: MLP) -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size

    def to_dict(self) -> dict:
        return {
            "input_dim": self.spec.input_dim,
            "output_dim": self.spec.output_dim,
            "hidden": list(self.spec.hidden),
            "params": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> MLP:
        spec = NetworkSpec(doc["input_dim"], doc["output_dim"], tuple(doc["hidden"]))
        net = cls.__new__(cls)
        net.spec = spec
        net.params = [np.asarray(p, dtype=float) for p in doc["params"]]
        expected = MLP(spec).params
        if [p.shape for p in net.params] != [p.shape for p in expected]:
            raise ValueError("parameter shapes do not match the network spec")
        return net


class SharedHeadMLP:
    """One MLP applied to each head's slice of the input, outputs concatenated per head.

    Head ``i`` sees ``x[:, head_cols[i]]``, then ``x[:, shared_cols]``, then a
    one-hot head id, and produces ``spec.output_dim`` values. Weight sharing
    lets every head learn from every other head's samples.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        head_cols,
        shared_cols,
        rng: np.random.Generator | None = None,
        out_scale: float = 0.1,
    ):
        self.head_cols = tuple(tuple(int(c) for c in cols) for cols in head_cols)
        self.shared_cols = tuple(int(c) for c in shared_cols)
        if len({len(c) for c in self.head_cols}) != 1:
            raise ValueError("every head needs the same number of input columns")
        n_in = len(self.head_cols[0]) + len(self.shared_cols) + len(self.head_cols)
        if spec.input_dim != n_in:
            raise ValueError(f"spec.input_dim must be {n_in} for this head layout, got {spec.input_dim}")
        self.spec = spec
        self.inner = MLP(spec, rng, out_scale)

    @property
    def n_heads(self) -> int:
        return len(self.head_cols)

    @property
    def params(self) -> list[np.ndarray]:
        return self.inner.params

    def _split(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        n, k = len(x), self.n_heads
        shared = x[:, self.shared_cols]
        rows = []
        for i, cols in enumerate(self.head_cols):
            ident = np.zeros((n, k))
            ident[:, i] = 1.0
            rows.append(np.concatenate([x[:, cols], shared, ident], axis=1))
        # (n, k, d) -> (n * k, d) with heads of one sample adjacent
        return np.stack(rows, axis=1).reshape(n * k, -1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        n = len(np.atleast_2d(x))
        return self.inner(self._split(x)).reshape(n, -1)

    def forward(self, x: np.ndarray):
        n = len(np.atleast_2d(x))
        out, cache = self.inner.forward(self._split(x))
        return out.reshape(n, -1), cache

    def backward(self, cache, dout: np.ndarray) -> list[np.ndarray]:
        return self.inner.backward(cache, dout.reshape(-1, self.spec.output_dim))

    def copy(self) -> SharedHeadMLP:
        other = SharedHeadMLP.__new__(SharedHeadMLP)
        other.head_cols, other.shared_cols, other.spec = self.head_cols, self.shared_cols, self.spec
        other.inner = self.inner.copy()
        return other

    def load_from(self, other: SharedHeadMLP) -> None:
        self.inner.load_from(other.inner)

    def get_flat(self) -> np.ndarray:
        return self.inner.get_flat()

    def set_flat(self, flat: np.ndarray) -> None:
        self.inner.set_flat(flat)

    def to_dict(self) -> dict:
        d = self.inner.to_dict()
        d["head_cols"] = [list(c) for c in self.head_cols]
        d["shared_cols"] = list(self.shared_cols)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> SharedHeadMLP:
        net = cls.__new__(cls)
        net.inner = MLP.from_dict(doc)
        net.spec = net.inner.spec
        net.head_cols = tuple(tuple(c) for c in doc["head_cols"])
        net.shared_cols = tuple(doc["shared_cols"])
        return net


def network_from_dict(doc: dict):
    return SharedHeadMLP.from_dict(doc) if "head_cols" in doc else MLP.from_dict(doc)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * corr * m / (np.sqrt(v) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")
