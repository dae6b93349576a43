"""Small dense networks in plain numpy with hand-written backprop.

Only the fixed ReLU chain used by the actors and the critic is supported.
Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(B, fan_in)`` maps through ``X @ W + b``. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEMA_VERSION = 1


class ShapeError(ValueError):
    pass


class DenseNet:
    def __init__(self, weights, biases, output_activation="identity"):
        if output_activation not in ("identity", "tanh"):
            raise ValueError(f"unsupported output activation {output_activation!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.output_activation = output_activation
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError("bias does not match weight fan-out")
        for w0, w1 in zip(self.weights, self.weights[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ShapeError("layer chain is not shape-consistent")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator, output_activation="identity"):
        """Uniform fan-in init: every entry in +-1/sqrt(fan_in)."""
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-lim, lim, size=fan_out))
        return cls(ws, bs, output_activation)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.output_activation)

    def forward(self, x):
        out, _ = self.forward_cache(x)
        return out

    def __call__(self, x):
        return self.forward(x)

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.shape[-1] != self.in_dim:
            raise ShapeError(f"input has {X.shape[-1]} features, network expects {self.in_dim}")
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        if self.output_activation == "tanh":
            h = np.tanh(h)
        cache = (acts, h, single)
        return (h[0] if single else h), cache

    def backward(self, cache, upstream):
        acts, out, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        g = g[None, :] if single else g
        if g.shape != out.shape:
            raise ShapeError(f"upstream gradient shape {g.shape} does not match output {out.shape}")
        if self.output_activation == "tanh":
            g = g * (1.0 - out ** 2)
        n = len(self.weights)
        gw = [None] * n
        gb = [None] * n
        for i in range(n - 1, -1, -1):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0)
        grad_x = g[0] if single else g
        return GradientBundle(gw, gb, grad_x)


@dataclass
class GradientBundle:
    weights: list
    biases: list
    input: np.ndarray

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def forward(net: DenseNet, x):
    return net.forward(x)


def backward(net: DenseNet, x, upstream) -> GradientBundle:
    _, cache = net.forward_cache(x)
    return net.backward(cache, upstream)


# ------------------------------------------------------------ categorical

def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(y, upstream, axis=-1):
    """Vector-Jacobian product of softmax given its output ``y``."""
    return y * (upstream - (upstream * y).sum(axis=axis, keepdims=True))


def sample_gumbel(rng: np.random.Generator, shape):
    u = rng.random(shape)
    u = np.clip(u, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).eps)
    return -np.log(-np.log(u))


def gumbel_softmax(z, tau: float, rng: np.random.Generator | None = None, noise=None):
    """Relaxed one-hot sample softmax((z + g) / tau).

    Pass ``noise`` to reuse fixed Gumbel draws; otherwise they come from ``rng``.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(z, dtype=np.float64)
    g = sample_gumbel(rng, z.shape) if noise is None else noise
    return softmax((z + g) / tau)


# ------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    lr: float
    first: list
    second: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr: float, **kw) -> "AdamState":
        return cls(lr, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, st: AdamState) -> None:
    """In-place bias-corrected Adam descent step on ``params``."""
    if len(params) != len(grads) or len(params) != len(st.first):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
    st.step += 1
    c1 = 1.0 - st.beta1 ** st.step
    c2 = 1.0 - st.beta2 ** st.step
    for p, g, m, v in zip(params, grads, st.first, st.second):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * g * g
        p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> DenseNet:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("mixing coefficient must lie in [0, 1]")
    if target.layer_sizes != online.layer_sizes:
        raise ShapeError(f"target {target.layer_sizes} and online {online.layer_sizes} differ")
    for pt, po in zip(target.params(), online.params()):
        pt *= 1.0 - tau
        pt += tau * po
    return target


# ----------------------------------------------------------- serialization

def net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "output_activation": net.output_activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(d: dict) -> DenseNet:
    net = DenseNet(d["weights"], d["biases"], d.get("output_activation", "identity"))
    if net.layer_sizes != list(d["layer_sizes"]):
        raise ShapeError(f"stored layer_sizes {d['layer_sizes']} disagree with arrays {net.layer_sizes}")
    return net


def adam_to_dict(st: AdamState) -> dict:
    return {
        "lr": st.lr, "step": st.step, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps,
        "first": [m.tolist() for m in st.first],
        "second": [v.tolist() for v in st.second],
    }


def adam_from_dict(d: dict) -> AdamState:
    return AdamState(
        lr=d["lr"], step=d["step"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"],
        first=[np.asarray(m, dtype=np.float64) for m in d["first"]],
        second=[np.asarray(v, dtype=np.float64) for v in d["second"]],
    )
