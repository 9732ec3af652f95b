"""Dense tensors with a recorded tape and reverse-mode gradients.

Only the handful of primitives the matching model needs are provided. Every
primitive records a vector-Jacobian product on the tape of its inputs; the
reverse sweep walks the tape backwards, which is a valid reverse topological
order because nodes are appended as they are created.

    >>> tape = Tape()
    >>> W = tape.param(np.ones((2, 2)), "W")
    >>> loss = sum_all(matmul(tape.const(np.eye(2)), W))
    >>> grads = tape.backward(loss)
    >>> grads["W"].tolist()
    [[1.0, 1.0], [1.0, 1.0]]
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ParameterError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CHECKPOINT_FORMAT = "qapm-params"
CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "tape", "requires_grad", "name", "parents", "vjp")

    def __init__(self, data, tape=None, requires_grad=False, name=None, parents=(), vjp=None):
        self.data = data
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of primitive applications."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.params: list[Tensor] = []

    def param(self, data, name=None) -> Tensor:
        t = Tensor(np.array(data, dtype=np.float64), self, True, name)
        self.params.append(t)
        return t

    def const(self, data) -> Tensor:
        return Tensor(np.asarray(data, dtype=np.float64), self, False)

    def record(self, data, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, self, needs, parents=tuple(parents) if needs else (), vjp=vjp if needs else None)
        if needs:
            self.nodes.append(out)
        return out

    def backward(self, loss: Tensor) -> dict:
        """Populate ``.grad`` on every parameter and return them keyed by name.

        Parameters without a name are keyed by their position in ``self.params``.
        The tape is consumed: intermediate nodes drop their closures and
        gradients as the sweep passes them, so memory is returned at once
        instead of waiting for the cycle collector.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        for p in self.params:
            p.grad = np.zeros_like(p.data)
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            pgrads = node.vjp(node.grad)
            for parent, g in zip(node.parents, pgrads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g
            if node is not loss:
                node.grad = None
            node.vjp, node.parents = None, ()
        self.nodes = []
        return {(p.name if p.name is not None else i): p.grad for i, p in enumerate(self.params)}


def _tape_of(*xs: Tensor) -> Tape:
    for x in xs:
        if x.tape is not None:
            return x.tape
    return Tape()


def _record(data, parents, vjp) -> Tensor:
    return _tape_of(*parents).record(data, parents, vjp)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite input")


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# -- elementwise and structural --------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _record(a.data * c, (a,), lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    return _record(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    m = a.data.size
    return _record(np.array(a.data.mean()), (a,), lambda g: (np.full(a.shape, g / m),))


def square(a: Tensor) -> Tensor:
    return _record(a.data ** 2, (a,), lambda g: (2.0 * a.data * g,))


def transpose(a: Tensor) -> Tensor:
    """Swap the two trailing axes."""
    return _record(_swap(a.data), (a,), lambda g: (_swap(g),))


def reshape(a: Tensor, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def take(a: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing, e.g. a slice along the leading axis."""

    def vjp(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)

    return _record(a.data[index], (a,), vjp)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _record(out, tuple(xs), lambda g: tuple(np.split(g, bounds, axis=axis)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, _swap(b.data)), a.shape)
        if b.requires_grad:
            if b.data.ndim == 2:
                # batched activations times shared weights: fold the batch into rows
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(_swap(a.data), g), b.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


# -- graph operators ----------------------------------------------------------

class StackedOperators:
    """A constant ``(B, K, n, n)`` operator stack laid out for :func:`graph_apply`.

    Both the forward layout ``(B, n*K, n)`` and its transpose are materialized
    once, so every layer reuses them without copying.
    """

    def __init__(self, ops: np.ndarray):
        ops = np.asarray(ops, dtype=np.float64)
        if ops.ndim == 3:
            ops = ops[None]
        self.B, self.K, self.n, _ = ops.shape
        self.fwd = np.ascontiguousarray(ops.transpose(0, 2, 1, 3)).reshape(self.B, self.n * self.K, self.n)
        self.bwd = np.ascontiguousarray(np.swapaxes(self.fwd, 1, 2))


def graph_apply(ops, x: Tensor) -> Tensor:
    """Apply every operator of a family and concatenate along features.

    ``ops`` is a :class:`StackedOperators` or a constant ``(B, K, n, n)``
    array (``(K, n, n)`` for a single graph); ``x`` is ``(B, n, d)`` or
    ``(n, d)``. The result has shape ``(B, n, K*d)`` with block ``k`` equal to
    ``ops[:, k] @ x``, ready to be multiplied by the stacked per-operator
    weights.
    """
    if not isinstance(ops, StackedOperators):
        ops = StackedOperators(ops)
    single = x.data.ndim == 2
    xd = x.data[None] if single else x.data
    B, K, n = ops.B, ops.K, ops.n
    if xd.shape[0] != B or xd.shape[1] != n:
        raise ShapeError(f"features {x.shape} do not match operator stack {(B, K, n, n)}")
    d = xd.shape[2]
    out = np.matmul(ops.fwd, xd).reshape(B, n, K * d)
    if single:
        out = out[0]

    def vjp(g):
        gx = np.matmul(ops.bwd, g.reshape(B, n * K, d))
        return (gx[0] if single else gx,)

    return _record(out, (x,), vjp)


# -- neural primitives ------------------------------------------------------

def split_rho(z: Tensor) -> Tensor:
    """ReLU on the first half of the features, identity on the second half."""
    d = z.shape[-1]
    if d % 2:
        raise ShapeError(f"split nonlinearity needs an even feature count, got {d}")
    h = d // 2
    mask = np.ones(z.shape, dtype=bool)
    mask[..., :h] = z.data[..., :h] > 0
    return _record(np.where(mask, z.data, 0.0), (z,), lambda g: (np.where(mask, g, 0.0),))


@dataclass
class BatchNormState:
    """Running statistics for one normalization site."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def fresh(cls, d: int, **kw) -> "BatchNormState":
        return cls(np.zeros(d), np.ones(d), **kw)


def bnorm(z: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState | None = None,
          mode: str = "batch_stats", update: bool = False, eps: float | None = None) -> Tensor:
    """Spatial batch normalization over every axis except the last.

    ``mode="batch_stats"`` normalizes with statistics of ``z`` itself (and
    folds them into ``state`` when ``update`` is set); ``"running_stats"``
    uses the stored running mean and variance.
    """
    _require_finite("bnorm", z.data)
    if eps is None:
        eps = state.eps if state is not None else BN_EPS
    axes = tuple(range(z.data.ndim - 1))
    if mode == "batch_stats":
        m = z.data.size // z.shape[-1]
        mu = z.data.mean(axis=axes)
        var = z.data.var(axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (z.data - mu) * inv
        if update and state is not None:
            unbiased = var * m / max(m - 1, 1)
            state.mean = (1 - state.momentum) * state.mean + state.momentum * mu
            state.var = (1 - state.momentum) * state.var + state.momentum * unbiased

        def vjp(g):
            gb = g.sum(axis=axes)
            gg = (g * xhat).sum(axis=axes)
            gx = g * gamma.data
            gz = inv / m * (m * gx - gx.sum(axis=axes) - xhat * (gx * xhat).sum(axis=axes))
            return gz, gg, gb
    elif mode == "running_stats":
        if state is None:
            raise ParameterError("running_stats mode needs a BatchNormState")
        inv = 1.0 / np.sqrt(state.var + eps)
        xhat = (z.data - state.mean) * inv

        def vjp(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        raise ParameterError(f"unknown batch-norm mode {mode!r}")
    out = gamma.data * xhat + beta.data
    return _record(out, (z, gamma, beta), vjp)


def row_normalize(e: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.sqrt((e.data ** 2).sum(axis=-1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)
    u = e.data / safe

    def vjp(g):
        gz = (g - u * (g * u).sum(axis=-1, keepdims=True)) / safe
        return (np.where(norms > 0, gz, 0.0),)

    return _record(u, (e,), vjp)


def row_softmax(m: Tensor) -> Tensor:
    _require_finite("row_softmax", m.data)
    shifted = m.data - m.data.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    p = ex / ex.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _record(p, (m,), vjp)


def xent(p: Tensor, pi) -> Tensor:
    """Mean over rows of ``-log P[i, pi[i]]``; leading batch axes are averaged too."""
    pi = np.asarray(pi)
    if pi.shape != p.shape[:-1]:
        raise ShapeError(f"targets {pi.shape} do not match rows of {p.shape}")
    _require_finite("xent", p.data)
    picked = np.take_along_axis(p.data, pi[..., None], axis=-1)[..., 0]
    if np.any(picked <= 0):
        raise NumericError("xent: target probability underflowed to zero")
    rows = picked.size
    out = np.array(-np.log(picked).mean())

    def vjp(g):
        gp = np.zeros_like(p.data)
        np.put_along_axis(gp, pi[..., None], (-g / (rows * picked))[..., None], axis=-1)
        return (gp,)

    return _record(out, (p,), vjp)


# -- optimizer -------------------------------------------------------------------

@dataclass
class Adamax:
    """Adam variant with an infinity-norm second moment.

    ``m <- b1 m + (1-b1) g``, ``u <- max(b2 u, |g|)``,
    ``theta <- theta - lr/(1-b1^t) * m/(u+eps)``.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place. Non-finite gradients reject the whole step."""
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {k!r}; step rejected")
            if g.shape != params[k].shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k!r}")
        self.step_count += 1
        bias = 1.0 - self.beta1 ** self.step_count
        for k, g in grads.items():
            m = self.m.get(k)
            u = self.u.get(k)
            if m is None:
                m = np.zeros_like(g)
                u = np.zeros_like(g)
            m = self.beta1 * m + (1 - self.beta1) * g
            u = np.maximum(self.beta2 * u, np.abs(g))
            self.m[k], self.u[k] = m, u
            params[k] -= (self.lr / bias) * m / (u + self.eps)


# -- finite differences ------------------------------------------------------------

def central_difference(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``f()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a-b| / max(|a|, |b|, floor)``."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(build: Callable, arrays: Sequence[np.ndarray], seed=0) -> list[float]:
    """Worst relative error of tape gradients against central differences.

    The probe is ``sum(build(*params) * w)`` with a fixed random ``w``, so
    non-scalar outputs are tested in a random direction. Returns one
    maximum per input array.
    """
    rng = np.random.default_rng(seed)
    probe = {}

    def value():
        tape = Tape()
        ts = [tape.param(a, str(i)) for i, a in enumerate(arrays)]
        out = build(*ts)
        if "w" not in probe:
            probe["w"] = rng.normal(size=out.shape)
        return tape, sum_all(mul(out, tape.const(probe["w"])))

    tape, loss = value()
    grads = tape.backward(loss)
    return [
        float(relative_error(grads[str(i)], central_difference(lambda: float(value()[1].data), a)).max())
        for i, a in enumerate(arrays)
    ]


# -- checkpoint files ----------------------------------------------------------

def save_params(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "params": {
            k: {"shape": list(v.shape), "values": np.asarray(v, dtype=float).ravel().tolist()}
            for k, v in params.items()
        },
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a parameter checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = {
        k: np.array(v["values"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()
    }
    return params, doc.get("meta", {})
