"""Siamese GNN encoder and softmax matching head.

Each layer computes ``x <- rho(bn(sum_B B x theta_B))`` over the operator
family; the per-operator weights of a layer are stored stacked as one
``(K*d_in, d_out)`` matrix in family order. Both graphs of a pair go through
the same weights.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .assign import lap_solve, recovery
from .errors import ConfigError, NumericError, ParameterError, ShapeError
from .graphgen import Graph
from .operators import DEFAULT_J, build_family

INPUT_FEATURES = ("degree", "two_hop_degree")
BN_MODES = ("batch_stats", "running_stats", "none")


@dataclass(frozen=True)
class GnnConfig:
    layers: int = 20
    feat: int = 20
    J: int = DEFAULT_J
    input_feature: str = "degree"
    bn_mode: str = "running_stats"
    logit_scale: float = 10.0

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.feat < 2 or self.feat % 2:
            raise ConfigError(f"feat must be even and >= 2, got {self.feat}")
        if self.J < 0:
            raise ConfigError(f"J must be >= 0, got {self.J}")
        if self.input_feature not in INPUT_FEATURES:
            raise ConfigError(f"input_feature must be one of {INPUT_FEATURES}")
        if self.bn_mode not in BN_MODES:
            raise ConfigError(f"bn_mode must be one of {BN_MODES}")

    @property
    def family_size(self) -> int:
        return self.J + 4

    def dims(self) -> list[int]:
        return [1] + [self.feat] * self.layers

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GnnModel:
    cfg: GnnConfig
    params: dict[str, np.ndarray]
    bn: list[dc.BatchNormState] = field(default_factory=list)

    @classmethod
    def init(cls, cfg: GnnConfig, seed) -> "GnnModel":
        rng = np.random.default_rng(seed)
        K = cfg.family_size
        params = {}
        dims = cfg.dims()
        for k in range(cfg.layers):
            din, dout = dims[k], dims[k + 1]
            a = np.sqrt(6.0 / (din + dout))
            params[f"layer{k}.W"] = rng.uniform(-a, a, size=(K * din, dout))
            params[f"layer{k}.gamma"] = np.ones(dout)
            params[f"layer{k}.beta"] = np.zeros(dout)
        bn = [dc.BatchNormState.fresh(dims[k + 1]) for k in range(cfg.layers)]
        return cls(cfg, params, bn)

    def weight_block(self, layer: int, op: int) -> np.ndarray:
        """The ``d_in x d_out`` weight applied after operator ``op``."""
        W = self.params[f"layer{layer}.W"]
        din = self.cfg.dims()[layer]
        return W[op * din:(op + 1) * din]

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        for k, s in enumerate(self.bn):
            out[f"layer{k}.running_mean"] = s.mean
            out[f"layer{k}.running_var"] = s.var
        return out

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"gnn": self.cfg.to_dict(), **(extra_meta or {})}
        dc.save_params(path, self.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> tuple["GnnModel", dict]:
        arrays, meta = dc.load_params(path)
        if "gnn" not in meta:
            raise ConfigError(f"{path}: checkpoint lacks a gnn config")
        cfg = GnnConfig.from_dict(meta["gnn"])
        model = cls.init(cfg, 0)
        for name, ref in model.state_arrays().items():
            if name not in arrays or arrays[name].shape != ref.shape:
                raise ConfigError(f"{path}: parameter {name!r} missing or misshapen")
        model.params = {k: arrays[k] for k in model.params}
        for k, s in enumerate(model.bn):
            s.mean = arrays[f"layer{k}.running_mean"]
            s.var = arrays[f"layer{k}.running_var"]
        return model, meta


@dataclass
class MatchOutcome:
    soft: np.ndarray
    perm_hat: np.ndarray
    recovery: float | None = None


def init_features(g: Graph, kind: str = "degree") -> np.ndarray:
    A = g.adj
    if kind == "degree":
        return A.sum(axis=1, keepdims=True)
    if kind == "two_hop_degree":
        within2 = np.minimum(1.0, A + A @ A)
        np.fill_diagonal(within2, 0.0)
        return within2.sum(axis=1, keepdims=True)
    raise ParameterError(f"unknown input feature {kind!r}")


def prepare(graphs: Sequence[Graph], cfg: GnnConfig) -> tuple[np.ndarray, np.ndarray]:
    """Operator stacks ``(B, K, n, n)`` and input features ``(B, n, 1)``."""
    ops = np.stack([build_family(g, cfg.J).ops for g in graphs])
    x0 = np.stack([init_features(g, cfg.input_feature) for g in graphs])
    return ops, x0


def forward(model: GnnModel, ops: np.ndarray, x0: np.ndarray, tape: dc.Tape | None = None,
            bn_mode: str | None = None, update_stats: bool = False, normalize: bool = True,
            grad: bool = True):
    """Run the encoder on a batch; returns ``(tape, embeddings, params)``.

    ``params`` maps names to the tape leaves so a caller can backpropagate.
    With ``grad=False`` the weights enter as constants and nothing is recorded.
    """
    cfg = model.cfg
    mode = bn_mode or cfg.bn_mode
    tape = tape or dc.Tape()
    if not isinstance(ops, dc.StackedOperators):
        ops = dc.StackedOperators(ops)
    p = {k: tape.param(v, k) if grad else tape.const(v) for k, v in model.params.items()}
    x = tape.const(x0)
    for k in range(cfg.layers):
        z = dc.matmul(dc.graph_apply(ops, x), p[f"layer{k}.W"])
        if mode != "none":
            z = dc.bnorm(z, p[f"layer{k}.gamma"], p[f"layer{k}.beta"], model.bn[k],
                         mode=mode, update=update_stats)
        x = dc.split_rho(z)
        if not np.all(np.isfinite(x.data)):
            raise NumericError(f"non-finite activations at layer {k}")
    if normalize:
        x = dc.row_normalize(x)
    return tape, x, p


def encode(model: GnnModel, g: Graph, bn_mode: str | None = None, normalize: bool = True) -> np.ndarray:
    """Node embeddings ``(n, feat)`` of a single graph."""
    ops, x0 = prepare([g], model.cfg)
    _, e, _ = forward(model, ops, x0, bn_mode=bn_mode, normalize=normalize, grad=False)
    return e.data[0]


def _pair_embeddings(model, g1, g2, bn_mode=None):
    if g1.n != g2.n:
        raise ParameterError(f"graphs differ in size: {g1.n} vs {g2.n}")
    ops, x0 = prepare([g1, g2], model.cfg)
    _, e, _ = forward(model, ops, x0, bn_mode=bn_mode, grad=False)
    return e.data[0], e.data[1]


def soft_assignment(e1: np.ndarray, e2: np.ndarray, logit_scale: float = 1.0) -> np.ndarray:
    logits = logit_scale * (e1 @ e2.T)
    logits -= logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    return ex / ex.sum(axis=1, keepdims=True)


def decode(soft: np.ndarray, rule: str = "argmax") -> np.ndarray:
    if rule == "argmax":
        return np.argmax(soft, axis=1)
    if rule == "lap":
        return lap_solve(-np.log(soft))[0]
    raise ParameterError(f"unknown decode rule {rule!r}")


def match(model: GnnModel, g1: Graph, g2: Graph, truth=None, decode_rule: str = "argmax",
          bn_mode: str | None = None) -> MatchOutcome:
    e1, e2 = _pair_embeddings(model, g1, g2, bn_mode)
    soft = soft_assignment(e1, e2, model.cfg.logit_scale)
    perm_hat = decode(soft, decode_rule)
    rec = recovery(perm_hat, truth) if truth is not None else None
    return MatchOutcome(soft, perm_hat, rec)


def batch_loss(model: GnnModel, samples: Sequence[tuple[Graph, Graph, np.ndarray]],
               bn_mode: str | None = None, update_stats: bool = False):
    """Mean cross-entropy over a batch of planted pairs.

    All graphs of the batch share batch-norm statistics. Returns
    ``(tape, loss, params, soft)`` with ``soft`` of shape ``(B, n, n)``.
    """
    if not samples:
        raise ParameterError("empty batch")
    n = samples[0][0].n
    if any(g1.n != n or g2.n != n for g1, g2, _ in samples):
        raise ShapeError("all graphs in a batch must have the same size")
    B = len(samples)
    ops, x0 = prepare([s[0] for s in samples] + [s[1] for s in samples], model.cfg)
    tape, e, p = forward(model, ops, x0, bn_mode=bn_mode, update_stats=update_stats)
    half1 = dc.take(e, slice(0, B))
    half2 = dc.take(e, slice(B, 2 * B))
    logits = dc.matmul(half1, dc.transpose(half2))
    if model.cfg.logit_scale != 1.0:
        logits = dc.scale(logits, model.cfg.logit_scale)
    soft = dc.row_softmax(logits)
    pis = np.stack([np.asarray(s[2]) for s in samples])
    loss = dc.xent(soft, pis)
    return tape, loss, p, soft.data


def loss_and_grads(model: GnnModel, samples, update_stats: bool = True):
    """Batch loss, gradients keyed by parameter name, and per-sample recovery."""
    tape, loss, _, soft = batch_loss(model, samples, bn_mode="batch_stats", update_stats=update_stats)
    grads = tape.backward(loss)
    recs = [recovery(np.argmax(s, axis=1), smp[2]) for s, smp in zip(soft, samples)]
    return float(loss.data), grads, recs
