"""Random graph generators, planted permutations and the edge-flip noise model.

Graphs are stored dense. Every generator takes an explicit seed (anything
accepted by :func:`numpy.random.default_rng`), so output is a pure function of
its arguments.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

import numpy as np

from .errors import GenerationError, ParameterError

REGULAR_RETRY_BUDGET = 1000


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric adjacency matrix on ``n`` nodes."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ParameterError(f"adjacency must be square, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ParameterError("adjacency must be symmetric")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def edges(self) -> list[list[int]]:
        """Unordered edges ``[i, j]`` with ``i < j``, in row-major order."""
        i, j = np.nonzero(np.triu(self.adj, k=1))
        return [[int(a), int(b)] for a, b in zip(i, j)]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Iterable[int]]) -> "Graph":
        adj = np.zeros((n, n))
        for i, j in edges:
            adj[i, j] = adj[j, i] = 1.0
        return cls(adj)

    def __eq__(self, other):
        return isinstance(other, Graph) and np.array_equal(self.adj, other.adj)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={int(np.triu(self.adj, 1).sum())})"


@dataclass(frozen=True)
class NoiseSpec:
    """Edge-flip noise: delete each edge w.p. ``p_e``, insert each non-edge w.p. ``p_e2``.

    ``p_e2 = p_e * p / (1 - p)`` keeps the expected edge density at ``p``.
    """

    p_e: float
    p: float
    p_e2: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.p_e <= 1.0:
            raise ParameterError(f"p_e must lie in [0, 1], got {self.p_e}")
        if not 0.0 < self.p < 1.0:
            raise ParameterError(f"density p must lie in (0, 1), got {self.p}")
        p_e2 = self.p_e * self.p / (1.0 - self.p)
        if p_e2 > 1.0:
            raise ParameterError(
                f"insertion probability p_e*p/(1-p) = {p_e2:.4g} exceeds 1; "
                "lower p_e or p"
            )
        object.__setattr__(self, "p_e2", p_e2)


def check_permutation(pi, n: int | None = None) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.ndim != 1 or not np.issubdtype(pi.dtype, np.integer):
        raise ParameterError("permutation must be a 1-d integer array")
    if n is not None and len(pi) != n:
        raise ParameterError(f"permutation has length {len(pi)}, expected {n}")
    if not np.array_equal(np.sort(pi), np.arange(len(pi))):
        raise ParameterError("permutation is not a bijection on 0..n-1")
    return pi


def permutation_matrix(pi) -> np.ndarray:
    """Matrix ``P`` with ``P[pi[i], i] = 1``, so ``(P x)[pi[i]] = x[i]``."""
    pi = check_permutation(pi)
    P = np.zeros((len(pi), len(pi)))
    P[pi, np.arange(len(pi))] = 1.0
    return P


def compose(tau, sigma) -> np.ndarray:
    """``tau ∘ sigma``: i -> tau[sigma[i]]."""
    return np.asarray(tau)[np.asarray(sigma)]


def random_permutation(n: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {p}")


def _symmetric_from_upper(mask: np.ndarray) -> np.ndarray:
    upper = np.triu(mask, k=1)
    return (upper | upper.T).astype(float)


def erdos_renyi(n: int, p: float, seed) -> Graph:
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    _check_prob("p", p)
    rng = np.random.default_rng(seed)
    return Graph(_symmetric_from_upper(rng.random((n, n)) < p))


def random_regular(n: int, deg: int, seed) -> Graph:
    """Uniform-ish random ``deg``-regular simple graph.

    Uses the incremental pairing algorithm of Steger and Wormald (the one
    analysed by Kim and Vu): stubs are paired at random, only pairs that keep
    the graph simple are accepted, and leftover stubs are re-paired. A run
    that gets stuck is restarted, up to ``REGULAR_RETRY_BUDGET`` times.
    """
    if n < 1 or deg < 0 or deg >= n:
        raise ParameterError(f"need 0 <= deg < n, got n={n}, deg={deg}")
    if (n * deg) % 2:
        raise ParameterError(f"n*deg must be even, got n={n}, deg={deg}")
    rng = np.random.default_rng(seed)
    if deg == 0:
        return Graph(np.zeros((n, n)))
    for _ in range(REGULAR_RETRY_BUDGET):
        adj = _pairing_attempt(n, deg, rng)
        if adj is not None:
            return Graph(adj)
    raise GenerationError(
        f"no {deg}-regular graph on {n} nodes after {REGULAR_RETRY_BUDGET} attempts"
    )


def _pairing_attempt(n, deg, rng):
    adj = np.zeros((n, n), dtype=bool)
    stubs = np.repeat(np.arange(n), deg)
    while stubs.size:
        rng.shuffle(stubs)
        left = []
        for a, b in zip(stubs[0::2], stubs[1::2]):
            if a != b and not adj[a, b]:
                adj[a, b] = adj[b, a] = True
            else:
                left.extend((a, b))
        if not left:
            break
        stubs = np.array(left)
        if not _has_suitable_pair(stubs, adj):
            return None
    return adj.astype(float)


def _has_suitable_pair(stubs, adj) -> bool:
    nodes = np.unique(stubs)
    sub = adj[np.ix_(nodes, nodes)]
    np.fill_diagonal(sub, True)
    return not sub.all()


def permute(g: Graph, pi) -> Graph:
    """Relabel node ``i`` as ``pi[i]``: ``out.adj[pi[i], pi[j]] == g.adj[i, j]``."""
    pi = check_permutation(pi, g.n)
    out = np.empty_like(g.adj)
    out[np.ix_(pi, pi)] = g.adj
    return Graph(out)


def perturb(g: Graph, spec: NoiseSpec, seed) -> Graph:
    """Flip edges as ``G ⊙ (1 - Q) + (1 - G) ⊙ Q'`` on unordered pairs."""
    rng = np.random.default_rng(seed)
    n = g.n
    delete = rng.random((n, n)) < spec.p_e
    insert = rng.random((n, n)) < spec.p_e2
    edge = g.adj > 0
    new = np.where(edge, ~delete, insert)
    return Graph(_symmetric_from_upper(new))


@dataclass(frozen=True)
class InstanceConfig:
    """How to draw one planted pair."""

    model: str = "er"
    n: int = 50
    p: float = 0.2
    deg: int = 10
    p_e: float = 0.0

    def __post_init__(self):
        if self.model not in ("er", "regular"):
            raise ParameterError(f"model must be 'er' or 'regular', got {self.model!r}")
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")

    @property
    def density(self) -> float:
        if self.model == "er":
            return self.p
        return self.deg / (self.n - 1)

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model, "n": self.n, "p": self.p, "deg": self.deg, "p_e": self.p_e}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InstanceConfig":
        return cls(**d)


def make_instance(cfg: InstanceConfig, seed, pi=None) -> tuple[Graph, Graph, np.ndarray]:
    """Planted sample ``(G1, G2, pi)`` with ``G2 = perturb(permute(G1, pi))``.

    Node ``i`` of ``G1`` corresponds to node ``pi[i]`` of ``G2``. Pass ``pi`` to
    force a permutation instead of drawing it uniformly.
    """
    ss = np.random.SeedSequence(_entropy(seed))
    s_graph, s_perm, s_noise = ss.spawn(3)
    if cfg.model == "er":
        g1 = erdos_renyi(cfg.n, cfg.p, s_graph)
    else:
        g1 = random_regular(cfg.n, cfg.deg, s_graph)
    if pi is None:
        pi = np.random.default_rng(s_perm).permutation(cfg.n)
    pi = check_permutation(pi, cfg.n)
    g2 = permute(g1, pi)
    if cfg.p_e > 0:
        g2 = perturb(g2, NoiseSpec(cfg.p_e, cfg.density), s_noise)
    return g1, g2, pi


def _entropy(seed):
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return int(seed)


def derive_seed(master_seed: int, *index: int) -> list[int]:
    """Per-sample seed that is independent of scheduling order."""
    return [int(master_seed), *map(int, index)]


# JSON-lines dataset files: one planted sample per line.

def sample_to_record(g1: Graph, g2: Graph, pi, cfg: InstanceConfig, seed) -> dict[str, Any]:
    return {
        "n": g1.n,
        "edges1": g1.edges(),
        "edges2": g2.edges(),
        "perm": [int(v) for v in pi],
        "cfg": cfg.to_dict(),
        "seed": seed,
    }


def record_to_sample(rec: dict[str, Any]) -> tuple[Graph, Graph, np.ndarray]:
    n = rec["n"]
    return (
        Graph.from_edges(n, rec["edges1"]),
        Graph.from_edges(n, rec["edges2"]),
        check_permutation(np.array(rec["perm"], dtype=int), n),
    )


def write_dataset(path, records: Iterable[dict[str, Any]]) -> int:
    count = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            count += 1
    return count


def read_dataset(path) -> Iterator[dict[str, Any]]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def generate_records(cfg: InstanceConfig, count: int, seed: int) -> Iterator[dict[str, Any]]:
    for i in range(count):
        s = derive_seed(seed, i)
        g1, g2, pi = make_instance(cfg, s)
        yield sample_to_record(g1, g2, pi, cfg, s)
