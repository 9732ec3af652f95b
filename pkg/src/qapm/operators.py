"""Graph-intrinsic linear operators fed to every GNN layer.

The family is ``[I, D, A, A_1, ..., A_J, U]``: identity, degree, adjacency,
thresholded powers ``A_j = min(1, A^(2^j))`` and the global average. The
ordering is part of the checkpoint contract, so do not reorder it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .graphgen import Graph

DEFAULT_J = 2


def thresholded_powers(adj: np.ndarray, J: int) -> list[np.ndarray]:
    """``[min(1, A^2), min(1, A^4), ..., min(1, A^(2^J))]``.

    Built by repeated boolean squaring; the support of a power of a
    non-negative matrix only depends on the support of its factors. Diagonal
    entries produced by closed walks are kept.
    """
    out = []
    cur = (adj != 0).astype(float)
    for _ in range(J):
        cur = np.minimum(1.0, cur @ cur)
        out.append(cur)
    return out


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    ops: np.ndarray  # (J + 4, n, n)
    J: int

    @property
    def n(self) -> int:
        return self.ops.shape[1]

    def __len__(self):
        return self.ops.shape[0]

    def names(self) -> list[str]:
        return family_names(self.J)

    def apply(self, idx: int, F: np.ndarray) -> np.ndarray:
        if not 0 <= idx < len(self):
            raise ParameterError(f"operator index {idx} out of range for family of size {len(self)}")
        F = np.asarray(F, dtype=float)
        if F.shape[0] != self.n:
            raise ShapeError(f"features have {F.shape[0]} rows, graph has {self.n} nodes")
        return self.ops[idx] @ F


def family_names(J: int) -> list[str]:
    return ["I", "D", "A"] + [f"A{j}" for j in range(1, J + 1)] + ["U"]


def build_family(g: Graph, J: int = DEFAULT_J) -> OperatorFamily:
    if J < 0:
        raise ParameterError(f"J must be >= 0, got {J}")
    n = g.n
    A = g.adj
    ops = [np.eye(n), np.diag(A.sum(axis=1)), A.copy()]
    ops += thresholded_powers(A, J)
    ops.append(np.full((n, n), 1.0 / n))
    stack = np.stack(ops)
    stack.setflags(write=False)
    return OperatorFamily(stack, J)
