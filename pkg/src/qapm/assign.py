"""Exact linear assignment and QAP objective evaluation."""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .graphgen import Graph, check_permutation


def lap_solve(C) -> tuple[np.ndarray, float]:
    """Minimum-cost perfect matching by shortest augmenting paths, O(n^3).

    Returns ``(sigma, cost)`` where row ``i`` is assigned to column
    ``sigma[i]``. Rows are inserted in index order and ties go to the lowest
    column index, so the result is deterministic.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ParameterError(f"cost matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ParameterError("cost matrix has non-finite entries")
    n = C.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int), 0.0

    # 1-based potentials/matching with a virtual column 0, as in the classic
    # Kuhn-Munkres formulation.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[j]: row assigned to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used
            free[0] = False
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free[1:], minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    sigma = np.empty(n, dtype=int)
    sigma[match[1:] - 1] = np.arange(n)
    return sigma, float(C[np.arange(n), sigma].sum())


def assignment_matrix(pi) -> np.ndarray:
    """``X[i, pi[i]] = 1``: node ``i`` of the first graph maps to ``pi[i]`` of the second."""
    pi = check_permutation(pi)
    X = np.zeros((len(pi), len(pi)))
    X[np.arange(len(pi)), pi] = 1.0
    return X


def _as_matrix(g):
    return g.adj if isinstance(g, Graph) else np.asarray(g, dtype=float)


def qap_objective(A, B, pi) -> tuple[float, float]:
    """``(trace(A X B X^T), ||A X - X B||_F^2)`` for the assignment ``pi``.

    The Frobenius value is 0 exactly when ``pi`` is an isomorphism from ``A``
    to ``B``.
    """
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape != B.shape:
        raise ShapeError(f"size mismatch {A.shape} vs {B.shape}")
    pi = check_permutation(pi, A.shape[0])
    trace = float((A * B[np.ix_(pi, pi)]).sum())
    X = assignment_matrix(pi)
    frob = float(((A @ X - X @ B) ** 2).sum())
    return trace, frob


def recovery(perm_hat, pi) -> float:
    """Fraction of nodes whose predicted partner equals the planted one."""
    perm_hat = np.asarray(perm_hat)
    pi = np.asarray(pi)
    if perm_hat.shape != pi.shape:
        raise ShapeError("prediction and ground truth differ in length")
    return float(np.mean(perm_hat == pi)) if len(pi) else 1.0
