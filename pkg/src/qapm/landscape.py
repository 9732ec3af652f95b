"""Optimization landscape of the linear polynomial-embedding model.

A graph ``A`` is embedded as ``P_beta(A) Y`` with ``P_beta(A) = sum_j beta_j A^j``
and ``Y`` Gaussian. The alignment loss is a ratio of quadratic forms in
``beta`` whose coefficient matrices are Krylov moment matrices
``Q(A, B)_rs = <A^r y, B^s y>``. This module computes those matrices, the
sampled and mean-field losses with their gradients, the Cholesky-based
maximizer of the mean-field quotient, semicircle moments, and Monte Carlo
sweeps that measure how fast sampled quadratic forms concentrate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import DegenerateInputError, NotSPDError, NumericError, ParameterError

OVERFLOW_LIMIT = 1e150


@dataclass(frozen=True)
class WignerSpec:
    """Random symmetric ``A = n^(-scale) W`` and ``B = A + nu``.

    ``nu`` is symmetric Gaussian with entry standard deviation
    ``noise_level / sqrt(n)`` (diagonal included).
    """

    n: int = 100
    scale: float = 0.5
    noise_level: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")


@dataclass
class MomentMatrices:
    QAB: np.ndarray
    QAA: np.ndarray
    QBB: np.ndarray
    symmetrized: bool = True

    @property
    def denominator(self) -> np.ndarray:
        return self.QAA + self.QBB


def symmetric_gaussian(n: int, rng, std: float = 1.0) -> np.ndarray:
    G = rng.standard_normal((n, n)) * std
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def sample_wigner(spec: WignerSpec, rng) -> np.ndarray:
    return symmetric_gaussian(spec.n, rng) * spec.n ** (-spec.scale)


def sample_pair(spec: WignerSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    A = sample_wigner(spec, rng)
    if spec.noise_level == 0:
        return A, A.copy()
    return A, A + symmetric_gaussian(spec.n, rng, spec.noise_level / np.sqrt(spec.n))


def krylov_vectors(A: np.ndarray, Y: np.ndarray, d: int) -> np.ndarray:
    """Stack ``[Y, A Y, ..., A^d Y]`` along a new leading axis."""
    out = [Y]
    for _ in range(d):
        nxt = A @ out[-1]
        if not np.all(np.abs(nxt) < OVERFLOW_LIMIT):
            raise NumericError(
                "Krylov vectors overflow; renormalize the matrix (e.g. scale by n^-1/2) "
                "or lower the degree"
            )
        out.append(nxt)
    return np.stack(out)


def _gram(KA, KB):
    # KA, KB: (d+1, n) or (d+1, n, k); sum over nodes and columns.
    return np.tensordot(KA, KB, axes=(list(range(1, KA.ndim)), list(range(1, KB.ndim))))


def krylov_moments(A, B, y, d: int, symmetrize: bool = True) -> MomentMatrices:
    """Moment matrices for one vector ``y`` of shape ``(n,)``, or summed over the columns of ``(n, k)``."""
    if d < 0:
        raise ParameterError(f"degree must be >= 0, got {d}")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.shape != B.shape or A.shape[0] != y.shape[0]:
        raise ParameterError(f"incompatible shapes {A.shape}, {B.shape}, {y.shape}")
    KA = krylov_vectors(A, y, d)
    KB = krylov_vectors(B, y, d)
    QAB = _gram(KA, KB)
    if symmetrize:
        QAB = 0.5 * (QAB + QAB.T)
    return MomentMatrices(QAB, _gram(KA, KA), _gram(KB, KB), symmetrize)


def eigen_expansion_moments(A, B, y, d: int) -> np.ndarray:
    """``sum_{i,i'} lam_i^r mu_i'^s y_i y~_i' <e_i, e~_i'>``, unsymmetrized."""
    lam, E = np.linalg.eigh(A)
    mu, F = np.linalg.eigh(B)
    ya = E.T @ y
    yb = F.T @ y
    overlap = E.T @ F
    core = ya[:, None] * overlap * yb[None, :]
    r = np.arange(d + 1)
    PA = lam[None, :] ** r[:, None]
    PB = mu[None, :] ** r[:, None]
    return PA @ core @ PB.T


def quotient(R: np.ndarray, S: np.ndarray, beta: np.ndarray) -> float:
    beta = np.asarray(beta, dtype=float)
    den = beta @ S @ beta
    if not den > 0:
        raise DegenerateInputError(f"denominator quadratic form is {den:.3g}; need > 0")
    return float(beta @ R @ beta / den)


def quotient_grad(R: np.ndarray, S: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of ``beta^T R beta / beta^T S beta`` for symmetric ``R``, ``S``."""
    num = beta @ R @ beta
    den = beta @ S @ beta
    if not den > 0:
        raise DegenerateInputError(f"denominator quadratic form is {den:.3g}; need > 0")
    return 2.0 * (R @ beta * den - S @ beta * num) / den ** 2


def loss_beta(mm: MomentMatrices, beta) -> float:
    R = mm.QAB if mm.symmetrized else 0.5 * (mm.QAB + mm.QAB.T)
    return -quotient(R, mm.denominator, beta)


def loss_beta_grad(mm: MomentMatrices, beta) -> np.ndarray:
    R = mm.QAB if mm.symmetrized else 0.5 * (mm.QAB + mm.QAB.T)
    return -quotient_grad(R, mm.denominator, np.asarray(beta, dtype=float))


@dataclass
class QuotientMaximum:
    beta: np.ndarray
    value: float
    ridge: float = 0.0


def meanfield_opt(S, R, ridge: bool = False) -> QuotientMaximum:
    """Maximize ``beta^T R beta / beta^T S beta`` via ``S = C C^T``.

    The maximizer is ``C^-T v`` with ``v`` the top eigenvector of
    ``C^-1 R C^-T``. If ``S`` is not positive definite a :class:`NotSPDError`
    is raised, unless ``ridge`` is set, in which case ``1e-10 * trace(S)`` is
    added to the diagonal and reported in the result.
    """
    S = np.asarray(S, dtype=float)
    R = 0.5 * (np.asarray(R, dtype=float) + np.asarray(R, dtype=float).T)
    added = 0.0
    try:
        C = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        if not ridge:
            raise NotSPDError(
                "denominator matrix is not positive definite; retry with ridge=True "
                "to add 1e-10*trace to the diagonal"
            ) from None
        added = 1e-10 * np.trace(S)
        try:
            C = np.linalg.cholesky(S + added * np.eye(len(S)))
        except np.linalg.LinAlgError:
            raise NotSPDError("denominator matrix is not positive definite even after ridge") from None
    M = linalg.solve_triangular(C, linalg.solve_triangular(C, R, lower=True).T, lower=True)
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    beta = linalg.solve_triangular(C.T, V[:, -1], lower=False)
    beta /= np.linalg.norm(beta)
    if beta[np.argmax(np.abs(beta))] < 0:  # fix the sign so results are reproducible
        beta = -beta
    return QuotientMaximum(beta, float(w[-1]), added)


def semicircle_density(x, sigma2: float = 1.0):
    x = np.asarray(x, dtype=float)
    return sigma2 / (2 * np.pi) * np.sqrt(np.clip(4.0 - x ** 2, 0.0, None))


def semicircle_moment(m: int, sigma2: float = 1.0) -> float:
    """``sigma2/(2 pi) * integral_{-2}^{2} x^m sqrt(4 - x^2) dx`` by quadrature."""
    if m < 0:
        raise ParameterError(f"moment order must be >= 0, got {m}")
    if m % 2:
        return 0.0
    # weight='alg' integrates f(x) (x+2)^0.5 (2-x)^0.5 exactly at the endpoints.
    val, _ = integrate.quad(lambda x: x ** m, -2.0, 2.0, weight="alg", wvar=(0.5, 0.5),
                            epsabs=1e-13, epsrel=1e-13)
    return sigma2 * val / (2 * np.pi)


def catalan(k: int) -> int:
    from math import comb
    return comb(2 * k, k) // (k + 1)


def spectral_moments(A: np.ndarray, max_power: int) -> np.ndarray:
    """``[(1/n) sum_i lam_i^m for m = 0..max_power]``."""
    lam = np.linalg.eigvalsh(A)
    return np.array([np.mean(lam ** m) for m in range(max_power + 1)])


def expected_moments(A: np.ndarray, d: int, sigma2: float = 1.0, k: int = 1) -> np.ndarray:
    """Closed-form ``E_Y Q(A,A)_rs = k sigma2 sum_i lam_i^(r+s)``."""
    lam = np.linalg.eigvalsh(A)
    r = np.arange(d + 1)
    powers = lam[None, :] ** (r[:, None] + r[None, :])[..., None]
    return k * sigma2 * powers.sum(axis=-1)


def expected_cross_moments(A: np.ndarray, B: np.ndarray, d: int, sigma2: float = 1.0, k: int = 1) -> np.ndarray:
    """Closed-form ``E_Y Q(A,B)_rs = k sigma2 tr(A^r B^s)``, symmetrized."""
    PA = [np.eye(len(A))]
    PB = [np.eye(len(B))]
    for _ in range(d):
        PA.append(PA[-1] @ A)
        PB.append(PB[-1] @ B)
    # A^r and B^s are symmetric, so tr(A^r B^s) = sum of the entrywise product.
    Q = np.array([[np.sum(PA[r] * PB[s]) for s in range(d + 1)] for r in range(d + 1)])
    return k * sigma2 * 0.5 * (Q + Q.T)


def random_unit_vectors(rng, count: int, dim: int) -> np.ndarray:
    V = rng.standard_normal((count, dim))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def concentration_eps(Q: np.ndarray, EQ: np.ndarray, betas: np.ndarray) -> float:
    """``max_beta |b^T Q b - b^T EQ b| / b^T EQ b`` over the rows of ``betas``."""
    q = np.einsum("ij,jk,ik->i", betas, Q, betas)
    e = np.einsum("ij,jk,ik->i", betas, EQ, betas)
    return float(np.max(np.abs(q - e) / e))


@dataclass
class SweepRow:
    n: int
    d: int
    k: int
    trial_count: int
    metric_name: str
    mean: float
    std: float
    seed: int

    def as_tuple(self):
        return (self.n, self.d, self.k, self.trial_count, self.metric_name, self.mean, self.std, self.seed)


SWEEP_COLUMNS = ("n", "d", "k", "trial_count", "metric_name", "mean", "std", "seed")


def concentration_sweep(spec: WignerSpec, d: int, k: int, sizes, trials: int, seed: int,
                        n_beta: int = 256) -> list[SweepRow]:
    """Mean and spread of the empirical concentration level at each size.

    For each trial: draw ``A``, draw ``Y`` (``n x k``), and compare
    ``beta^T Q(A,A) beta`` against its closed-form expectation over ``Y`` for
    ``n_beta`` random unit ``beta``, keeping the worst relative deviation.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ParameterError("sizes must be ascending")
    rows = []
    for n in sizes:
        eps = []
        for t in range(trials):
            rng = np.random.default_rng([seed, n, t])
            s = WignerSpec(n, spec.scale, spec.noise_level, spec.sigma2)
            A = sample_wigner(s, rng)
            Y = rng.standard_normal((n, k)) * np.sqrt(spec.sigma2)
            KA = krylov_vectors(A, Y, d)
            Q = _gram(KA, KA)
            EQ = expected_moments(A, d, spec.sigma2, k)
            eps.append(concentration_eps(Q, EQ, random_unit_vectors(rng, n_beta, d + 1)))
        rows.append(SweepRow(n, d, k, trials, "eps_hat", float(np.mean(eps)),
                             float(np.std(eps, ddof=1)) if trials > 1 else 0.0, seed))
    return rows


@dataclass
class GradientGap:
    n: int
    distance: np.ndarray  # per trial ||grad L_hat - grad g||
    term1: np.ndarray
    term2: np.ndarray
    eps_hat: np.ndarray

    @property
    def mean_distance(self) -> float:
        return float(np.mean(self.distance))


def gradient_gap(spec: WignerSpec, beta, n: int, trials: int, seed: int, k: int = 1) -> GradientGap:
    """Distance between the sampled and mean-field loss gradients at ``beta``.

    The mean-field matrices ``E_{A,B,Y} Q`` are estimated by averaging the
    closed-form ``Y``-expectations over the ``trials`` draws of ``(A, B)``.
    Also returns the two terms of the concentration bound on that distance,
    with ``S`` the ``Y``-expectation of ``Q(A,A) + Q(B,B)`` for the same draw
    and ``eps`` the draw's own concentration level at ``beta``.
    """
    beta = np.asarray(beta, dtype=float)
    d = len(beta) - 1
    s = WignerSpec(n, spec.scale, spec.noise_level, spec.sigma2)
    draws = []
    for t in range(trials):
        rng = np.random.default_rng([seed, n, t])
        A, B = sample_pair(s, rng)
        Y = rng.standard_normal((n, k)) * np.sqrt(spec.sigma2)
        mm = krylov_moments(A, B, Y, d)
        S = expected_moments(A, d, spec.sigma2, k) + expected_moments(B, d, spec.sigma2, k)
        EAB = expected_cross_moments(A, B, d, spec.sigma2, k)
        draws.append((mm, S, EAB))
    R_bar = np.mean([x[2] for x in draws], axis=0)
    S_bar = np.mean([x[1] for x in draws], axis=0)
    grad_g = -quotient_grad(R_bar, S_bar, beta)
    dist, t1, t2, eps = [], [], [], []
    for mm, S, _ in draws:
        St = mm.denominator
        L = loss_beta(mm, beta)
        dist.append(np.linalg.norm(loss_beta_grad(mm, beta) - grad_g))
        qt, qs = beta @ St @ beta, beta @ S @ beta
        e = abs(qt - qs) / qs
        t1.append(0.5 * abs(1 / qt - 1 / qs) * np.linalg.norm(R_bar @ beta))
        t2.append(0.5 * abs(L) * np.linalg.norm((1 + e) * St @ beta / qt - S @ beta / qs))
        eps.append(e)
    return GradientGap(n, np.array(dist), np.array(t1), np.array(t2), np.array(eps))


def gradient_gap_rows(gaps: list[GradientGap], d: int, k: int, seed: int) -> list[SweepRow]:
    rows = []
    for gap in gaps:
        for name, vals in (("grad_distance", gap.distance), ("bound_term1", gap.term1),
                           ("bound_term2", gap.term2), ("eps_hat", gap.eps_hat)):
            rows.append(SweepRow(gap.n, d, k, len(vals), name, float(np.mean(vals)),
                                 float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0, seed))
    return rows


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(r.as_tuple())
