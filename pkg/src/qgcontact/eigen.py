"""Lowest eigenpairs of ``K x = lambda M x`` for symmetric K and SPD M."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (DimensionMismatch, NoConvergence, NotPositiveDefinite,
                     SingularShift)

DENSE_CAP = 4000
CLUSTER_RTOL = 1e-10
SEED = 12345


@dataclass(frozen=True)
class EigenRequest:
    """Parameters of an eigen-solve.

    ``mode`` is ``"dense"``, ``"shift_invert"`` or ``"auto"`` (dense up to
    ``dense_cap`` unknowns).  ``sigma=None`` picks a shift below the
    spectrum of a positive semidefinite problem.
    """

    m: int
    mode: str = "auto"
    sigma: float | None = None
    tol: float = 1e-9
    maxiter: int | None = None
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("m must be at least 1")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.mode not in ("auto", "dense", "shift_invert"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(eq=False)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    mode: str
    sigma: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.values)

    def clusters(self, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
        return find_clusters(self.values, rtol)


def find_clusters(values, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
    """Index groups of consecutive values within ``rtol * max(1, |lambda|)``."""
    values = np.asarray(values)
    if len(values) == 0:
        return []
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[groups[-1][-1]] <= rtol * max(1.0, abs(values[i])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def _check(K, M):
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise DimensionMismatch(f"K {K.shape} and M {M.shape} must be equal square shapes")


def default_shift(K, M) -> float:
    """Shift safely below the spectrum of a PSD pencil.

    ``-0.1 * tr K / tr M`` is the mean eigenvalue scale and puts the shift
    far from the low end of the spectrum; dividing by the dimension keeps
    the shift comparable to the lowest eigenvalues while staying negative.
    """
    n = K.shape[0]
    trK = float(K.diagonal().sum())
    trM = float(M.diagonal().sum())
    return -0.1 * trK / trM / max(1, n) - 1e-3


def _dense(K, M, m):
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    try:
        sl.cholesky(Md, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("mass matrix is not positive definite") from exc
    w, V = sl.eigh(Kd, Md, subset_by_index=[0, m - 1])
    return w, V


def _shift_invert(K, M, m, sigma, tol, maxiter):
    K = sp.csc_matrix(K)
    M = sp.csc_matrix(M)
    n = K.shape[0]
    if np.any(M.diagonal() <= 0):
        raise NotPositiveDefinite("mass matrix has nonpositive diagonal")
    try:
        lu = spla.splu((K - sigma * M).tocsc())
    except RuntimeError as exc:
        raise SingularShift(f"K - sigma M is singular at sigma={sigma}") from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() <= 1e-14 * udiag.max():
        raise SingularShift(f"K - sigma M is numerically singular at sigma={sigma}")
    OPinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    rng = np.random.default_rng(SEED)
    v0 = rng.standard_normal(n)
    ncv = min(n, max(2 * m + 1, m + 40))
    try:
        w, V = spla.eigsh(K, k=m, M=M, sigma=sigma, which="LM", OPinv=OPinv, v0=v0,
                          ncv=ncv, tol=tol * 1e-3, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"ARPACK did not converge: {exc}") from exc
    order = np.argsort(w)
    return w[order], V[:, order]


def _m_normalize(V, M):
    nrm = np.sqrt(np.einsum("ij,ij->j", V, M @ V))
    return V / nrm


def residuals(K, M, values, vectors) -> np.ndarray:
    """``||K x - lambda M x|| / ||x||_M`` per column."""
    R = K @ vectors - (M @ vectors) * values[None, :]
    xm = np.sqrt(np.einsum("ij,ij->j", vectors, M @ vectors))
    return np.linalg.norm(R, axis=0) / xm


def solve(K, M, req: EigenRequest | int) -> EigenResult:
    """The ``m`` smallest eigenpairs, ascending, M-orthonormal vectors."""
    if not isinstance(req, EigenRequest):
        req = EigenRequest(int(req))
    _check(K, M)
    n = K.shape[0]
    m = min(req.m, n)
    mode = req.mode
    if mode == "auto":
        mode = "dense" if n <= req.dense_cap else "shift_invert"
    if mode == "dense" and n > req.dense_cap:
        raise DimensionMismatch(f"dense mode is capped at {req.dense_cap} unknowns, got {n}")
    if mode == "shift_invert" and m >= n - 1:
        mode = "dense"
    sigma = None
    if mode == "dense":
        w, V = _dense(K, M, m)
    else:
        sigma = default_shift(K, M) if req.sigma is None else float(req.sigma)
        w, V = _shift_invert(K, M, m, sigma, req.tol, req.maxiter)
        V = _m_normalize(V, M)
    r = residuals(K, M, w, V)
    return EigenResult(w, V, r, mode, sigma, {"n": n})


def residual_check(K, M, res: EigenResult) -> dict:
    """Recompute residuals and M-orthonormality defect independently."""
    _check(K, M)
    V = res.vectors
    if V.shape[0] != K.shape[0]:
        raise DimensionMismatch("eigenvectors do not match the matrix size")
    r = residuals(K, M, res.values, V)
    G = V.T @ (M @ V)
    orth = float(np.abs(G - np.eye(G.shape[0])).max()) if G.size else 0.0
    return {"residuals": r, "max_residual": float(r.max(initial=0.0)),
            "orthonormality_defect": orth,
            "ascending": bool(np.all(np.diff(res.values) >= 0))}


def inertia_count(K, M, lam: float) -> int:
    """Number of eigenvalues below ``lam`` from the inertia of ``K - lam M``.

    Uses a symmetric indefinite (Bunch-Kaufman) factorization and counts
    negative eigenvalues of the block-diagonal factor (Sylvester's law).
    """
    A = K - lam * M
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.shape[0] > DENSE_CAP:
        raise DimensionMismatch(f"inertia count is capped at {DENSE_CAP} unknowns")
    _, D, _ = sl.ldl(A, lower=True)
    ev = np.linalg.eigvalsh(D)
    return int((ev < 0).sum())
