"""Sparse symmetric kernels: Cholesky, factored Householder QR, congruence.

The Cholesky factorization is delegated to SuperLU in symmetric mode with a
pre-applied fill-reducing permutation; the factor ``K`` (lower triangular,
``K Kᵀ = P A Pᵀ``) is extracted so triangular solves against ``K`` and
``Kᵀ`` stay available.  Orthogonal QR factors are kept in the packed
reflector form returned by LAPACK ``geqrf`` and applied through ``ormqr``;
the dense ``Q`` is never materialized.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import NotPositiveDefiniteError, NumericalError

_SPLU_OPTS = dict(
    permc_spec="NATURAL", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)
)


@dataclass
class CholeskyFactor:
    """Lower-triangular K with K Kᵀ = A[perm][:, perm]."""

    K: sp.csc_matrix
    perm: np.ndarray
    n: int
    fill_in: int
    _lu: object = field(repr=False, default=None)
    _klu: object = field(repr=False, default=None)
    _inv_perm: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._inv_perm is None:
            self._inv_perm = np.argsort(self.perm)

    def solve(self, rhs):
        """A⁻¹ · rhs in the original (unpermuted) row order."""
        rhs = _as_dense(rhs)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, factor order is {self.n}")
        if self.n == 0:
            return rhs.copy()
        out = self._lu.solve(np.asarray(rhs[self.perm], dtype=np.float64, order="F"))
        return out[self._inv_perm]

    def solve_lower(self, rhs):
        """K⁻¹ · rhs; rhs already lives in the permuted frame."""
        if self.n == 0:
            return _as_dense(rhs).copy()
        return self._triangular().solve(_as_dense(rhs))

    def solve_lower_t(self, rhs):
        """K⁻ᵀ · rhs; rhs already lives in the permuted frame."""
        if self.n == 0:
            return _as_dense(rhs).copy()
        return self._triangular().solve(_as_dense(rhs), trans="T")

    def _triangular(self):
        if self._klu is None:
            self._klu = spla.splu(self.K, **_SPLU_OPTS)
        return self._klu


@dataclass
class HouseholderFactor:
    """Packed Householder reflectors (LAPACK geqrf layout) for an r x p QR."""

    qr: np.ndarray
    tau: np.ndarray

    @property
    def rows(self):
        return self.qr.shape[0]

    @property
    def cols(self):
        return self.qr.shape[1]


def _as_dense(X):
    if sp.issparse(X):
        X = X.toarray()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def cholesky(A, ordering="fill_reducing", pivot_delta=1e-12):
    """Sparse Cholesky of a symmetric positive-definite matrix.

    Raises :class:`NotPositiveDefiniteError` (with the offending row index in
    the caller's coordinates) when a pivot falls at or below
    ``pivot_delta * max(diag)``; this is the signal that drives row promotion.
    """
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if n == 0:
        return CholeskyFactor(
            K=sp.csc_matrix((0, 0)), perm=np.arange(0), n=0, fill_in=0
        )
    diag = A.diagonal()
    max_diag = diag.max() if n else 0.0
    threshold = pivot_delta * max(max_diag, 0.0)
    bad = np.flatnonzero(diag <= threshold)
    if len(bad):
        raise NotPositiveDefiniteError(bad[0], diag[bad[0]])

    if ordering == "natural":
        perm = np.arange(n)
        Ap = A
    elif ordering == "fill_reducing":
        perm = np.asarray(reverse_cuthill_mckee(A, symmetric_mode=True))
        Ap = A[perm][:, perm].tocsc()
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    try:
        lu = spla.splu(Ap, **_SPLU_OPTS)
    except RuntimeError as exc:
        idx, val = _locate_bad_pivot(Ap, threshold)
        if idx is not None:
            raise NotPositiveDefiniteError(perm[idx], val) from exc
        raise NumericalError(f"factorization failed: {exc}") from exc

    d = lu.U.diagonal()
    low = np.flatnonzero(d <= threshold)
    if len(low):
        raise NotPositiveDefiniteError(perm[low[0]], d[low[0]])
    K = (lu.L @ sp.diags(np.sqrt(d))).tocsc()
    fill_in = int(K.nnz - sp.tril(Ap).nnz)
    return CholeskyFactor(K=K, perm=perm, n=n, fill_in=fill_in, _lu=lu)


def _locate_bad_pivot(Ap, threshold, dense_limit=5000):
    """Find the first failing Cholesky pivot of a (permuted) matrix."""
    n = Ap.shape[0]
    if n > dense_limit:
        return None, None
    A = Ap.toarray()
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= threshold:
            return j, pivot
        L[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return None, None


def chol_solve(factor, rhs):
    """A⁻¹ · rhs through the two triangular solves of the factorization."""
    return factor.solve(rhs)


def householder_qr(M):
    """QR of a dense block in factored form: Qᵀ M = [R; 0].

    Returns ``(HouseholderFactor, R)`` with R upper triangular
    (upper trapezoidal when M has fewer rows than columns).  The sign
    convention is whatever LAPACK geqrf produces.
    """
    M = _as_dense(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("QR input contains non-finite entries")
    (qr, tau), R = sla.qr(M, mode="raw")
    return HouseholderFactor(qr=qr, tau=tau), np.ascontiguousarray(R)


def apply_q(factor, side, X):
    """Apply the implicit Q of a HouseholderFactor without densifying it.

    ``side``: ``left`` (Q·X), ``left_transpose`` (Qᵀ·X), ``right`` (X·Q),
    ``right_transpose`` (X·Qᵀ).
    """
    lapack_side, trans = {
        "left": ("L", "N"),
        "left_transpose": ("L", "T"),
        "right": ("R", "N"),
        "right_transpose": ("R", "T"),
    }[side]
    X = np.asfortranarray(_as_dense(X))
    r = factor.rows
    expect = X.shape[0] if lapack_side == "L" else X.shape[1]
    if expect != r:
        raise ValueError(f"operand dimension {expect} does not match Q order {r}")
    k = len(factor.tau)
    if k == 0:
        return X.copy()
    a = factor.qr[:, :k]
    (ormqr,) = sla.get_lapack_funcs(("ormqr",), (a,))
    _, work, info = ormqr(lapack_side, trans, a, factor.tau, X, lwork=-1)
    out, _, info = ormqr(
        lapack_side, trans, a, factor.tau, X, lwork=max(1, int(work[0]))
    )
    if info != 0:
        raise NumericalError(f"ormqr failed with info={info}")
    return out


def symmetrize(A):
    return (A + A.T) / 2.0


def schur_congruence(G11, G21, C11, C21, C22, K):
    """Port-block update of the first reduction iteration.

    Returns (G11', C11', C21') with
        G11' = G11 − G21ᵀ A22⁻¹ G21
        C11' = C11 − G21ᵀA22⁻¹C21 − C21ᵀA22⁻¹G21 + G21ᵀA22⁻¹ C22 A22⁻¹G21
        C21' = C21 − C22 A22⁻¹ G21
    where A22 = K Kᵀ.  The intermediate W = A22⁻¹ G21 is computed once.
    """
    n2 = K.n
    for name, mat, rows in (("G21", G21, n2), ("C21", C21, n2), ("C22", C22, n2)):
        if mat.shape[0] != rows:
            raise ValueError(f"{name} has {mat.shape[0]} rows, expected {rows}")
    W = K.solve(G21)
    G21d = _as_dense(G21)
    C21d = _as_dense(C21)
    CW = C22 @ W
    C21W = C21d.T @ W
    G11p = symmetrize(_as_dense(G11) - G21d.T @ W)
    C11p = symmetrize(_as_dense(C11) - C21W - C21W.T + W.T @ CW)
    C21p = C21d - CW
    return G11p, C11p, C21p
