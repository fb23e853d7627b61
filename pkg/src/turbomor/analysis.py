"""Verification oracles and simulation harness.

Moments are always computed through linear solves (never explicit
inverses); this module is the desk-scale measuring stick the reduction is
checked against, not a production path.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError


def system_matrices(model):
    """(G, C, B) from either a DescriptorSystem or a ReducedModel."""
    if hasattr(model, "Ghat"):
        return model.Ghat, model.Chat, model.Bhat
    return model.G, model.C, model.B


def _dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)


class _Solver:
    """Factor-once solver that works for sparse and dense square matrices."""

    def __init__(self, A):
        self.n = A.shape[0]
        try:
            if sp.issparse(A):
                if np.iscomplexobj(A.data):
                    A = A.astype(np.complex128)
                self._lu = spla.splu(A.tocsc())
                self._dense = None
            else:
                self._dense = sla.lu_factor(np.asarray(A))
                self._lu = None
        except (RuntimeError, ValueError) as exc:
            raise NumericalError(f"singular matrix: {exc}") from exc

    def solve(self, rhs):
        rhs = _dense(rhs)
        if self._lu is not None:
            return self._lu.solve(rhs)
        return sla.lu_solve(self._dense, rhs)


class _BlockTridiagSolver:
    """Block Cholesky (block Thomas) solver for SPD block-tridiagonal pencils.

    Factors once into per-block dense Cholesky factors plus subdiagonal
    couplings; each solve is a block forward/backward sweep.  Much cheaper
    than a general sparse or dense factorization when the blocks are small
    relative to the whole.
    """

    def __init__(self, A, block_sizes):
        A = sp.csr_matrix(A)
        off = np.cumsum([0] + list(block_sizes))
        self.off = off
        self.n = A.shape[0]
        self.L = []
        self.M = []  # M_i = E_i L_{i-1}^{-T}, i >= 1
        D = A[off[0] : off[1], off[0] : off[1]].toarray()
        for i in range(len(block_sizes)):
            if i > 0:
                E = A[off[i] : off[i + 1], off[i - 1] : off[i]].toarray()
                Mi = sla.solve_triangular(
                    self.L[i - 1], E.T, lower=True, check_finite=False
                ).T
                self.M.append(Mi)
                D = (
                    A[off[i] : off[i + 1], off[i] : off[i + 1]].toarray()
                    - Mi @ Mi.T
                )
            self.L.append(sla.cholesky(D, lower=True))

    def solve(self, rhs):
        off = self.off
        rhs = np.asarray(rhs, dtype=np.float64)
        squeeze = rhs.ndim == 1
        if squeeze:
            rhs = rhs[:, None]
        nb = len(self.L)
        y = [None] * nb
        for i in range(nb):
            r = rhs[off[i] : off[i + 1]]
            if i > 0:
                r = r - self.M[i - 1] @ y[i - 1]
            y[i] = sla.solve_triangular(
                self.L[i], r, lower=True, check_finite=False
            )
        x = [None] * nb
        for i in reversed(range(nb)):
            r = y[i]
            if i + 1 < nb:
                r = r - self.M[i].T @ x[i + 1]
            x[i] = sla.solve_triangular(
                self.L[i], r, lower=True, trans="T", check_finite=False
            )
        out = np.vstack(x)
        return out[:, 0] if squeeze else out


def _block_tridiag_sizes(model):
    """Block sizes when the model is eligible for the block Thomas path."""
    sizes = getattr(model, "block_sizes", None)
    if (
        not sizes
        or getattr(model, "dense", False)
        or getattr(model, "meta", {}).get("partitioned")
        or sum(sizes) != model.Ghat.shape[0]
        or len(sizes) < 2
    ):
        return None
    return sizes


def moments_direct(model, count):
    """First ``count`` transfer-function moments M_k = Bᵀ(−G⁻¹C)ᵏ G⁻¹B."""
    if count < 1:
        raise ValueError("count must be >= 1")
    G, C, B = system_matrices(model)
    solver = _Solver(G)
    Bd = _dense(B).astype(np.float64)
    V = solver.solve(Bd)
    moments = [Bd.T @ V]
    for _ in range(count - 1):
        V = -solver.solve(_dense(C @ V) if sp.issparse(C) else C @ V)
        moments.append(Bd.T @ V)
    return moments


def inner_subsystem_moments(G22, C22, C21, count):
    """Moments N_l of the interior transfer C21ᵀ(G22 + sC22)⁻¹C21."""
    solver = _Solver(G22)
    C21d = _dense(C21)
    V = solver.solve(C21d)
    out = [C21d.T @ V]
    for _ in range(count - 1):
        V = -solver.solve(_dense(C22 @ V) if sp.issparse(C22) else C22 @ V)
        out.append(C21d.T @ V)
    return out


def moments_recursive(B1, G11, C11, inner_moments, count):
    """Moments of the full system from the first-iteration outer blocks.

    Implements the recursion that ties the original moments to the outer
    blocks (B1, G11', C11') and the interior moments N_l: the base cases
    give M_0 and M_1, and each further order consumes interior moments up to
    order r−2.  Requires a square invertible B1.
    """
    B1 = _dense(B1)
    if B1.shape[0] != B1.shape[1]:
        raise ValueError("recursive moment formula needs a square port map B1")
    G11 = _dense(G11)
    C11 = _dense(C11)
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > 2 and len(inner_moments) < count - 2:
        raise ValueError(
            f"need {count - 2} interior moments for {count} outer moments, "
            f"got {len(inner_moments)}"
        )
    try:
        Ginv = sla.inv(G11)
        B1invT = sla.inv(B1.T)
    except sla.LinAlgError as exc:
        raise NumericalError("singular G11 block (original G singular)") from exc
    A = B1.T @ Ginv

    moments = [A @ B1]
    if count >= 2:
        moments.append(-A @ C11 @ Ginv @ B1)
    for r in range(2, count):
        total = -A @ C11 @ (B1invT @ moments[r - 1])
        for l in range(r - 1):
            total += A @ (inner_moments[l] @ (B1invT @ moments[r - l - 2]))
        moments.append(total)
    return moments


def moments_contour(model, count, radius, samples=None):
    """Taylor moments extracted by trapezoidal contour integration.

    Independent of any factorization of G; usable when G is singular but the
    transfer function is analytic at s = 0.  ``radius`` must lie inside the
    convergence disk (below the smallest pole magnitude).
    """
    N = samples or max(64, 4 * count)
    angles = 2.0 * np.pi * np.arange(N) / N
    svals = radius * np.exp(1j * angles)
    H, failures = transfer_eval(model, svals)
    if failures:
        raise NumericalError(f"singular pencil on the contour: {failures}")
    stack = np.array(H)  # (N, p, p)
    # Taylor coefficient k needs the e^{-ik theta} component, i.e. fft / N
    coeffs = np.fft.fft(stack, axis=0) / N
    out = []
    for k in range(count):
        out.append(np.real(coeffs[k]) / radius**k)
    return out


def transfer_eval(model, svals):
    """Sampled transfer matrices H(s) = Bᵀ(G + sC)⁻¹B.

    Returns ``(values, failures)``; a singular pencil at one sample is
    recorded and the run continues (its slot holds None).
    """
    G, C, B = system_matrices(model)
    Bd = _dense(B)
    values = []
    failures = []
    for s in svals:
        pencil = G + s * C
        if sp.issparse(pencil):
            pencil = pencil.tocsc().astype(np.complex128)
        else:
            pencil = np.asarray(pencil, dtype=np.complex128)
        try:
            solver = _Solver(pencil)
            X = solver.solve(Bd.astype(np.complex128))
            values.append(Bd.T @ X)
        except NumericalError:
            values.append(None)
            failures.append(complex(s))
    return values, failures


@dataclass
class PassivityReport:
    passed: bool
    details: dict = field(default_factory=dict)


def passivity_check(model, tol=1e-10, eig_limit=5000):
    """Symmetry plus non-negative definiteness of both system matrices."""
    G, C, B = system_matrices(model)
    details = {}
    passed = True
    for name, A in (("G", G), ("C", C)):
        Ad = _dense(A)
        norm = np.abs(Ad).max() if Ad.size else 0.0
        asym = np.abs(Ad - Ad.T).max() if Ad.size else 0.0
        entry = {"norm": float(norm), "asymmetry": float(asym)}
        if asym > tol * max(norm, 1e-300):
            entry["failure"] = "not symmetric"
            passed = False
        elif A.shape[0] <= eig_limit:
            w = sla.eigvalsh((Ad + Ad.T) / 2) if Ad.size else np.array([0.0])
            entry["min_eigenvalue"] = float(w[0])
            if w[0] < -tol * max(norm, 1e-300):
                entry["failure"] = "negative eigenvalue"
                entry["witness"] = float(w[0])
                passed = False
        else:
            shifted = sp.csc_matrix(A) + tol * max(norm, 1e-300) * sp.identity(
                A.shape[0]
            )
            try:
                from .linalg import cholesky

                cholesky(shifted)
                entry["cholesky_shift_ok"] = True
            except Exception:  # noqa: BLE001 - any failure means not PSD
                entry["cholesky_shift_ok"] = False
                entry["failure"] = "shifted Cholesky failed"
                passed = False
        details[name] = entry
    return PassivityReport(passed=passed, details=details)


@dataclass
class TransientResult:
    t: np.ndarray
    y: np.ndarray  # (len(t), p) port voltages
    meta: dict = field(default_factory=dict)


def transient_sim(model, sources, t_end, dt):
    """Trapezoidal integration of G x + C x' = B u with one reused factorization.

    ``sources`` is either an array of port currents sampled on the time grid
    (shape (steps+1, p)) or a callable t -> length-p vector.  The state
    starts at rest.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    G, C, B = system_matrices(model)
    p = B.shape[1]
    steps = int(round(t_end / dt))
    t = np.arange(steps + 1) * dt
    if callable(sources):
        U = np.array([np.broadcast_to(sources(tk), (p,)) for tk in t], dtype=float)
    else:
        U = np.asarray(sources, dtype=float)
        if U.shape != (steps + 1, p):
            raise ValueError(f"sources must have shape {(steps + 1, p)}, got {U.shape}")

    alpha = 2.0 / dt
    A = G + alpha * C
    M = alpha * C - G
    if sp.issparse(M):
        M = M.tocsr()
    import time as _time

    t0 = _time.perf_counter()
    sizes = _block_tridiag_sizes(model)
    if sizes is not None and sp.issparse(A):
        try:
            solver = _BlockTridiagSolver(A, sizes)
        except np.linalg.LinAlgError:
            solver = _Solver(A.tocsc())
    else:
        solver = _Solver(A.tocsc() if sp.issparse(A) else A)
    factor_time = _time.perf_counter() - t0
    Bd = B.tocsr() if sp.issparse(B) else _dense(B)
    Bt = Bd.T.tocsr() if sp.issparse(B) else Bd.T

    x = np.zeros(G.shape[0])
    Y = np.empty((steps + 1, p))
    Y[0] = Bt @ x
    t0 = _time.perf_counter()
    aC = alpha * (C.tocsr() if sp.issparse(C) else C)
    for k in range(steps):
        if k == 0:
            # two backward-Euler half-steps (same pencil as trapezoidal):
            # damps the oscillatory algebraic mode excited when the initial
            # state is inconsistent with a step input (C is singular in MNA)
            u_half = 0.5 * (U[0] + U[1])
            x = solver.solve(aC @ x + Bd @ u_half)
            x = solver.solve(aC @ x + Bd @ U[1])
        else:
            rhs = M @ x + Bd @ (U[k] + U[k + 1])
            x = solver.solve(rhs)
        Y[k + 1] = Bt @ x
    step_time = _time.perf_counter() - t0
    return TransientResult(
        t=t,
        y=Y,
        meta={
            "method": "trapezoidal",
            "dt": dt,
            "steps": steps,
            "factor_time": factor_time,
            "step_time": step_time,
        },
    )


def error_metrics(reference, candidate):
    """Elementwise error metrics between two transient results."""
    if reference.y.shape != candidate.y.shape or not np.allclose(
        reference.t, candidate.t
    ):
        raise ValueError("time grids do not match")
    diff = candidate.y - reference.y
    return {
        "max_abs_per_port": np.abs(diff).max(axis=0).tolist(),
        "global_max": float(np.abs(diff).max()),
        "rms": float(np.sqrt(np.mean(diff**2))),
    }
