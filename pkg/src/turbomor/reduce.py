"""TurboMOR reduction engine.

Iteration 1 eliminates resistive port/interior coupling through a sparse
Cholesky congruence (with promotion of rows that make the interior
conductance block singular).  Iterations 2..q whiten the interior, QR-factor
the input-to-state block with Householder reflections, and peel off one
block of the reduced model per iteration.  The interior capacitance is only
ever touched through its factored congruence chain.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from . import ingest
from .config import DEFAULT_CONFIG
from .errors import BundleError, NotPositiveDefiniteError, PromotionOverflowError
from .linalg import (
    CholeskyFactor,
    apply_q,
    cholesky,
    householder_qr,
    schur_congruence,
    symmetrize,
)

SCHEMA_VERSION = 1


@dataclass
class ReducedModel:
    Ghat: object  # csc matrix, or ndarray when dense=True
    Chat: object
    Bhat: object
    q: int
    p_eff: int
    block_sizes: list
    promoted_rows: list
    provenance: list
    truncated: bool = False
    dense: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def order(self):
        return self.Ghat.shape[0]

    @property
    def p(self):
        return self.Bhat.shape[1]


@dataclass
class ReductionReport:
    moments_matched: int
    promoted_row_count: int
    fill_stats: list
    timings: dict
    truncated: bool = False
    notes: list = field(default_factory=list)
    partition_count: int = 1

    def to_dict(self):
        return {
            "moments_matched": self.moments_matched,
            "promoted_row_count": self.promoted_row_count,
            "fill_stats": self.fill_stats,
            "timings": self.timings,
            "truncated": self.truncated,
            "notes": self.notes,
            "partition_count": self.partition_count,
        }


@dataclass
class InnerState:
    """Interior system carried between iterations, capacitance kept factored."""

    K: CholeskyFactor
    C22p: sp.csc_matrix  # interior capacitance in the Cholesky-permuted frame
    C21: np.ndarray  # current input-to-state block
    chain: list = field(default_factory=list)  # (HouseholderFactor, width)
    n_cur: int = 0
    whitened: bool = False


@dataclass
class Iteration1Result:
    G11p: np.ndarray
    C11p: np.ndarray
    B1: sp.csc_matrix
    inner: InnerState
    promoted: list  # original row indices promoted into the port block
    p_eff: int
    fill_in: int


def make_inner_state(K, C21, C22):
    perm = K.perm
    C22p = C22.tocsr()[perm][:, perm].tocsc()
    return InnerState(K=K, C22p=C22p, C21=np.asarray(C21), n_cur=K.n)


def reduce_iteration1(system, config=DEFAULT_CONFIG):
    """Resistive decoupling of ports and interior (first TurboMOR iteration).

    Attempts a Cholesky factorization of the interior conductance block;
    rows that defeat it are promoted into the port block one at a time.
    """
    tol = config.tolerances
    G, C, B = system.G.tocsr(), system.C.tocsr(), system.B.tocsc()
    m, p = system.m, system.p

    promoted = []
    internal = list(range(p, m))
    limit = max(1, int(tol.promotion_fraction * max(m - p, 1)))
    while True:
        idx1 = np.array(list(range(p)) + promoted, dtype=np.int64)
        idx2 = np.array([i for i in internal if i not in set(promoted)], dtype=np.int64)
        G22 = G[idx2][:, idx2].tocsc()
        try:
            K = cholesky(
                G22,
                ordering=config.cholesky_ordering,
                pivot_delta=tol.pivot_delta,
            )
            break
        except NotPositiveDefiniteError as err:
            promoted.append(int(idx2[err.pivot_index]))
            if len(promoted) > limit:
                raise PromotionOverflowError(len(promoted), limit) from err

    p_eff = len(idx1)
    G11 = G[idx1][:, idx1].toarray()
    G21 = G[idx2][:, idx1].tocsc()
    C11 = C[idx1][:, idx1].toarray()
    C21 = C[idx2][:, idx1].tocsc()
    C22 = C[idx2][:, idx2].tocsc()
    B1 = B[idx1]

    G11p, C11p, C21p = schur_congruence(G11, G21, C11, C21, C22, K)
    inner = make_inner_state(K, C21p, C22)
    return Iteration1Result(
        G11p=G11p,
        C11p=C11p,
        B1=B1.tocsc(),
        inner=inner,
        promoted=promoted,
        p_eff=p_eff,
        fill_in=K.fill_in,
    )


def _chain_apply(state, X, level):
    """Apply the implicit interior capacitance C22^(level+1) to a dense block.

    ``level`` counts Householder factors to unwind; level 0 is the whitened
    base operator K⁻¹ C22 K⁻ᵀ.
    """
    if level == 0:
        return state.K.solve_lower(state.C22p @ state.K.solve_lower_t(X))
    F, w = state.chain[level - 1]
    lifted = np.zeros((F.rows, X.shape[1]), order="F")
    lifted[w:] = X
    Y = apply_q(F, "left", lifted)
    Y = _chain_apply(state, Y, level - 1)
    Y = apply_q(F, "left_transpose", Y)
    return np.asarray(Y[w:], order="F")


def reduce_iteration_j(state, j):
    """One Householder decomposition step (iterations j >= 2).

    Returns ``(C11j, Rj, truncated)`` and shrinks the inner state by the
    block width.  ``truncated`` is set when the remaining interior was
    thinner than the block width, ending the recursion.
    """
    if j < 2:
        raise ValueError("iterations start at j=2; use reduce_iteration1 first")
    if state.n_cur <= 0:
        raise ValueError("interior is exhausted")
    if not state.whitened:
        # fold the G22 -> I whitening into the first input-to-state block
        T = state.K.solve_lower(state.C21[state.K.perm])
        state.whitened = True
    else:
        T = state.C21
    r, w_prev = T.shape
    F, R = householder_qr(T)
    w = min(r, w_prev)

    S = np.zeros((r, w), order="F")
    S[:w] = np.eye(w)
    S = apply_q(F, "left", S)
    Y = _chain_apply(state, S, len(state.chain))
    Z = apply_q(F, "left_transpose", Y)
    C11j = symmetrize(Z[:w])
    state.chain.append((F, w))
    state.C21 = np.asarray(Z[w:], order="F")
    state.n_cur = r - w
    return C11j, np.asarray(R[:w]), r < w_prev


def turbomor_reduce(system, q, config=DEFAULT_CONFIG):
    """Full TurboMOR reduction to a block-structured model of order ~ q * p."""
    if not isinstance(q, (int, np.integer)) or q < 1:
        raise ValueError(f"q must be a positive integer, got {q!r}")
    system = ingest.canonicalize(system)
    timings = {}
    t0 = time.perf_counter()
    it1 = reduce_iteration1(system, config)
    timings["iteration1"] = time.perf_counter() - t0

    diag_blocks = [it1.C11p]
    couplings = []
    truncated = False
    state = it1.inner
    t0 = time.perf_counter()
    for j in range(2, q + 1):
        if state.n_cur <= 0:
            truncated = True
            break
        C11j, Rj, trunc = reduce_iteration_j(state, j)
        diag_blocks.append(C11j)
        couplings.append(Rj)
        truncated = truncated or trunc
    timings["iterations_2_to_q"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = _assemble(system, it1, diag_blocks, couplings, q, truncated)
    timings["assembly"] = time.perf_counter() - t0

    report = ReductionReport(
        moments_matched=2 * len(diag_blocks),
        promoted_row_count=len(it1.promoted),
        fill_stats=[{"iteration": 1, "cholesky_fill_in": it1.fill_in}],
        timings=timings,
        truncated=truncated,
    )
    return model, report


def _assemble(system, it1, diag_blocks, couplings, q, truncated):
    p_eff = it1.p_eff
    sizes = [p_eff] + [b.shape[0] for b in diag_blocks[1:]]
    nblocks = len(diag_blocks)

    g_blocks = [sp.csc_matrix(it1.G11p)]
    g_blocks += [sp.identity(w, format="csc") for w in sizes[1:]]
    Ghat = sp.block_diag(g_blocks, format="csc")

    grid = [[None] * nblocks for _ in range(nblocks)]
    for i, blk in enumerate(diag_blocks):
        grid[i][i] = sp.csc_matrix(blk)
    # alternate block sign flips put the couplings in the -R convention
    for i, R in enumerate(couplings, start=1):
        grid[i][i - 1] = sp.csc_matrix(-R)
        grid[i - 1][i] = sp.csc_matrix(-R.T)
    Chat = sp.bmat(grid, format="csc")

    n = sum(sizes)
    Bhat = sp.vstack(
        [it1.B1, sp.csc_matrix((n - p_eff, system.p))], format="csc"
    )

    provenance = [
        {"block": i, "iteration": i + 1, "width": int(sizes[i]), "partition": 0}
        for i in range(nblocks)
    ]
    promoted_labels = [system.node_labels[i] for i in it1.promoted]
    return ReducedModel(
        Ghat=Ghat,
        Chat=Chat,
        Bhat=Bhat,
        q=q,
        p_eff=p_eff,
        block_sizes=sizes,
        promoted_rows=promoted_labels,
        provenance=provenance,
        truncated=truncated,
        dense=False,
    )


def export_rom(model, path, fmt="bundle"):
    """Write a reduced model as a matrix bundle or an unstamped netlist."""
    path = Path(path)
    if fmt == "bundle":
        path.mkdir(parents=True, exist_ok=True)
        mmwrite(path / "rom.G.mtx", sp.coo_matrix(model.Ghat), symmetry="symmetric")
        mmwrite(path / "rom.C.mtx", sp.coo_matrix(model.Chat), symmetry="symmetric")
        mmwrite(path / "rom.B.mtx", sp.coo_matrix(model.Bhat))
        (path / "rom.json").write_text(json.dumps(_model_meta(model), indent=1))
        return [path / n for n in ("rom.G.mtx", "rom.C.mtx", "rom.B.mtx", "rom.json")]
    if fmt == "netlist":
        Bc = sp.csc_matrix(model.Bhat)
        port_rows = ingest._port_rows(Bc)
        net = ingest.unstamp(
            sp.csc_matrix(model.Ghat), sp.csc_matrix(model.Chat), port_rows
        )
        negatives = sum(1 for e in net.elements if e.value < 0)
        header = [
            f"reduced model, order {model.order}, q={model.q}, p_eff={model.p_eff}",
        ]
        if negatives:
            header.append(
                f"warning: {negatives} element(s) have negative values "
                "(valid for reduced-model equivalents)"
            )
        text = ingest.netlist_to_text(net, header_comments=header)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return [path]
    raise ValueError(f"unknown export format {fmt!r}")


def _model_meta(model):
    boundaries = np.cumsum([0] + list(model.block_sizes)).tolist()
    return {
        "schema_version": SCHEMA_VERSION,
        "q": model.q,
        "p": model.p,
        "p_eff": model.p_eff,
        "order": model.order,
        "block_sizes": [int(s) for s in model.block_sizes],
        "block_boundaries": boundaries,
        "promoted_rows": list(model.promoted_rows),
        "provenance": model.provenance,
        "truncated": model.truncated,
        "dense": model.dense,
        "meta": model.meta,
    }


def load_rom_bundle(path):
    """Read back a reduced-model bundle written by :func:`export_rom`."""
    path = Path(path)
    try:
        G = sp.csc_matrix(mmread(path / "rom.G.mtx"))
        C = sp.csc_matrix(mmread(path / "rom.C.mtx"))
        B = sp.csc_matrix(mmread(path / "rom.B.mtx"))
        meta = json.loads((path / "rom.json").read_text())
    except Exception as exc:  # noqa: BLE001
        raise BundleError(f"cannot read ROM bundle at {path}: {exc}") from exc
    dense = bool(meta.get("dense", False))
    return ReducedModel(
        Ghat=G.toarray() if dense else G,
        Chat=C.toarray() if dense else C,
        Bhat=B.toarray() if dense else B,
        q=meta["q"],
        p_eff=meta["p_eff"],
        block_sizes=meta["block_sizes"],
        promoted_rows=meta["promoted_rows"],
        provenance=meta["provenance"],
        truncated=meta["truncated"],
        dense=dense,
        meta=meta.get("meta", {}),
    )
