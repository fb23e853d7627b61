"""Netlist parsing, MNA stamping and matrix-bundle I/O.

The canonical node ordering puts port nodes first (in netlist port order),
followed by internal nodes in first-appearance order.  Ground (node ``0``)
is eliminated at stamp time.
"""

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from .errors import BundleError, NetlistError

GROUND = "0"

_SUFFIXES = {
    "meg": 1e6,
    "k": 1e3,
    "m": 1e-3,
    "u": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
    "f": 1e-15,
}

_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|k|m|u|n|p|f)?$")


@dataclass(frozen=True)
class Element:
    kind: str  # "R" or "C"
    name: str
    node_a: str
    node_b: str
    value: float


@dataclass
class Netlist:
    elements: list = field(default_factory=list)
    ports: list = field(default_factory=list)

    @property
    def nodes(self):
        """All non-ground node names in first-appearance order."""
        seen = {}
        for e in self.elements:
            for n in (e.node_a, e.node_b):
                if n != GROUND and n not in seen:
                    seen[n] = None
        for n in self.ports:
            if n != GROUND and n not in seen:
                seen[n] = None
        return list(seen)


@dataclass
class DescriptorSystem:
    """Sparse symmetric (G, C) pair with port incidence B, ports first."""

    G: sp.csc_matrix
    C: sp.csc_matrix
    B: sp.csc_matrix
    node_labels: list

    @property
    def m(self):
        return self.G.shape[0]

    @property
    def p(self):
        return self.B.shape[1]


def parse_value(token, line=None):
    m = _VALUE_RE.match(token.lower())
    if not m:
        raise NetlistError(f"cannot parse value {token!r}", line=line)
    scale = _SUFFIXES.get(m.group(2), 1.0) if m.group(2) else 1.0
    return float(m.group(1)) * scale


def parse_netlist(text, allow_negative=False):
    """Parse netlist source into a :class:`Netlist`.

    Grammar (line oriented, case-insensitive, ``*`` comments):
        R<name> <nodeA> <nodeB> <value>
        C<name> <nodeA> <nodeB> <value>
        P<name> <node>
        .end  (optional)

    ``allow_negative`` admits negative element values, which occur in
    netlists unstamped from reduced models.
    """
    elements = []
    ports = []
    names = set()
    port_names = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("*", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith(".end"):
            break
        if line.startswith("."):
            raise NetlistError(f"unknown directive {line.split()[0]!r}", line=lineno)
        tokens = line.split()
        head = tokens[0]
        kind = head[0].upper()
        if kind in ("R", "C"):
            if len(tokens) != 4:
                raise NetlistError(
                    f"expected '<{kind}name> <nodeA> <nodeB> <value>'", line=lineno
                )
            name = head.upper()
            if name in names:
                raise NetlistError(f"duplicate element name {name!r}", line=lineno)
            names.add(name)
            value = parse_value(tokens[3], line=lineno)
            if value == 0 or (value < 0 and not allow_negative):
                raise NetlistError(
                    f"nonpositive value {tokens[3]!r} for {name}", line=lineno
                )
            elements.append(Element(kind, name, tokens[1], tokens[2], value))
        elif kind == "P":
            if len(tokens) != 2:
                raise NetlistError("expected '<Pname> <node>'", line=lineno)
            name = head.upper()
            if name in port_names:
                raise NetlistError(f"duplicate port name {name!r}", line=lineno)
            port_names.add(name)
            node = tokens[1]
            if node == GROUND:
                raise NetlistError("ground cannot be a port", line=lineno)
            if node in ports:
                raise NetlistError(f"node {node!r} declared as port twice", line=lineno)
            ports.append(node)
        else:
            raise NetlistError(f"unknown element kind {head!r}", line=lineno)
    if not ports:
        raise NetlistError("no ports declared (add at least one P line)")
    net = Netlist(elements=elements, ports=ports)
    connected = {n for e in elements for n in (e.node_a, e.node_b)}
    for node in ports:
        if node not in connected:
            raise NetlistError(f"port node {node!r} not connected to any element")
    return net


def stamp(net):
    """Stamp a netlist into a canonical :class:`DescriptorSystem`."""
    order = list(net.ports)
    index = {n: i for i, n in enumerate(order)}
    for e in net.elements:
        for n in (e.node_a, e.node_b):
            if n != GROUND and n not in index:
                index[n] = len(order)
                order.append(n)
    m = len(order)
    p = len(net.ports)

    rows_g, cols_g, vals_g = [], [], []
    rows_c, cols_c, vals_c = [], [], []
    for e in net.elements:
        rows, cols, vals = (rows_g, cols_g, vals_g) if e.kind == "R" else (
            rows_c,
            cols_c,
            vals_c,
        )
        g = 1.0 / e.value if e.kind == "R" else e.value
        a = index.get(e.node_a, -1) if e.node_a != GROUND else -1
        b = index.get(e.node_b, -1) if e.node_b != GROUND else -1
        if a >= 0:
            rows.append(a)
            cols.append(a)
            vals.append(g)
        if b >= 0:
            rows.append(b)
            cols.append(b)
            vals.append(g)
        if a >= 0 and b >= 0:
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((-g, -g))

    G = sp.coo_matrix((vals_g, (rows_g, cols_g)), shape=(m, m)).tocsc()
    C = sp.coo_matrix((vals_c, (rows_c, cols_c)), shape=(m, m)).tocsc()
    B = sp.csc_matrix(
        (np.ones(p), (np.arange(p), np.arange(p))), shape=(m, p)
    )

    occupancy = np.asarray(abs(G).sum(axis=1)).ravel() + np.asarray(
        abs(C).sum(axis=1)
    ).ravel()
    if np.any(occupancy == 0):
        dead = [order[i] for i in np.flatnonzero(occupancy == 0)]
        warnings.warn(f"nodes with no element connection: {dead}", stacklevel=2)

    return DescriptorSystem(G=G, C=C, B=B, node_labels=order)


def _port_rows(B):
    """Row index of the single unit entry in each column of B."""
    B = B.tocsc()
    rows = np.empty(B.shape[1], dtype=np.int64)
    for j in range(B.shape[1]):
        start, end = B.indptr[j], B.indptr[j + 1]
        entries = B.indices[start:end][B.data[start:end] != 0]
        if len(entries) != 1:
            raise BundleError(
                f"column {j} of B must carry exactly one unit entry, got {len(entries)}"
            )
        if not np.isclose(B.data[start:end][B.data[start:end] != 0][0], 1.0):
            raise BundleError(f"column {j} of B carries a non-unit entry")
        rows[j] = entries[0]
    if len(np.unique(rows)) != len(rows):
        raise BundleError("B selects the same row from more than one column")
    return rows


def canonicalize(system):
    """Permute a descriptor system so port rows come first."""
    rows = _port_rows(system.B)
    m = system.m
    if np.array_equal(rows, np.arange(len(rows))):
        return system
    rest = np.setdiff1d(np.arange(m), rows)
    perm = np.concatenate([rows, rest])
    G = system.G.tocsr()[perm][:, perm].tocsc()
    C = system.C.tocsr()[perm][:, perm].tocsc()
    p = len(rows)
    B = sp.csc_matrix((np.ones(p), (np.arange(p), np.arange(p))), shape=(m, p))
    labels = [system.node_labels[i] for i in perm]
    return DescriptorSystem(G=G, C=C, B=B, node_labels=labels)


def _check_symmetric(A, name):
    drift = abs(A - A.T)
    norm = abs(A).max() if A.nnz else 0.0
    if drift.nnz and drift.max() > 1e-10 * max(norm, 1e-300):
        raise BundleError(f"matrix {name} declared symmetric but is not")


def load_matrix_bundle(path):
    """Load a G/C/B Matrix Market bundle directory into a canonical system.

    Expects ``G.mtx``, ``C.mtx``, ``B.mtx`` and a JSON sidecar with at least
    ``{"m":…, "p":…}``.  A ``ports`` list of node names in the sidecar
    overrides the B file.
    """
    path = Path(path)
    try:
        G = sp.csc_matrix(mmread(path / "G.mtx"))
        C = sp.csc_matrix(mmread(path / "C.mtx"))
        B = sp.csc_matrix(mmread(path / "B.mtx"))
    except Exception as exc:  # noqa: BLE001 - surface I/O detail
        raise BundleError(f"cannot read bundle at {path}: {exc}") from exc
    sidecar = {}
    for cand in ("bundle.json", "sidecar.json"):
        if (path / cand).exists():
            sidecar = json.loads((path / cand).read_text())
            break
    m = G.shape[0]
    if G.shape != (m, m) or C.shape != (m, m) or B.shape[0] != m:
        raise BundleError(
            f"dimension mismatch: G {G.shape}, C {C.shape}, B {B.shape}"
        )
    if "m" in sidecar and sidecar["m"] != m:
        raise BundleError(f"sidecar says m={sidecar['m']} but matrices are {m}x{m}")
    _check_symmetric(G, "G")
    _check_symmetric(C, "C")
    labels = sidecar.get("nodes") or [str(i) for i in range(m)]
    if len(labels) != m:
        raise BundleError("sidecar node list length does not match m")
    if sidecar.get("ports"):
        label_index = {n: i for i, n in enumerate(labels)}
        try:
            rows = [label_index[n] for n in sidecar["ports"]]
        except KeyError as exc:
            raise BundleError(f"sidecar port {exc} is not a known node") from exc
        p = len(rows)
        B = sp.csc_matrix((np.ones(p), (rows, np.arange(p))), shape=(m, p))
    if "p" in sidecar and sidecar["p"] != B.shape[1]:
        raise BundleError(
            f"sidecar says p={sidecar['p']} but B has {B.shape[1]} columns"
        )
    system = DescriptorSystem(G=G, C=C, B=B, node_labels=labels)
    return canonicalize(system)


def save_matrix_bundle(system, path):
    """Write a system to a G/C/B bundle directory (inverse of load)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    mmwrite(path / "G.mtx", sp.coo_matrix(system.G), symmetry="symmetric")
    mmwrite(path / "C.mtx", sp.coo_matrix(system.C), symmetry="symmetric")
    mmwrite(path / "B.mtx", sp.coo_matrix(system.B))
    rows = _port_rows(system.B)
    sidecar = {
        "m": system.m,
        "p": system.p,
        "nodes": list(system.node_labels),
        "ports": [system.node_labels[i] for i in rows],
    }
    (path / "bundle.json").write_text(json.dumps(sidecar, indent=1))


def unstamp(G, C, port_rows, node_labels=None, drop_below=0.0):
    """Convert (G, C) matrices back into an equivalent Netlist.

    Off-diagonal entries become two-terminal elements, diagonal residues
    become elements to ground.  Negative values are permitted; callers embed
    the resulting netlist with a warning header when that happens.
    """
    m = G.shape[0]
    if node_labels is None:
        node_labels = [f"n{i}" for i in range(m)]
    elements = []
    counters = {"R": 0, "C": 0}

    def emit(kind, a, b, coeff):
        # coeff is a conductance (S) for R, a capacitance (F) for C
        if coeff == 0 or abs(coeff) <= drop_below:
            return
        counters[kind] += 1
        value = 1.0 / coeff if kind == "R" else coeff
        elements.append(Element(kind, f"{kind}{counters[kind]}", a, b, value))

    for kind, A in (("R", sp.csc_matrix(G)), ("C", sp.csc_matrix(C))):
        # residue = full row sum (diagonal plus all off-diagonals) -> ground
        rowsum = np.asarray(A.sum(axis=1)).ravel()
        offdiag = sp.coo_matrix(sp.triu(A, k=1))
        for i, j, v in zip(offdiag.row, offdiag.col, offdiag.data):
            emit(kind, node_labels[i], node_labels[j], -v)
        for i in range(m):
            emit(kind, node_labels[i], GROUND, rowsum[i])

    ports = [node_labels[i] for i in port_rows]
    return Netlist(elements=elements, ports=ports)


def netlist_to_text(net, header_comments=()):
    lines = [f"* {c}" for c in header_comments]
    for e in net.elements:
        lines.append(f"{e.name} {e.node_a} {e.node_b} {float(e.value)!r}")
    for i, node in enumerate(net.ports, start=1):
        lines.append(f"P{i} {node}")
    lines.append(".end")
    return "\n".join(lines) + "\n"
