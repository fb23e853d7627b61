"""Synthetic test-case generators: on-chip bus netlists and random RC meshes.

All generators are deterministic given their arguments (and seed, where one
applies).
"""

import numpy as np
import scipy.sparse as sp

from .ingest import Element, Netlist, stamp


def bus_netlist(lines, segments, r=1.0, c=10e-15, r_term=None):
    """Parallel on-chip bus: ``lines`` independent lines, each a chain of
    ``segments`` RC segments.

    Each segment contributes two series resistors of value ``r`` with a
    capacitor ``c`` to ground at the midpoint; both line ends are ports.
    Node count is lines * (2*segments + 1), port count 2 * lines.  Each port
    is terminated to ground through ``r_term`` (default ``r``), standing in
    for driver/load impedance; this keeps the conductance matrix
    nonsingular so DC solutions and moment expansions exist.
    """
    if lines < 1 or segments < 1:
        raise ValueError("lines and segments must be positive")
    if r_term is None:
        r_term = r
    elements = []
    ports = []
    for li in range(lines):
        names = [f"l{li}n{k}" for k in range(2 * segments + 1)]
        ports.append(names[0])
        ports.append(names[-1])
        for k in range(2 * segments):
            elements.append(Element("R", f"R{li}_{k}", names[k], names[k + 1], r))
        for k in range(1, 2 * segments):
            elements.append(Element("C", f"C{li}_{k}", names[k], "0", c))
        elements.append(Element("R", f"Rt{li}a", names[0], "0", r_term))
        elements.append(Element("R", f"Rt{li}b", names[-1], "0", r_term))
    return Netlist(elements=elements, ports=ports)


def bus_system(lines, segments, r=1.0, c=10e-15):
    return stamp(bus_netlist(lines, segments, r=r, c=c))


def mesh_netlist(rows, cols, ports=4, seed=0, r_range=(0.5, 2.0), c_range=(5e-15, 2e-14)):
    """Random rows x cols RC grid with caps to ground at every node.

    Port nodes are drawn without replacement from the grid; resistor and
    capacitor values are log-uniform over the given ranges.  A sprinkling of
    resistors to ground (~10% of nodes) keeps the conductance matrix
    nonsingular, so the DC solution is well defined.
    """
    rng = np.random.default_rng(seed)
    if rows < 2 or cols < 2:
        raise ValueError("mesh needs at least a 2x2 grid")
    n = rows * cols
    if not 1 <= ports <= n:
        raise ValueError("port count out of range")

    def name(i, j):
        return f"n{i}_{j}"

    def rand(lo_hi):
        lo, hi = lo_hi
        return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))

    elements = []
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                elements.append(
                    Element("R", f"Rh{i}_{j}", name(i, j), name(i, j + 1), rand(r_range))
                )
            if i + 1 < rows:
                elements.append(
                    Element("R", f"Rv{i}_{j}", name(i, j), name(i + 1, j), rand(r_range))
                )
            elements.append(
                Element("C", f"C{i}_{j}", name(i, j), "0", rand(c_range))
            )
    flat = [name(i, j) for i in range(rows) for j in range(cols)]
    grounded = rng.choice(n, size=max(1, n // 10), replace=False)
    for k, idx in enumerate(grounded):
        elements.append(Element("R", f"Rg{k}", flat[idx], "0", rand(r_range)))
    port_nodes = [flat[k] for k in rng.choice(n, size=ports, replace=False)]
    return Netlist(elements=elements, ports=port_nodes)


def mesh_system(rows, cols, ports=4, seed=0, **kwargs):
    return stamp(mesh_netlist(rows, cols, ports=ports, seed=seed, **kwargs))


def random_system(m, p, seed=0, density=3.0, cap_floor=1e-15):
    """Random connected RC network as a stamped system (no netlist detour).

    Builds a random spanning tree plus ~``density * m`` extra resistors, caps
    to ground everywhere.  Useful for property sweeps where netlist text is
    irrelevant.
    """
    rng = np.random.default_rng(seed)
    if p >= m:
        raise ValueError("need p < m")
    rows_, cols_, vals = [], [], []

    def add_res(a, b, g):
        rows_.extend([a, b, a, b])
        cols_.extend([a, b, b, a])
        vals.extend([g, g, -g, -g])

    order = rng.permutation(m)
    for k in range(1, m):
        a = order[k]
        b = order[rng.integers(0, k)]
        add_res(int(a), int(b), float(rng.uniform(0.5, 2.0)))
    extra = int(density * m)
    a = rng.integers(0, m, size=extra)
    b = rng.integers(0, m, size=extra)
    for ai, bi in zip(a, b):
        if ai != bi:
            add_res(int(ai), int(bi), float(rng.uniform(0.5, 2.0)))
    # grounding conductances keep G nonsingular
    for i in rng.choice(m, size=max(1, m // 10), replace=False):
        rows_.append(int(i))
        cols_.append(int(i))
        vals.append(float(rng.uniform(0.5, 2.0)))
    G = sp.coo_matrix((vals, (rows_, cols_)), shape=(m, m)).tocsc()

    cdiag = rng.uniform(1.0, 3.0, size=m) * cap_floor
    C = sp.diags(cdiag, format="csc")
    B = sp.csc_matrix(
        (np.ones(p), (np.arange(p), np.arange(p))), shape=(m, p)
    )
    labels = [f"n{i}" for i in range(m)]
    from .ingest import DescriptorSystem

    return DescriptorSystem(G=G, C=C, B=B, node_labels=labels)


def rescale_time_constant(system, tau):
    """Return a copy with C scaled so the dominant time constant is ``tau``.

    The dominant constant is estimated from the largest eigenvalue of the
    pencil (C, G); intended for small verification systems only.
    """
    import scipy.linalg as sla

    from .ingest import DescriptorSystem

    Gd = system.G.toarray()
    Cd = system.C.toarray()
    w = sla.eigvalsh(Cd, Gd)
    cur = float(np.max(np.abs(w)))
    if cur == 0.0:
        raise ValueError("system has no dynamics (C = 0)")
    scale = tau / cur
    return DescriptorSystem(
        G=system.G.copy(),
        C=(system.C * scale).tocsc(),
        B=system.B.copy(),
        node_labels=list(system.node_labels),
    )
