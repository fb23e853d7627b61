import numpy as np
import pytest
import scipy.sparse as sp

from turbomor import ingest
from turbomor.errors import BundleError, NetlistError

RC2 = """* two-node divider
R1 a b 1
R2 b 0 1
C1 b 0 1
P1 a
.end
"""


def test_parse_value_suffixes():
    assert ingest.parse_value("10") == 10.0
    assert ingest.parse_value("4.7k") == pytest.approx(4700.0)
    assert ingest.parse_value("10p") == pytest.approx(1e-11)
    assert ingest.parse_value("2meg") == pytest.approx(2e6)
    assert ingest.parse_value("1.5e-3") == pytest.approx(1.5e-3)
    assert ingest.parse_value("100f") == pytest.approx(1e-13)
    with pytest.raises(NetlistError):
        ingest.parse_value("abc")


def test_parse_basic_netlist():
    net = ingest.parse_netlist(RC2)
    assert len(net.elements) == 3
    assert net.ports == ["a"]
    assert net.nodes == ["a", "b"]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(NetlistError) as ei:
        ingest.parse_netlist("R1 a b 1\nR1 b 0 2\nP1 a\n")
    assert ei.value.line == 2
    with pytest.raises(NetlistError, match="nonpositive"):
        ingest.parse_netlist("R1 a 0 -1\nP1 a\n")
    with pytest.raises(NetlistError, match="ground"):
        ingest.parse_netlist("R1 a 0 1\nP1 0\n")
    with pytest.raises(NetlistError, match="no ports"):
        ingest.parse_netlist("R1 a 0 1\n")
    with pytest.raises(NetlistError, match="not connected"):
        ingest.parse_netlist("R1 a 0 1\nP1 zz\n")


def test_negative_values_opt_in():
    text = "R1 a 0 -2\nP1 a\n"
    net = ingest.parse_netlist(text, allow_negative=True)
    assert net.elements[0].value == -2.0


def test_stamp_hand_checked():
    # series divider: G and C stamped against hand algebra
    sys_ = ingest.stamp(ingest.parse_netlist(RC2))
    assert sys_.node_labels == ["a", "b"]
    np.testing.assert_allclose(sys_.G.toarray(), [[1, -1], [-1, 2]])
    np.testing.assert_allclose(sys_.C.toarray(), [[0, 0], [0, 1]])
    np.testing.assert_allclose(sys_.B.toarray(), [[1], [0]])
    assert sys_.m == 2 and sys_.p == 1


def test_stamp_ports_first_ordering():
    text = "R1 x y 1\nR2 y z 1\nR3 z 0 1\nC1 y 0 1p\nP1 z\n"
    sys_ = ingest.stamp(ingest.parse_netlist(text))
    assert sys_.node_labels[0] == "z"
    assert set(sys_.node_labels) == {"x", "y", "z"}


def test_stamp_warns_on_dangling_port():
    # port connected only through its P line shows up in nodes but dangles
    net = ingest.parse_netlist("R1 a 0 1\nC1 b 0 1\nP1 a\nP2 b\n")
    sys_ = ingest.stamp(net)  # b has a cap, fine; no warning expected
    assert sys_.p == 2


def test_canonicalize_permutes_ports_to_front():
    G = sp.csc_matrix(np.diag([1.0, 2.0, 3.0]))
    C = sp.csc_matrix(np.diag([4.0, 5.0, 6.0]))
    B = sp.csc_matrix(np.array([[0.0], [0.0], [1.0]]))
    sys_ = ingest.DescriptorSystem(G, C, B, ["x", "y", "z"])
    canon = ingest.canonicalize(sys_)
    assert canon.node_labels[0] == "z"
    assert canon.G[0, 0] == 3.0
    assert canon.B[0, 0] == 1.0


def test_bundle_roundtrip(tmp_path):
    sys_ = ingest.stamp(ingest.parse_netlist(RC2))
    ingest.save_matrix_bundle(sys_, tmp_path / "b")
    back = ingest.load_matrix_bundle(tmp_path / "b")
    np.testing.assert_allclose(back.G.toarray(), sys_.G.toarray())
    np.testing.assert_allclose(back.C.toarray(), sys_.C.toarray())
    assert back.node_labels == sys_.node_labels


def test_bundle_rejects_asymmetric(tmp_path):
    from scipy.io import mmwrite

    d = tmp_path / "bad"
    d.mkdir()
    mmwrite(d / "G.mtx", sp.coo_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))
    mmwrite(d / "C.mtx", sp.coo_matrix(np.eye(2)))
    mmwrite(d / "B.mtx", sp.coo_matrix(np.array([[1.0], [0.0]])))
    with pytest.raises(BundleError, match="symmetric"):
        ingest.load_matrix_bundle(d)


def test_unstamp_roundtrip():
    sys_ = ingest.stamp(ingest.parse_netlist(RC2))
    net = ingest.unstamp(sys_.G, sys_.C, [0], node_labels=sys_.node_labels)
    sys2 = ingest.stamp(net)
    # same node set, identical matrices after matching the ordering
    perm = [sys2.node_labels.index(n) for n in sys_.node_labels]
    np.testing.assert_allclose(
        sys2.G.toarray()[np.ix_(perm, perm)], sys_.G.toarray(), atol=1e-15
    )
    np.testing.assert_allclose(
        sys2.C.toarray()[np.ix_(perm, perm)], sys_.C.toarray(), atol=1e-15
    )


def test_netlist_text_reparses():
    sys_ = ingest.stamp(ingest.parse_netlist(RC2))
    net = ingest.unstamp(sys_.G, sys_.C, [0], node_labels=sys_.node_labels)
    text = ingest.netlist_to_text(net, header_comments=["roundtrip"])
    net2 = ingest.parse_netlist(text, allow_negative=True)
    assert len(net2.elements) == len(net.elements)
