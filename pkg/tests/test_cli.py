import csv
import json

import numpy as np
import pytest

from turbomor import cli

RC2 = "R1 a b 1\nR2 b 0 1\nC1 b 0 1\nP1 a\n"


@pytest.fixture
def rc2(tmp_path):
    f = tmp_path / "rc2.sp"
    f.write_text(RC2)
    return f


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_reduce_writes_bundle_and_report(rc2, tmp_path):
    out = tmp_path / "rom"
    code = run("reduce", "--netlist", rc2, "--q", "1", "--out", out)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["rom_order"] == 1
    assert report["config"]["q"] == 1
    assert (out / "rom.G.mtx").exists()


def test_reduce_q_zero_is_usage_error(rc2, tmp_path):
    assert run("reduce", "--netlist", rc2, "--q", "0", "--out", tmp_path / "x") == 2


def test_reduce_missing_input_is_input_error(tmp_path):
    code = run("reduce", "--netlist", tmp_path / "nope.sp", "--q", "1",
               "--out", tmp_path / "x")
    assert code == 3


def test_reduce_bad_netlist_is_input_error(tmp_path):
    bad = tmp_path / "bad.sp"
    bad.write_text("R1 a 0 -5\nP1 a\n")
    assert run("reduce", "--netlist", bad, "--q", "1", "--out", tmp_path / "x") == 3


def test_reduce_numerical_failure_exit_code(tmp_path):
    # all-capacitor interior overflows promotion -> exit 4
    lines = ["R1 a 0 1"]
    prev = "a"
    for k in range(8):
        lines.append(f"C{k} {prev} x{k} 1")
        prev = f"x{k}"
    lines.append("P1 a")
    f = tmp_path / "caps.sp"
    f.write_text("\n".join(lines))
    assert run("reduce", "--netlist", f, "--q", "2", "--out", tmp_path / "x") == 4


def test_verify_pass_and_fail(rc2, tmp_path):
    out = tmp_path / "rom"
    run("reduce", "--netlist", rc2, "--q", "1", "--out", out)
    assert run("verify", "--netlist", rc2, "--rom", out, "--moments", "2") == 0
    # a q=1 ROM does not match the 3rd moment
    code = run("verify", "--netlist", rc2, "--rom", out, "--moments", "4",
               "--out", tmp_path / "v.json")
    assert code == 1
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["checks"]["moments"]["witness"]["moment"] >= 2


def test_verify_passivity_catches_corruption(rc2, tmp_path):
    out = tmp_path / "rom"
    run("reduce", "--netlist", rc2, "--q", "2", "--out", out)
    assert run("verify", "--netlist", rc2, "--rom", out, "--passivity") == 0
    # corrupt the bundle: flip a diagonal sign in rom.C.mtx
    from scipy.io import mmread, mmwrite
    import scipy.sparse as sp

    C = mmread(out / "rom.C.mtx").toarray()
    C[0, 0] = -abs(C[0, 0]) - 1.0
    mmwrite(out / "rom.C.mtx", sp.coo_matrix(C), symmetry="symmetric")
    assert run("verify", "--netlist", rc2, "--rom", out, "--passivity") == 1


def test_verify_requires_a_check(rc2, tmp_path):
    out = tmp_path / "rom"
    run("reduce", "--netlist", rc2, "--q", "1", "--out", out)
    assert run("verify", "--netlist", rc2, "--rom", out) == 2


def test_simulate_roundtrip(rc2, tmp_path):
    src = tmp_path / "src.csv"
    with open(src, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "port1"])
        w.writerow([0.0, 1.0])
        w.writerow([10.0, 1.0])
    out = tmp_path / "wave.csv"
    code = run("simulate", "--model", rc2, "--sources", src,
               "--t-end", "10", "--dt", "0.01", "--out", out)
    assert code == 0
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert abs(data["port1"][-1] - 2.0) < 1e-4  # analytic steady state


def test_simulate_zero_sources(rc2, tmp_path):
    out = tmp_path / "wave.csv"
    code = run("simulate", "--model", rc2, "--t-end", "1", "--dt", "0.1",
               "--out", out)
    assert code == 0
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert np.all(data["port1"] == 0)


def test_simulate_bad_dt(rc2, tmp_path):
    assert run("simulate", "--model", rc2, "--t-end", "1", "--dt", "-0.1",
               "--out", tmp_path / "w.csv") == 2


def test_simulate_reference_metrics(rc2, tmp_path):
    ref = tmp_path / "ref.csv"
    run("simulate", "--model", rc2, "--t-end", "1", "--dt", "0.1", "--out", ref)
    out = tmp_path / "out.csv"
    met = tmp_path / "met.json"
    code = run("simulate", "--model", rc2, "--t-end", "1", "--dt", "0.1",
               "--out", out, "--reference", ref, "--metrics-out", met)
    assert code == 0
    metrics = json.loads(met.read_text())
    assert metrics["errors"]["global_max"] == 0.0


def test_bench_csv_shape(tmp_path):
    out = tmp_path / "bench.csv"
    code = run("bench", "--input", "mesh:6x6", "--methods", "turbomor", "prima",
               "--q", "1", "--repeats", "1", "--out", out)
    assert code == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["example", "method", "q", "reduce_time", "sim_time",
                       "rom_order", "nnz"]
    assert len(rows) == 3


def test_bench_empty_suite(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("bench", "--out", out) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1  # header only


def test_gen_bus_counts(tmp_path):
    out = tmp_path / "bus.sp"
    assert run("gen-bus", "--lines", "3", "--segments", "4", "--out", out) == 0
    from turbomor import ingest

    sys_ = ingest.stamp(ingest.parse_netlist(out.read_text()))
    assert sys_.m == 3 * (2 * 4 + 1)
    assert sys_.p == 6


def test_gen_mesh_deterministic(tmp_path):
    a, b = tmp_path / "a.sp", tmp_path / "b.sp"
    run("gen-mesh", "--rows", "5", "--cols", "5", "--seed", "7", "--out", a)
    run("gen-mesh", "--rows", "5", "--cols", "5", "--seed", "7", "--out", b)
    assert a.read_text() == b.read_text()


def test_reduce_partitioned_cli(tmp_path):
    mesh = tmp_path / "mesh.sp"
    run("gen-mesh", "--rows", "10", "--cols", "10", "--ports", "4",
        "--seed", "3", "--out", mesh)
    out = tmp_path / "rom"
    code = run("reduce", "--netlist", mesh, "--q", "2", "--partition",
               "--leaf-size", "30", "--out", out)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["report"]["partition_count"] >= 2
