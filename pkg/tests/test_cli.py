import csv
import json

import pytest

from artifact.cli import EXIT_INPUT, EXIT_OK, main


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def manifest(path):
    return json.loads(path.with_name(path.name + ".manifest.json").read_text())


def test_dissociation_exact(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dissociation", "--mode", "exact", "--runs", "1", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 16
    assert list(rows[0]) == [
        "R", "E_exact_0", "E_exact_1", "E_exact_2", "E_exact_3", "E_vqe",
        "E_eom_1", "E_eom_2", "E_eom_3", "err_vqe", "err_eom_1", "err_eom_2", "err_eom_3",
    ]
    for r in rows:
        assert float(r["err_vqe"]) >= -1e-12
    m = manifest(out)
    assert m["exit_code"] == 0 and m["error"] is None and m["seed"] == 0
    assert m["outputs"] == [str(out)]
    assert m["config_paths"][0].endswith("h2_sto3g.csv")


def test_dissociation_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["dissociation", "--mode", "shots:256", "--runs", "1", "--seed", "4", "--out", str(p)]) == 0
    assert a.read_text() == b.read_text()


def test_dissociation_noisy_small_grid(tmp_path):
    out = tmp_path / "n.csv"
    from artifact.device import bundled_device_path

    code = main(["dissociation", "--device", str(bundled_device_path()), "--grid", "21x21", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out)
    assert all(float(r["err_vqe"]) > 0 for r in rows)


def test_missing_table_is_input_error(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dissociation", "--table", str(tmp_path / "none.csv"), "--out", str(out)]) == EXIT_INPUT
    assert not out.exists()
    m = manifest(out)
    assert m["exit_code"] == EXIT_INPUT and "ParseError" in m["error"]


@pytest.mark.parametrize(
    "argv",
    [
        ["t2-sweep", "--t2", ""],
        ["t2-sweep", "--t2", "100,-5"],
        ["rb", "--noise", "thermal"],
        ["rb", "--noise", "depolarizing:2"],
        ["depth", "--qubits", "1", "--blocks", "2"],
    ],
)
def test_input_errors_write_manifest(tmp_path, argv):
    out = tmp_path / "x.out"
    assert main(argv + ["--out", str(out)]) == EXIT_INPUT
    assert manifest(out)["exit_code"] == EXIT_INPUT


@pytest.mark.parametrize("argv", [["dissociation", "--grid", "abc"], ["nope"], ["rb", "--lengths", "1,x"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_INPUT


def test_depth_command(tmp_path):
    out = tmp_path / "depth.json"
    assert main(["depth", "--qubits", "10", "--blocks", "14", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["depth"] == 28 and rep["runtime_matches_reference"] is True


def test_rb_depolarizing(tmp_path):
    out = tmp_path / "rb.csv"
    argv = ["rb", "--noise", "depolarizing:0.02", "--lengths", "1,2,4,8", "--nseq", "3", "--out", str(out)]
    assert main(argv) == EXIT_OK
    fit = json.loads(out.with_name("rb.csv.fit.json").read_text())
    assert fit["epg"] == pytest.approx(0.015, rel=0.05)
    assert len(read_csv(out)) == 4


def test_qpt_theta_sweep(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["qpt", "--sweep", "theta", "--points", "4", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert [float(r["duration_ns"]) for r in rows] == pytest.approx([42.5, 85.0, 127.5, 170.0])
    fit = json.loads(out.with_name("q.csv.fit.json").read_text())
    assert fit["decay_time_us"] > 0
