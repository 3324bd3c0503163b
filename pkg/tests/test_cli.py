import csv
import json

import numpy as np
import pytest

from affinehs import library
from affinehs.cli import main
from affinehs.params import save_params
from affinehs.symcone import sym_to_json


@pytest.fixture
def mc_param_file(tmp_path):
    s = library.get("mc2-00")
    path = tmp_path / "params.json"
    save_params(s.params, path)
    return s, str(path)


def _write_matrix(path, mat):
    path.write_text(json.dumps(sym_to_json(np.asarray(mat, dtype=float))))
    return str(path)


def test_validate_pass(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    code = main(["validate", "--params", pfile, "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "admissibility.json").read_text())
    assert report["all_passed"]
    assert {c["condition"] for c in report["conditions"]} == {"i_a", "i_b", "ii", "iii", "iv"}


def test_validate_flags_bad_drift(tmp_path):
    obj = {"dim": 2, "b": sym_to_json(np.diag([-1.0, 0.0])), "B": {}, "m": {}, "mu": {}}
    pfile = tmp_path / "bad_drift.json"
    pfile.write_text(json.dumps(obj))
    code = main(["validate", "--params", str(pfile), "--out", str(tmp_path)])
    assert code == 1
    report = json.loads((tmp_path / "admissibility.json").read_text())
    failing = [c["condition"] for c in report["conditions"] if not c["passed"]]
    assert failing == ["ii"]


def test_validate_malformed_json(tmp_path):
    pfile = tmp_path / "broken.json"
    pfile.write_text("{ nope")
    code = main(["validate", "--params", str(pfile), "--out", str(tmp_path)])
    assert code == 2


def test_solve_zero_initial(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    ufile = _write_matrix(tmp_path / "u0.json", np.zeros((2, 2)))
    code = main(["solve", "--params", pfile, "--u", ufile, "--T", "1.0",
                 "--k", "4", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "riccati.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(float(r["phi"]) == 0.0 for r in rows)
    assert all(float(r["psi_11"]) == 0.0 and float(r["psi_22"]) == 0.0 for r in rows)


def test_solve_linear_closed_form(tmp_path):
    import scipy.linalg
    from affinehs.params import build_admissible
    beta = np.array([[-0.5, 0.2], [0.0, -0.4]])
    p = build_admissible(2, beta=beta, b_extra=np.eye(2))
    pfile = tmp_path / "linear.json"
    save_params(p, pfile)
    u = np.array([[0.5, 0.1], [0.1, 0.4]])
    ufile = _write_matrix(tmp_path / "u.json", u)
    code = main(["solve", "--params", str(pfile), "--u", ufile, "--T", "2.0",
                 "--grid", "5", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "riccati.csv") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        t = float(row["t"])
        e_mat = scipy.linalg.expm(t * beta)
        expected = e_mat.T @ u @ e_mat
        assert float(row["psi_11"]) == pytest.approx(expected[0, 0], abs=1e-8)
        assert float(row["psi_12"]) == pytest.approx(expected[0, 1], abs=1e-8)


def test_solve_cascade_emits_residuals(tmp_path):
    s = library.get("cascade-00")
    pfile = tmp_path / "cascade.json"
    save_params(s.params, pfile)
    ufile = _write_matrix(tmp_path / "u.json", s.u)
    code = main(["solve", "--params", str(pfile), "--u", ufile, "--T", "0.5",
                 "--cascade", "--grid", "5", "--out", str(tmp_path)])
    assert code == 0
    diag = json.loads((tmp_path / "cascade.json").read_text())
    # per-k residuals present and decreasing overall
    ks = sorted(int(k) for k in diag["residuals"])
    assert len(ks) >= 3
    assert diag["residuals"][str(ks[-1])] < diag["residuals"][str(ks[0])]


def test_moments_subcommand(mc_param_file, tmp_path):
    s, pfile = mc_param_file
    code = main(["moments", "--params", pfile, "--k", "4", "--T", "1.0",
                 "--grid", "3", "--out", str(tmp_path)])
    assert code == 0
    table = json.loads((tmp_path / "moments.json").read_text())
    assert set(table) == {"t", "mean", "second_moment", "variance", "laplace"}
    assert len(table["t"]) == 3
    assert all(0.0 < v <= 1.0 for v in table["laplace"])
    assert all(v >= -1e-8 for v in table["variance"])


def test_simulate_paths_csv(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    code = main(["simulate", "--params", pfile, "--k", "4", "--T", "1.0",
                 "--n-paths", "5", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "paths.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["event_type"] for r in rows} <= {"flow-sample", "jump"}
    assert {int(r["path_id"]) for r in rows} == set(range(5))
    for pid in range(5):
        events = [r for r in rows if int(r["path_id"]) == pid]
        assert events[0]["event_type"] == "flow-sample" and float(events[0]["time"]) == 0.0
        assert events[-1]["event_type"] == "flow-sample" and float(events[-1]["time"]) == 1.0
        times = [float(r["time"]) for r in events]
        assert times == sorted(times)


def test_verify_deterministic_set(tmp_path):
    from affinehs.params import build_admissible
    p = build_admissible(2, beta=-0.4 * np.eye(2), b_extra=0.5 * np.eye(2))
    pfile = tmp_path / "det.json"
    save_params(p, pfile)
    code = main(["verify", "--params", str(pfile), "--T", "1.0", "--k", "1",
                 "--n-paths", "200", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["all_passed"]
    assert all(c["z"] == 0.0 for c in report["checks"])


def test_verify_benchmark_and_fault_injection(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    code = main(["verify", "--params", pfile, "--T", "1.0", "--k", "4",
                 "--n-paths", "4000", "--seed", "5", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["all_passed"]
    assert all(abs(c["z"]) <= 3.0 for c in report["checks"])

    code = main(["verify", "--params", pfile, "--T", "1.0", "--k", "4",
                 "--n-paths", "4000", "--seed", "5", "--fault-injection",
                 "--out", str(tmp_path)])
    assert code == 1
    report = json.loads((tmp_path / "verify.json").read_text())
    assert not report["all_passed"]
    assert any(abs(c["z"]) > 3.0 for c in report["checks"])


def test_verify_stage_failures(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("][")
    assert main(["verify", "--params", str(broken), "--out", str(tmp_path)]) == 2

    bad = tmp_path / "inadmissible.json"
    bad.write_text(json.dumps(
        {"dim": 2, "b": sym_to_json(np.diag([-2.0, 1.0])), "B": {}, "m": {}, "mu": {}}))
    assert main(["verify", "--params", str(bad), "--out", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["failed_stage"] == "validate"


def test_verify_bitwise_across_workers(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    payloads = []
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        code = main(["verify", "--params", pfile, "--T", "1.0", "--k", "4",
                     "--n-paths", "1200", "--seed", "9", "--workers", str(w),
                     "--out", str(out)])
        assert code == 0
        payloads.append((out / "verify.json").read_bytes())
    assert payloads[0] == payloads[1] == payloads[2]


def test_worker_env_cap(mc_param_file, tmp_path, monkeypatch):
    _, pfile = mc_param_file
    monkeypatch.setenv("AFFINEHS_THREADS", "1")
    out = tmp_path / "capped"
    code = main(["verify", "--params", pfile, "--T", "1.0", "--k", "4",
                 "--n-paths", "1200", "--seed", "9", "--workers", "8",
                 "--out", str(out)])
    assert code == 0
    ref = tmp_path / "ref"
    monkeypatch.delenv("AFFINEHS_THREADS")
    code = main(["verify", "--params", pfile, "--T", "1.0", "--k", "4",
                 "--n-paths", "1200", "--seed", "9", "--workers", "1",
                 "--out", str(ref)])
    assert code == 0
    assert (out / "verify.json").read_bytes() == (ref / "verify.json").read_bytes()


def test_solve_and_simulate_outputs_reproducible(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    blobs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["solve", "--params", pfile, "--T", "1.0", "--k", "4",
                     "--grid", "7", "--out", str(out)]) == 0
        assert main(["simulate", "--params", pfile, "--k", "4", "--T", "1.0",
                     "--n-paths", "20", "--seed", "3", "--out", str(out)]) == 0
        blobs.append((out / "riccati.csv").read_bytes() + (out / "paths.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_csv_report_format(mc_param_file, tmp_path):
    _, pfile = mc_param_file
    code = main(["validate", "--params", pfile, "--out", str(tmp_path),
                 "--format", "csv"])
    assert code == 0
    with open(tmp_path / "admissibility.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["condition"] for r in rows] == ["i_a", "i_b", "ii", "iii", "iv"]
    assert all(r["passed"] == "True" for r in rows)

    code = main(["verify", "--params", pfile, "--T", "0.5", "--k", "4",
                 "--n-paths", "500", "--seed", "2", "--format", "csv",
                 "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "verify.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["check"] for r in rows] == ["laplace", "mean", "second_moment"]


def test_unknown_subcommand_exit_code():
    assert main(["frobnicate"]) == 2
