import json
import subprocess
import sys

import numpy as np
import pytest
from conftest import thermal_params

from qflab.bogoliubov import weyl_transformation
from qflab.cli import main
from qflab.fock import build_space, creator, projector, vacuum
from qflab.jsonio import density_matrix_to_json, dumps, matrix_to_json, model_to_json, params_to_json
from qflab.bhf import QuasifreeParams, TwoBodyHamiltonian
from qflab.bogoliubov import BogoliubovMap
from qflab.representability import exchange_operator


def write(path, obj):
    path.write_text(dumps(obj))
    return path


@pytest.fixture
def files(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    fermions = build_space(2, "fermion")
    bosons = build_space(1, "boson", 24)
    slater = projector(creator(fermions, 1) @ vacuum(fermions))
    coherent = weyl_transformation(np.array([0.4 + 0.1j]), bosons).conj().T @ vacuum(bosons)
    out = {
        "fermion_space": write(tmp_path / "fspace.json", {"n_modes": 2, "statistics": "fermion"}),
        "boson_space": write(tmp_path / "bspace.json", {"n_modes": 1, "statistics": "boson", "cutoff": 24}),
        "vacuum": write(tmp_path / "vacuum.json", density_matrix_to_json(projector(vacuum(fermions)))),
        "slater": write(tmp_path / "slater.json", density_matrix_to_json(slater)),
        "thermal": write(
            tmp_path / "thermal.json", {"kind": "quasifree", "params": params_to_json(thermal_params(1, "boson", [0.2]))}
        ),
        "coherent": write(tmp_path / "coherent.json", {"kind": "quasifree", "params": params_to_json(
            QuasifreeParams("boson", BogoliubovMap.identity(1, "boson"), [-0.4 - 0.1j], [0.0]))}),
        "coherent_rho": write(tmp_path / "coherent_rho.json", density_matrix_to_json(projector(coherent))),
        "bad": tmp_path / "bad.json",
    }
    out["bad"].write_text("{ not json")
    return out


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


# --- purity -----------------------------------------------------------------------


def test_purity_vacuum(files, capsys, tmp_path):
    code, report = run(["purity", "--state", files["vacuum"], "--space", files["fermion_space"]], capsys)
    assert code == 0 and report["pure"] is True
    manifest = json.loads((tmp_path / "qflab-manifest.json").read_text())
    assert manifest["command"] == "purity" and manifest["exit_code"] == 0
    assert len(manifest["inputs"]) == 2 and manifest["seed"] == 0


def test_purity_thermal_fails(files, capsys):
    code, report = run(["purity", "--state", files["thermal"]], capsys)
    assert code == 1 and report["pure"] is False and report["residual"] > 0


def test_purity_malformed_input(files, capsys):
    code, report = run(["purity", "--state", files["bad"]], capsys)
    assert code == 2 and report is None


def test_shape_mismatch_is_input_error(files, capsys, tmp_path):
    small = write(tmp_path / "small.json", {"n_modes": 1, "statistics": "boson", "cutoff": 5})
    code, _ = run(["purity", "--state", files["coherent_rho"], "--space", small], capsys)
    assert code == 2


def test_purity_missing_space(files, capsys):
    code, _ = run(["purity", "--state", files["vacuum"]], capsys)
    assert code == 2


def test_usage_error_exit_code(capsys):
    assert main(["purity"]) == 2
    assert main(["frobnicate"]) == 2


# --- repr -------------------------------------------------------------------------


def test_repr_vacuum_all_pass(files, capsys):
    code, report = run(["repr", "check", "--state", files["vacuum"], "--space", files["fermion_space"]], capsys)
    assert code == 0 and report["all_pass"]


def test_repr_coherent_all_pass(files, capsys):
    code, report = run(["repr", "--state", files["coherent_rho"], "--space", files["boson_space"]], capsys)
    assert code == 0 and report["all_pass"]
    names = {c["name"] for c in report["conditions"]}
    assert names == {"P", "G", "Q", "gen2pdm_psd"}
    assert report["polynomial_harness"]["samples"] == 100
    assert report["polynomial_harness"]["verdicts_agree"]


def test_repr_corrupted_pdm_emits_witness(files, capsys, tmp_path):
    Gamma = -0.5 * (np.eye(4) + exchange_operator(2))
    state = {"kind": "pdm", "gamma": matrix_to_json(np.diag([0.5, 0.5])), "Gamma": matrix_to_json(Gamma),
             "N": 1.0, "statistics": "boson"}
    path = write(tmp_path / "corrupt.json", state)
    code, report = run(["repr", "--state", path], capsys)
    assert code == 1
    p = next(c for c in report["conditions"] if c["name"] == "P")
    assert p["ok"] is False and len(p["witness"]["re"]) == 4


def test_repr_numeric_error_exit_code(files, capsys, tmp_path):
    tight = write(tmp_path / "tight.json", {"n_modes": 1, "statistics": "boson", "cutoff": 3})
    code, _ = run(["repr", "--state", files["thermal"], "--space", tight], capsys)
    assert code == 3


# --- wick -------------------------------------------------------------------------


def test_wick_slater(files, capsys):
    code, report = run(["wick", "c*(1) c(1)", "--state", files["slater"], "--space", files["fermion_space"]], capsys)
    assert code == 0 and report["value"]["re"] == pytest.approx(1)


def test_wick_odd_expression(files, capsys):
    code, report = run(["wick", "c*(1) c(1) c(2)", "--state", files["slater"], "--space", files["fermion_space"]], capsys)
    assert code == 0 and report["value"] == {"re": 0.0, "im": 0.0}


def test_wick_cross_check(files, capsys):
    argv = ["wick", "a*(1) a*(1) a(1)", "--state", files["coherent"], "--space", files["boson_space"], "--cross-check"]
    code, report = run(argv, capsys)
    assert code == 0 and report["agree"] and report["difference"] <= 1e-9


def test_wick_parse_error(files, capsys):
    code, _ = run(["wick", "c*(1) x(2)", "--state", files["slater"], "--space", files["fermion_space"]], capsys)
    assert code == 2


# --- bhf --------------------------------------------------------------------------


def test_bhf_number_operator(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    model = write(tmp_path / "n.json", model_to_json(TwoBodyHamiltonian([[1.0]], [[0.0]], "boson")))
    code, report = run(["bhf", "--model", model, "--mode", "pure", "--restarts", 2, "--cutoff", 10], capsys)
    assert code == 0 and abs(report["pure"]["energy"]) <= 1e-6
    assert report["seed"] == 0 and len(report["pure"]["restart_energies"]) == 2


def test_bhf_quadratic_fermion_both(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    H = TwoBodyHamiltonian(np.diag([-1.0, 1.0]), np.zeros((4, 4)), "fermion")
    model = write(tmp_path / "q.json", model_to_json(H))
    code, report = run(["bhf", "--model", model, "--restarts", 2, "--samples", 20], capsys)
    assert code == 0
    assert report["pure"]["energy"] == pytest.approx(-1, abs=1e-6)
    assert report["gap_report"]["gap"] <= 1e-4
    assert report["e_exact"] == pytest.approx(-1)


# --- manifests and replay -------------------------------------------------------------


def test_replay_reproduces_report(files, capsys, tmp_path):
    report_path = tmp_path / "out.json"
    argv = ["repr", "--state", files["coherent_rho"], "--space", files["boson_space"], "--seed", 7,
            "--report", report_path]
    code, _ = run(argv, capsys)
    assert code == 0
    manifest = tmp_path / "out.manifest.json"
    assert json.loads(manifest.read_text())["outputs"]["report"] == str(report_path.resolve())
    replayed = tmp_path / "replayed.json"
    assert main(["replay", str(manifest), "--report", str(replayed)]) == 0
    capsys.readouterr()
    assert replayed.read_text() == report_path.read_text()


def test_replay_detects_changed_input(files, capsys, tmp_path):
    code, _ = run(["purity", "--state", files["slater"], "--space", files["fermion_space"],
                   "--manifest", tmp_path / "m.json"], capsys)
    assert code == 0
    files["slater"].write_text(files["vacuum"].read_text())
    assert main(["replay", str(tmp_path / "m.json")]) == 2


def test_replay_detects_changed_report(files, capsys, tmp_path):
    report_path = tmp_path / "r.json"
    run(["purity", "--state", files["thermal"], "--report", report_path], capsys)
    report_path.write_text(report_path.read_text().replace("false", "true"))
    assert main(["replay", str(tmp_path / "r.manifest.json")]) == 1


def test_replay_missing_manifest(tmp_path, capsys):
    assert main(["replay", str(tmp_path / "nope.json")]) == 2


def test_console_script(files, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qflab.cli", "purity", "--state", str(files["vacuum"]),
         "--space", str(files["fermion_space"])],
        capture_output=True, text=True, cwd=tmp_path,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["pure"] is True
