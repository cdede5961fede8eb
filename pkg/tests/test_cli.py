import json
import shutil
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

from conftest import DATA, chain_ground_state, molecular_references
from test_hamiltonians import COUPLING_TABLE
from phaseless.analysis import _data_file
from phaseless.cli import main
from phaseless.fockspace import fidelity
from phaseless.trials import load_determinant_file


def write_config(path: Path, **sections) -> Path:
    lines = []
    for name, values in sections.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


HUBBARD6 = {"kind": "hubbard", "l": 6}
SMALL_QMC = {"dtau": 0.005, "nwalkers": 8, "nblocks": 24, "steps_per_block": 4, "equilibration_blocks": 4, "seed": 5}


def test_exact_diag_writes_report_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path / "l6.ini", hamiltonian=HUBBARD6, output={"directory": "out", "write_statevector": "yes"})
    assert main(["exact-diag", str(cfg)]) == 0
    report = json.loads((tmp_path / "out/l6.ed.json").read_text())
    assert report["sector_size"] == 400
    assert report["e0"] == pytest.approx(chain_ground_state(6)[0], abs=1e-10)
    manifest = json.loads((tmp_path / "out/l6.exact-diag.manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert {Path(o["path"]).name for o in manifest["outputs"]} == {"l6.ed.json", "l6.psi0.det"}
    with open(tmp_path / "out/l6.psi0.det") as fh:
        psi = load_determinant_file(fh)
    assert fidelity(psi, chain_ground_state(6)[1]) == pytest.approx(1.0, abs=1e-12)
    assert "E0 =" in capsys.readouterr().out


def test_exact_diag_from_fcidump(tmp_path):
    shutil.copy(DATA / "h4_a1.23.fcidump", tmp_path)
    cfg = write_config(tmp_path / "h4.ini", hamiltonian={"kind": "fcidump", "path": "h4_a1.23.fcidump"})
    assert main(["exact-diag", str(cfg)]) == 0
    report = json.loads((tmp_path / "h4.ed.json").read_text())
    assert report["e0"] == pytest.approx(molecular_references()["h4_sto3g"][2]["e_fci"], abs=1e-9)
    manifest = json.loads((tmp_path / "h4.exact-diag.manifest.json").read_text())
    assert manifest["inputs"][0]["sha256"]


def test_exact_diag_from_coupling_table(tmp_path):
    table = tmp_path / "chain.tbl"
    table.write_text(COUPLING_TABLE)
    cfg = write_config(tmp_path / "t.ini", hamiltonian={"kind": "table", "path": "chain.tbl", "l": 6})
    assert main(["exact-diag", str(cfg)]) == 0
    report = json.loads((tmp_path / "t.ed.json").read_text())
    assert report["e0"] == pytest.approx(chain_ground_state(6)[0], abs=1e-10)


@pytest.mark.parametrize("kind, suffix", [("hf", "npz"), ("reference", "npz"), ("exact", "det")])
def test_make_trial_kinds(tmp_path, kind, suffix):
    cfg = write_config(tmp_path / "c.ini", hamiltonian=HUBBARD6, trial={"kind": kind})
    assert main(["make-trial", str(cfg)]) == 0
    assert (tmp_path / f"c.trial.{suffix}").is_file()
    report = json.loads((tmp_path / "c.trial.json").read_text())
    assert report["trial_energy"] >= report["e0"] - 1e-10
    if kind == "exact":
        assert report["fidelity"] == pytest.approx(1.0, abs=1e-12)


def test_make_trial_truncate_and_reuse(tmp_path):
    cfg = write_config(tmp_path / "c.ini", hamiltonian=HUBBARD6, trial={"kind": "truncate", "threshold": 0.05})
    assert main(["make-trial", str(cfg)]) == 0
    rep = json.loads((tmp_path / "c.trial.json").read_text())
    assert 0.1 < rep["fidelity"] < 1.0
    cfg2 = write_config(tmp_path / "d.ini", hamiltonian=HUBBARD6, trial={"kind": "file", "path": "c.trial.det"})
    assert main(["make-trial", str(cfg2)]) == 0
    rep2 = json.loads((tmp_path / "d.trial.json").read_text())
    assert rep2["trial_energy"] == rep["trial_energy"]
    assert rep2["fidelity"] == rep["fidelity"]


def test_make_trial_vqe_outputs(tmp_path):
    shutil.copy(DATA / "h4_a1.23.fcidump", tmp_path)
    cfg = write_config(
        tmp_path / "v.ini",
        hamiltonian={"kind": "fcidump", "path": "h4_a1.23.fcidump"},
        trial={"kind": "vqe", "maxiter": 300},
    )
    assert main(["make-trial", str(cfg)]) == 0
    params = json.loads((tmp_path / "v.vqe.json").read_text())
    assert len(params["excitations"]) == 26
    assert params["evaluations"] <= 301
    rows = (tmp_path / "v.vqe.csv").read_text().splitlines()
    assert rows[0] == "evaluation,energy,best_so_far"
    best = [float(r.split(",")[2]) for r in rows[1:]]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    report = json.loads((tmp_path / "v.trial.json").read_text())
    assert report["trial_energy"] == pytest.approx(params["energy"], abs=1e-9)
    assert report["trial_energy"] < molecular_references()["h4_sto3g"][2]["e_rhf"]


def test_run_afqmc_outputs_and_thread_invariance(tmp_path, monkeypatch):
    monkeypatch.delenv("PHASELESS_THREADS", raising=False)
    cfg = write_config(tmp_path / "r.ini", hamiltonian=HUBBARD6, trial={"kind": "hf"}, qmc=SMALL_QMC,
                       output={"directory": "one"})
    assert main(["run-afqmc", str(cfg)]) == 0
    cfg3 = write_config(tmp_path / "r.ini", hamiltonian=HUBBARD6, trial={"kind": "hf"}, qmc=SMALL_QMC,
                        output={"directory": "three"})
    monkeypatch.setenv("PHASELESS_THREADS", "3")
    assert main(["run-afqmc", str(cfg3)]) == 0
    a = (tmp_path / "one/r.blocks.csv").read_bytes()
    b = (tmp_path / "three/r.blocks.csv").read_bytes()
    assert a == b
    assert (tmp_path / "one/r.summary.json").read_bytes() == (tmp_path / "three/r.summary.json").read_bytes()
    manifest = json.loads((tmp_path / "three/r.run-afqmc.manifest.json").read_text())
    assert manifest["threads"] == 3 and manifest["seed"] == 5
    summary = json.loads(a and (tmp_path / "one/r.summary.json").read_text())
    assert summary["nblocks"] == 24 and summary["trial"]["kind"] == "hf"


def test_run_afqmc_threads_flag_overrides_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PHASELESS_THREADS", "not-a-number")
    cfg = write_config(tmp_path / "r.ini", hamiltonian=HUBBARD6, trial={"kind": "hf"}, qmc=SMALL_QMC)
    assert main(["run-afqmc", str(cfg)]) == 2
    assert main(["run-afqmc", str(cfg), "--threads", "2"]) == 0


def test_run_afqmc_population_collapse_exits_1(tmp_path):
    qmc = {**SMALL_QMC, "dtau": 400}
    cfg = write_config(tmp_path / "b.ini", hamiltonian={"kind": "hubbard", "l": 4}, trial={"kind": "reference"}, qmc=qmc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["run-afqmc", str(cfg)]) == 1
    manifest = json.loads((tmp_path / "b.run-afqmc.manifest.json").read_text())
    assert manifest["status"] == "failed" and "collapsed" in manifest["error"]


@pytest.mark.parametrize(
    "sections",
    [
        {"hamiltonian": {"kind": "hubbard", "l": "six"}},
        {"hamiltonian": {"kind": "lattice"}},
        {"hamiltonian": {"kind": "fcidump", "path": "missing.fcidump"}},
        {"hamiltonian": HUBBARD6, "extra": {"x": 1}},
        {"hamiltonian": {**HUBBARD6, "colour": "red"}},
        {"trial": {"kind": "hf"}},
    ],
)
def test_malformed_config_exits_2(tmp_path, sections):
    cfg = write_config(tmp_path / "bad.ini", **sections)
    assert main(["exact-diag", str(cfg)]) == 2


def test_malformed_inputs_exit_2(tmp_path):
    (tmp_path / "broken.fcidump").write_text("&FCI NORB=2\n garbage\n")
    cfg = write_config(tmp_path / "a.ini", hamiltonian={"kind": "fcidump", "path": "broken.fcidump"})
    assert main(["exact-diag", str(cfg)]) == 2
    (tmp_path / "dup.det").write_text("6 3 3\n1 0 111000 111000\n1 0 111000 111000\n")
    cfg = write_config(tmp_path / "b.ini", hamiltonian=HUBBARD6, trial={"kind": "file", "path": "dup.det"})
    assert main(["make-trial", str(cfg)]) == 2
    cfg = write_config(tmp_path / "c.ini", hamiltonian=HUBBARD6, trial={"kind": "truncate"})
    assert main(["make-trial", str(cfg)]) == 2
    cfg = write_config(tmp_path / "d.ini", hamiltonian=HUBBARD6, trial={"kind": "hf"}, qmc={"nwalkers": 0})
    assert main(["run-afqmc", str(cfg)]) == 2
    assert main(["exact-diag", str(tmp_path / "nope.ini")]) == 2
    assert main(["frobnicate"]) == 2


def test_analyze_relative_cbs_zpve(tmp_path):
    energies = tmp_path / "energies.csv"
    printed = tmp_path / "printed.csv"
    energies.write_bytes(_data_file("oxygen_energies.csv").read_bytes())
    printed.write_bytes(_data_file("oxygen_relative.csv").read_bytes())
    out = tmp_path / "rel.json"
    assert main(["analyze", "relative", str(energies), "--printed", str(printed), "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["comparison"]) == 62
    assert rep["provenance"]["inputs"][0]["sha256"]

    out = tmp_path / "cbs.json"
    assert main(["analyze", "cbs", str(energies), "-o", str(out), "--hf-cbs-from", "CCSD(T)"]) == 0
    res = json.loads(out.read_text())["results"]
    (row,) = [r for r in res if r["method"] == "CCSD(T)" and r["species"] == "3O2" and r["geometry"] == "exp"]
    assert abs(row["correlation_cbs"] + 0.6205) <= 1e-4
    assert row["total_cbs"] == pytest.approx(-150.2879, abs=1e-9)

    out = tmp_path / "z.json"
    args = ["analyze", "zpve", "--enthalpy", "142.7", "--zpve", "O3=0.0064", "--zpve", "3O2=0.0037",
            "--stoich", "O3=1", "--stoich", "3O2=-1.5", "-o", str(out)]
    assert main(args) == 0
    assert round(json.loads(out.read_text())["result"]["delta_zpve_kjmol"], 1) == 2.2
    assert main(["analyze", "zpve", "--enthalpy", "1", "--zpve", "O3=1", "--stoich", "X=1", "-o", str(out)]) == 2
    assert main(["analyze", "relative", str(tmp_path / "missing.csv")]) == 2


def test_module_entry_point_runs(tmp_path):
    cfg = write_config(tmp_path / "l4.ini", hamiltonian={"kind": "hubbard", "l": 4})
    proc = subprocess.run([sys.executable, "-m", "phaseless", "exact-diag", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "sector size 36" in proc.stdout
