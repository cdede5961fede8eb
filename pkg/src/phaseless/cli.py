"""Command-line entry point: ``phaseless <subcommand> ...``.

Subcommands
-----------
exact-diag CONFIG
    Ground-state energy (and optionally the ground-state vector) of the
    configured Hamiltonian.
make-trial CONFIG
    Build the configured trial and report its energy and ground-state fidelity.
run-afqmc CONFIG
    Phaseless AFQMC run; writes the per-block CSV and a summary JSON.
analyze {cbs,relative,zpve} ...
    Energy post-processing into a JSON report.

Config files are INI-style with sections ``[hamiltonian]``, ``[trial]``,
``[qmc]`` and ``[output]``. Relative paths are resolved against the config
file's directory. Every command that writes files also writes a manifest
listing inputs with their SHA-256 digests, outputs, versions and timing.

Exit codes: 0 success, 1 run failure (e.g. population collapse), 2 invalid
input or configuration.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import analysis
from .fockspace import DEFAULT_DIMENSION_CAP, enumerate_sector, fidelity, ground_state, truncate_statevector
from .gaussian import SlaterDeterminant, mean_field_ground_state
from .hamiltonians import (
    CUBR2_CHAIN,
    HubbardChainParams,
    build_hubbard_chain,
    read_coupling_table,
    read_fcidump,
    reduce_generalized_table,
)
from .propagation import TABLE_PRESETS, THREADS_ENV, PopulationCollapse, QmcConfig, run_afqmc
from .trials import (
    SingleDetTrial,
    StateVecTrial,
    load_determinant_file,
    load_orbital_trial,
    save_orbital_trial,
    save_trial,
    trial_energy,
)

EXIT_OK, EXIT_RUN_FAILURE, EXIT_INPUT_ERROR = 0, 1, 2

SECTIONS = ("hamiltonian", "trial", "qmc", "output")
HAMILTONIAN_KEYS = {"kind", "path", "l", "t_x", "t_xx", "t_xxx", "u", "boundary", "nup", "ndn", "threshold", "chol_tol"}
TRIAL_KEYS = {
    "kind", "path", "threshold", "top_k", "restarts", "seed", "restricted", "optimizer", "maxiter",
    "initial", "compare", "fatol",
}
OUTPUT_KEYS = {"directory", "prefix", "write_statevector"}


class InputError(Exception):
    """Malformed configuration or input file (exit code 2)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    path: Path
    digest: str
    hamiltonian: dict
    trial: dict
    qmc: dict
    output: dict
    inputs: list[Path] = field(default_factory=list)

    def resolve(self, value: str) -> Path:
        p = Path(value).expanduser()
        return p if p.is_absolute() else (self.path.parent / p)

    @property
    def out_dir(self) -> Path:
        return self.resolve(self.output.get("directory", "."))

    @property
    def prefix(self) -> str:
        return self.output.get("prefix", self.path.stem)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror or exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise InputError(f"malformed config: {exc}") from None
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise InputError(f"unknown config section(s): {', '.join(unknown)}")
    if "hamiltonian" not in parser:
        raise InputError("config needs a [hamiltonian] section")
    sec = {s: dict(parser[s]) if s in parser else {} for s in SECTIONS}
    for name, allowed in (("hamiltonian", HAMILTONIAN_KEYS), ("trial", TRIAL_KEYS), ("output", OUTPUT_KEYS)):
        bad = set(sec[name]) - allowed
        if bad:
            raise InputError(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
    return RunConfig(path, hashlib.sha256(text.encode()).hexdigest(), sec["hamiltonian"], sec["trial"],
                     sec["qmc"], sec["output"])


def _num(d: dict, key: str, kind=float, default=None):
    if key not in d or d[key].strip() == "":
        return default
    try:
        value = kind(d[key])
    except ValueError:
        raise InputError(f"{key} = {d[key]!r} is not a valid {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise InputError(f"{key} must be finite")
    return value


def _flag(d: dict, key: str, default: bool = False) -> bool:
    if key not in d:
        return default
    v = d[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise InputError(f"{key} must be a boolean, got {d[key]!r}")


def build_hamiltonian(cfg: RunConfig):
    h = cfg.hamiltonian
    kind = h.get("kind", "hubbard").strip().lower()
    nup, ndn = _num(h, "nup", int), _num(h, "ndn", int)
    try:
        if kind == "hubbard":
            base = CUBR2_CHAIN
            params = HubbardChainParams(
                t_x=_num(h, "t_x", float, base.t_x),
                t_xx=_num(h, "t_xx", float, base.t_xx),
                t_xxx=_num(h, "t_xxx", float, base.t_xxx),
                U=_num(h, "u", float, base.U),
                L=_num(h, "l", int, base.L),
                boundary=h.get("boundary", "open").strip(),
            )
            return build_hubbard_chain(params, nup, ndn)
        if kind == "table":
            path = _input_path(cfg, h)
            with open(path) as fh:
                table = read_coupling_table(fh)
            red = reduce_generalized_table(table, _num(h, "threshold", float, 0.01), _num(h, "l", int, 6),
                                           h.get("boundary", "open").strip())
            return build_hubbard_chain(red.params, nup, ndn)
        if kind == "fcidump":
            path = _input_path(cfg, h)
            with open(path) as fh:
                ham = read_fcidump(fh, chol_tol=_num(h, "chol_tol", float, 1e-10))
            if nup is not None or ndn is not None:
                ham = ham.with_sector(nup if nup is not None else ham.nup, ndn if ndn is not None else ham.ndn)
            return ham
    except (ValueError, TypeError, KeyError) as exc:
        raise InputError(f"[hamiltonian]: {exc}") from None
    raise InputError(f"[hamiltonian] kind must be hubbard, table or fcidump, got {kind!r}")


def _input_path(cfg: RunConfig, section: dict) -> Path:
    if "path" not in section:
        raise InputError("a 'path' entry is required")
    p = cfg.resolve(section["path"])
    if not p.is_file():
        raise InputError(f"input file not found: {p}")
    cfg.inputs.append(p)
    return p


def qmc_config(cfg: RunConfig) -> QmcConfig:
    values = dict(cfg.qmc)
    preset = values.pop("preset", None)
    merged = {}
    if preset is not None:
        if preset.strip() not in TABLE_PRESETS:
            raise InputError(f"unknown qmc preset {preset!r}; choose from {', '.join(TABLE_PRESETS)}")
        merged.update(TABLE_PRESETS[preset.strip()])
    merged.update(values)
    try:
        return QmcConfig.from_mapping(merged)
    except (ValueError, TypeError) as exc:
        raise InputError(f"[qmc]: {exc}") from None


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


def _ed_reference(ham, cap: int):
    basis = enumerate_sector(ham.norb, ham.nup, ham.ndn, cap=cap)
    return ground_state(ham, basis)


def build_trial(cfg: RunConfig, ham, kind: str | None = None):
    """Construct the configured trial. Returns ``(trial, extra_report)``."""
    t = cfg.trial
    kind = (kind or t.get("kind", "hf")).strip().lower()
    report: dict = {"kind": kind}
    if kind == "hf":
        mf = mean_field_ground_state(
            ham, restarts=_num(t, "restarts", int, 16), seed=_num(t, "seed", int, 0),
            restricted=_flag(t, "restricted"),
        )
        report.update(mean_field_energy=mf.energy, converged=mf.converged, seed=mf.seed)
        return SingleDetTrial(mf.det, provenance={"source": "mean_field", "seed": mf.seed}), report
    if kind == "reference":
        det = SlaterDeterminant.from_occupations(ham.norb, range(ham.nup), range(ham.ndn))
        return SingleDetTrial(det, provenance={"source": "aufbau occupation"}), report
    if kind in ("exact", "truncate"):
        e0, psi0 = _ed_reference(ham, DEFAULT_DIMENSION_CAP)
        report["e0"] = e0
        if kind == "exact":
            return StateVecTrial(psi0, provenance={"source": "exact ground state"}), report
        threshold, top_k = _num(t, "threshold", float), _num(t, "top_k", int)
        try:
            trial = truncate_statevector(psi0, threshold=threshold, top_k=top_k)
        except ValueError as exc:
            raise InputError(f"[trial]: {exc}") from None
        report.update(trial.provenance)
        return trial, report
    if kind == "file":
        path = _input_path(cfg, t)
        try:
            if path.suffix == ".npz":
                trial = load_orbital_trial(path)
            else:
                with open(path) as fh:
                    trial = load_determinant_file(fh)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        if trial.norb != ham.norb or trial.nelec != (ham.nup, ham.ndn):
            raise InputError(f"trial file {path} does not match the Hamiltonian sector")
        report["sha256"] = trial.provenance.get("sha256")
        return trial, report
    if kind == "vqe":
        from .vqe import UccsdAnsatz, mp2_initial_amplitudes, vqe_optimize

        ansatz = UccsdAnsatz(ham)
        try:
            init = mp2_initial_amplitudes(ham, ansatz.occ_up, ansatz.occ_dn, ansatz.excitations)
        except ValueError:
            init = ansatz.zero_parameters()
        res = vqe_optimize(
            ham, init, method=t.get("optimizer", "COBYLA").strip(), maxiter=_num(t, "maxiter", int, 20000),
            fatol=_num(t, "fatol", float, 1e-8), ansatz=ansatz,
        )
        report.update(vqe_energy=res.energy, initial_energy=res.initial_energy, evaluations=len(res.trajectory),
                      converged=res.converged, nparams=len(ansatz.excitations))
        report["_trajectory"] = res
        return res.trial(), report
    raise InputError(f"[trial] kind must be hf, reference, exact, truncate, file or vqe, got {kind!r}")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg: RunConfig, command: str, outputs: list[Path], t0: float, status: str, extra=None) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / f"{cfg.prefix}.{command}.manifest.json"
    doc = {
        "command": command,
        "status": status,
        "config": {"path": str(cfg.path), "sha256": cfg.digest},
        "seed": _num(cfg.qmc, "seed", int, 0) if cfg.qmc else None,
        "versions": {"phaseless": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in dict.fromkeys(cfg.inputs)],
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "timing": {"started_unix": t0, "walltime_s": time.time() - t0},
        **(extra or {}),
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def _dump(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_exact_diag(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    ham = build_hamiltonian(cfg)
    cap = args.cap or DEFAULT_DIMENSION_CAP
    try:
        basis = enumerate_sector(ham.norb, ham.nup, ham.ndn, cap=cap)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    e0, psi0 = ground_state(ham, basis)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    report = {"e0": e0, "sector_size": basis.size, "norb": ham.norb, "nup": ham.nup, "ndn": ham.ndn,
              "unit": ham.unit, "label": ham.label}
    if _flag(cfg.output, "write_statevector"):
        p = cfg.out_dir / f"{cfg.prefix}.psi0.det"
        with open(p, "w") as fh:
            save_trial(fh, StateVecTrial(psi0))
        outputs.append(p)
    outputs.insert(0, _dump(cfg.out_dir / f"{cfg.prefix}.ed.json", report))
    write_manifest(cfg, "exact-diag", outputs, t0, "ok")
    print(f"E0 = {e0:.12f} {ham.unit}  (sector size {basis.size})")
    return EXIT_OK


def cmd_make_trial(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    ham = build_hamiltonian(cfg)
    trial, report = build_trial(cfg, ham, args.kind)
    vqe_res = report.pop("_trajectory", None)
    report["trial_energy"] = trial_energy(trial, ham)
    compare = cfg.trial.get("compare", "auto").strip().lower()
    basis_size = math.comb(ham.norb, ham.nup) * math.comb(ham.norb, ham.ndn)
    if compare == "yes" or (compare == "auto" and basis_size <= 100_000):
        if "e0" not in report:
            report["e0"], psi0 = _ed_reference(ham, DEFAULT_DIMENSION_CAP)
        else:
            psi0 = _ed_reference(ham, DEFAULT_DIMENSION_CAP)[1]
        report["fidelity"] = fidelity(trial, psi0)
        report["energy_error"] = report["trial_energy"] - report["e0"]
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if isinstance(trial, SingleDetTrial):
        p = cfg.out_dir / f"{cfg.prefix}.trial.npz"
        save_orbital_trial(p, trial)
    else:
        p = cfg.out_dir / f"{cfg.prefix}.trial.det"
        with open(p, "w") as fh:
            save_trial(fh, trial)
    outputs.append(p)
    if vqe_res is not None:
        q = cfg.out_dir / f"{cfg.prefix}.vqe.csv"
        with open(q, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["evaluation", "energy", "best_so_far"])
            for i, (e, b) in enumerate(zip(vqe_res.trajectory, vqe_res.best_so_far)):
                w.writerow([i, repr(float(e)), repr(float(b))])
        outputs.append(q)
        params = {
            "energy": vqe_res.energy,
            "initial_energy": vqe_res.initial_energy,
            "converged": vqe_res.converged,
            "iterations": vqe_res.iterations,
            "evaluations": int(vqe_res.trajectory.size),
            "message": vqe_res.message,
            "optimizer": vqe_res.options,
            "spin_orbital_index": "spin * norb + orbital",
            "excitations": [
                {"occ": list(ex.occ), "vir": list(ex.vir), "theta": float(v)}
                for ex, v in zip(vqe_res.params.excitations, vqe_res.params.values)
            ],
        }
        outputs.append(_dump(cfg.out_dir / f"{cfg.prefix}.vqe.json", params))
    outputs.append(_dump(cfg.out_dir / f"{cfg.prefix}.trial.json", report))
    write_manifest(cfg, "make-trial", outputs, t0, "ok")
    line = f"trial {report['kind']}: E_T = {report['trial_energy']:.10f} {ham.unit}"
    if "fidelity" in report:
        line += f", fidelity {report['fidelity']:.6f}"
    print(line)
    return EXIT_OK


def cmd_run_afqmc(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    ham = build_hamiltonian(cfg)
    qcfg = qmc_config(cfg)
    if args.threads is not None:
        if args.threads < 1:
            raise InputError("--threads must be positive")
        qcfg.threads = args.threads
    try:
        nthreads = qcfg.resolved_threads()
    except ValueError as exc:
        raise InputError(str(exc)) from None
    initial_kind = cfg.trial.get("initial", "auto").strip().lower()
    if initial_kind not in ("auto", "mean_field", "restricted", "reference"):
        raise InputError(f"[trial] initial must be auto, mean_field, restricted or reference, got {initial_kind!r}")
    trial, report = build_trial(cfg, ham)
    report.pop("_trajectory", None)
    initial = None
    if initial_kind == "mean_field":
        initial = mean_field_ground_state(ham, seed=0, restarts=16).det
    elif initial_kind == "restricted":
        if ham.nup != ham.ndn:
            raise InputError("restricted initial walkers need equal spin populations")
        initial = mean_field_ground_state(ham, seed=0, restarts=16, restricted=True).det
    elif initial_kind == "reference":
        initial = SlaterDeterminant.from_occupations(ham.norb, range(ham.nup), range(ham.ndn))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        series = run_afqmc(ham, trial, qcfg, initial=initial)
    except (PopulationCollapse, FloatingPointError, ArithmeticError) as exc:
        write_manifest(cfg, "run-afqmc", [], t0, "failed", {"error": str(exc), "threads": nthreads})
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    csv_path = cfg.out_dir / f"{cfg.prefix}.blocks.csv"
    json_path = cfg.out_dir / f"{cfg.prefix}.summary.json"
    series.write_csv(csv_path)
    summary = series.summary()
    summary["trial"] = {k: v for k, v in report.items() if isinstance(v, (int, float, str, bool, type(None)))}
    _dump(json_path, summary)
    write_manifest(cfg, "run-afqmc", [csv_path, json_path], t0, "ok", {"threads": nthreads})
    print(f"E_AFQMC = {summary['energy']:.8f} +/- {summary['stderr']:.8f} {ham.unit}")
    return EXIT_OK


def _parse_assignments(items, what: str) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"{what} entries must look like name=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise InputError(f"{what} value for {k!r} is not a number") from None
    return out


def cmd_analyze(args) -> int:
    out = Path(args.output)
    inputs = []
    if args.kind in ("cbs", "relative"):
        if not args.input:
            raise InputError(f"analyze {args.kind} needs an energy CSV")
        p = Path(args.input)
        if not p.is_file():
            raise InputError(f"input file not found: {p}")
        inputs.append(p)
        try:
            records = analysis.read_energy_csv(p)
        except ValueError as exc:
            raise InputError(f"{p}: {exc}") from None
    if args.kind == "relative":
        weights = {"3O2": 1, "1O2": 1, "O3": 1.5, **_parse_assignments(args.weight, "--weight")}
        try:
            rows = analysis.relative_energy_table(records, reference=args.reference, weights=weights)
        except KeyError as exc:
            raise InputError(str(exc)) from None
        report = {"kind": "relative", "reference": args.reference, "weights": weights, "rows": rows}
        if args.printed:
            q = Path(args.printed)
            if not q.is_file():
                raise InputError(f"input file not found: {q}")
            inputs.append(q)
            with open(q) as fh:
                printed = [dict(r) for r in csv.DictReader(l for l in fh if not l.startswith("#"))]
            try:
                cmp = analysis.compare_with_printed(rows, printed, tol=args.tolerance)
            except KeyError as exc:
                raise InputError(str(exc)) from None
            report["comparison"] = cmp
            report["max_abs_deviation"] = max(abs(c["deviation"]) for c in cmp) if cmp else 0.0
            report["outside_tolerance"] = sum(not c["within"] for c in cmp)
    elif args.kind == "cbs":
        report = _cbs_report(records, args)
    else:
        zpve = _parse_assignments(args.zpve, "--zpve")
        stoich = _parse_assignments(args.stoich, "--stoich")
        if args.enthalpy is None or not zpve or not stoich:
            raise InputError("analyze zpve needs --enthalpy, --zpve and --stoich")
        try:
            corr = analysis.zpve_correct(args.enthalpy, zpve, stoich, unit=args.unit)
        except (KeyError, ValueError) as exc:
            raise InputError(str(exc)) from None
        report = {"kind": "zpve", "inputs": {"enthalpy_0k": args.enthalpy, "zpve": zpve, "stoichiometry": stoich,
                                             "unit": args.unit}, "result": corr.__dict__}
    out.parent.mkdir(parents=True, exist_ok=True)
    analysis.write_report(report, out, inputs)
    print(f"wrote {out}")
    return EXIT_OK


def _cbs_report(records, args) -> dict:
    ref_method = args.reference_method
    hf_cbs = _parse_assignments(args.hf_cbs, "--hf-cbs")
    by = {}
    for r in records:
        by.setdefault((r.extra.get("geometry", ""), r.method, r.species), {})[r.basis] = r
    lo, hi = args.bases
    for b in (lo, hi):
        if b not in analysis.CARDINALS:
            raise InputError(f"unknown basis label {b!r}; expected one of {', '.join(analysis.CARDINALS)}")
    results = []
    for (geom, method, species), row in sorted(by.items()):
        if method == ref_method or lo not in row or hi not in row:
            continue
        ref = by.get((geom, ref_method, species), {})
        if lo not in ref or hi not in ref:
            raise InputError(f"missing {ref_method} energies for {species} in {lo}/{hi}")
        p = analysis.BasisSeriesPoint(analysis.CARDINALS[lo], row[lo].energy, ref[lo].energy, row[lo].error)
        q = analysis.BasisSeriesPoint(analysis.CARDINALS[hi], row[hi].energy, ref[hi].energy, row[hi].error)
        limit = hf_cbs.get(species)
        if limit is None and "5Z" in ref:
            limit = ref["5Z"].energy
        if limit is None and args.hf_cbs_from and "CBS" in by.get((geom, args.hf_cbs_from, species), {}):
            anchor = by[(geom, args.hf_cbs_from, species)]
            pa = analysis.BasisSeriesPoint(p.cardinal, anchor[lo].energy, ref[lo].energy)
            qa = analysis.BasisSeriesPoint(q.cardinal, anchor[hi].energy, ref[hi].energy)
            limit = analysis.implied_reference_cbs(pa, qa, anchor["CBS"].energy)
        entry = {"geometry": geom, "method": method, "species": species}
        res = analysis.cbs_extrapolate(p, q, 0.0 if limit is None else limit)
        entry.update(correlation_cbs=res.correlation, slope=res.slope, stat_error=res.stat_error)
        if limit is not None:
            entry.update(total_cbs=res.total, reference_cbs=limit)
        results.append(entry)
    if not results:
        raise InputError(f"no method has both {lo} and {hi} energies")
    return {"kind": "cbs", "scheme": analysis.CBS_SCHEME, "bases": [lo, hi], "reference_method": ref_method,
            "results": results}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaseless", description="Phaseless AFQMC with exact-diagonalization checks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact-diag", help="ground state by exact diagonalization")
    p.add_argument("config")
    p.add_argument("--cap", type=int, default=None, help="maximum sector dimension")
    p.set_defaults(func=cmd_exact_diag)

    p = sub.add_parser("make-trial", help="build a trial wavefunction file")
    p.add_argument("config")
    p.add_argument("--kind", choices=["hf", "reference", "exact", "truncate", "file", "vqe"], default=None)
    p.set_defaults(func=cmd_make_trial)

    p = sub.add_parser("run-afqmc", help="phaseless AFQMC run")
    p.add_argument("config")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (overrides {THREADS_ENV})")
    p.set_defaults(func=cmd_run_afqmc)

    p = sub.add_parser("analyze", help="energy post-processing")
    p.add_argument("kind", choices=["cbs", "relative", "zpve"])
    p.add_argument("input", nargs="?", help="energy CSV (method, species, basis, energy, error)")
    p.add_argument("--output", "-o", default="analysis.json")
    p.add_argument("--reference", default="3O2", help="reference species for relative energies")
    p.add_argument("--weight", action="append", help="stoichiometric weight, e.g. O3=1.5")
    p.add_argument("--printed", help="CSV of printed relative energies to compare against")
    p.add_argument("--tolerance", type=float, default=0.2, help="comparison tolerance in kJ/mol")
    p.add_argument("--reference-method", default="R(O)HF")
    p.add_argument("--bases", nargs=2, default=["TZ", "QZ"], metavar=("LOW", "HIGH"))
    p.add_argument("--hf-cbs", action="append", help="mean-field basis-set limit per species, e.g. 3O2=-149.6674")
    p.add_argument("--hf-cbs-from", help="infer the mean-field limit from this method's CBS row")
    p.add_argument("--enthalpy", type=float, help="0 K enthalpy in kJ/mol")
    p.add_argument("--zpve", action="append", help="zero-point energy per species, e.g. O3=0.0064")
    p.add_argument("--stoich", action="append", help="signed coefficient per species, e.g. 3O2=-1.5")
    p.add_argument("--unit", choices=["Ha", "kJ/mol"], default="Ha", help="unit of --zpve values")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (PopulationCollapse, FloatingPointError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
