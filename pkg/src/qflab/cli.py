"""Command-line front end: ``qflab {purity,repr,wick,bhf,replay}``.

Every run prints its report as stable-ordered JSON, optionally writes it to
``--report``, and writes a run manifest (command, configuration, seed, tool
version, SHA-256 input digests, output paths, wall time). ``qflab replay``
re-runs a manifest and compares the new report with the recorded one.

Exit codes: 0 success, 1 a checked property fails, 2 usage or input error,
3 numerical error (branch ambiguity, unsafe cutoff, non-convergence).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from qflab import __version__
from qflab import bhf as bhf_mod
from qflab.errors import (
    BranchAmbiguity,
    CutoffUnsafe,
    NonConvergence,
    QflabError,
)
from qflab.fock import Statistics, build_space
from qflab.gaussian import (
    check_purity,
    further_gen1pdm,
    further_purity_residual,
    gaussian_from_density_matrix,
)
from qflab.jsonio import (
    SchemaError,
    dumps,
    file_digest,
    load_json,
    model_from_json,
    params_to_json,
    space_from_json,
    state_from_json,
)
from qflab.representability import (
    assemble_gen2pdm,
    check_admissible,
    check_G,
    check_gen2pdm_psd,
    check_P,
    check_Q,
    polynomial_positivity_harness,
    two_pdm_from_state,
)
from qflab.wick import oracle_expectation, parse, quasifree_expectation

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (BranchAmbiguity, CutoffUnsafe, NonConvergence)
FLOAT_POLICY = "IEEE-754 double, numpy/scipy default BLAS; bit-for-bit only on the same build"
DEFAULT_BOSON_CUTOFF = 30

# arguments that name input files, recorded with digests in the manifest
INPUT_ARGS = ("state", "space", "model")


class UsageError(ValueError):
    pass


def _complex_json(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _load_space(args, required: bool = True):
    if args.space is None:
        if required:
            raise UsageError("--space is required for this state")
        return None
    return space_from_json(load_json(args.space), args.cutoff)


def _gaussian_of(kind: str, obj, args):
    if kind == "density_matrix":
        space = _load_space(args)
        return gaussian_from_density_matrix(_density_matrix_of(kind, obj, space), space, tol=args.tol or 1e-8)
    if kind == "gaussian":
        return obj
    if kind == "quasifree":
        return obj.moments()
    raise UsageError(f"state kind {kind!r} carries no quasifree data")


def _density_matrix_of(kind: str, obj, space):
    if kind == "density_matrix":
        if obj.shape != (space.dim, space.dim):
            raise UsageError(f"density matrix has shape {obj.shape}, the space has dimension {space.dim}")
        return obj
    if kind == "quasifree":
        return bhf_mod.realize_state(obj, space)
    if kind == "gaussian":
        return bhf_mod.realize_state(bhf_mod.decompose_quasifree(obj), space)
    raise UsageError(f"state kind {kind!r} cannot be realized on Fock space")


# --- commands ---------------------------------------------------------------------


def cmd_purity(args) -> tuple[dict, int]:
    kind, obj = state_from_json(load_json(args.state))
    g = _gaussian_of(kind, obj, args)
    tol = args.tol if args.tol is not None else 1e-7
    rep = check_purity(g, tol)
    report = {
        "command": "purity",
        "statistics": g.statistics.value,
        "pure": rep.pure,
        "residual": rep.residual,
        "reduced_residual": rep.reduced_residual,
        "verdicts_agree": rep.verdicts_agree,
        "tol": tol,
    }
    if g.is_boson:
        report["further_residual"] = further_purity_residual(further_gen1pdm(g))
    return report, EXIT_OK if rep.pure else EXIT_FAIL


def cmd_repr(args) -> tuple[dict, int]:
    kind, obj = state_from_json(load_json(args.state))
    tol = args.tol if args.tol is not None else 1e-8
    rng = np.random.default_rng(args.seed)
    conditions = []
    harness = None
    if kind == "pdm":
        gamma, Gamma, stats = obj["gamma"], obj["Gamma"], obj["statistics"]
        if obj["N"] is not None:
            conditions.append(check_admissible(gamma, Gamma, float(obj["N"]), stats.value, tol))
        space = None
    else:
        space = _load_space(args)
        rho = _density_matrix_of(kind, obj, space)
        stats = space.statistics
        gamma = gaussian_from_density_matrix(rho, space).gamma
        Gamma = two_pdm_from_state(rho, space)
    conditions.append(check_P(Gamma, tol))
    if stats is Statistics.BOSON:
        conditions.append(check_G(gamma, Gamma, tol=tol, rng=rng))
        conditions.append(check_Q(gamma, Gamma, tol))
        if space is not None:
            G = assemble_gen2pdm(rho, space)
            conditions.append(check_gen2pdm_psd(G, tol))
            h = polynomial_positivity_harness(rho, space, args.samples, rng, G, tol=tol)
            harness = {
                "samples": h.samples,
                "min_value": h.min_value,
                "all_nonnegative": h.all_nonnegative,
                "verdicts_agree": h.verdicts_agree,
                "max_form_mismatch": h.max_form_mismatch,
            }
    report = {
        "command": "repr",
        "statistics": stats.value,
        "conditions": [c.to_json() for c in conditions],
        "all_pass": all(c.ok for c in conditions),
        "tol": tol,
    }
    if harness is not None:
        report["polynomial_harness"] = harness
    return report, EXIT_OK if report["all_pass"] else EXIT_FAIL


def cmd_wick(args) -> tuple[dict, int]:
    poly = parse(args.expr)
    kind, obj = state_from_json(load_json(args.state))
    g = _gaussian_of(kind, obj, args)
    value = quasifree_expectation(g, poly)
    report = {
        "command": "wick",
        "expression": str(poly),
        "value": _complex_json(value),
    }
    code = EXIT_OK
    if args.cross_check:
        space = _load_space(args)
        rho = _density_matrix_of(kind, obj, space)
        oracle = oracle_expectation(rho, space, poly)
        tol = args.tol if args.tol is not None else 1e-7
        diff = abs(oracle - value)
        report["oracle"] = _complex_json(oracle)
        report["difference"] = float(diff)
        report["agree"] = bool(diff <= tol * max(1.0, abs(oracle)))
        code = EXIT_OK if report["agree"] else EXIT_FAIL
    return report, code


def cmd_bhf(args) -> tuple[dict, int]:
    H = model_from_json(load_json(args.model))
    if H.statistics is Statistics.BOSON:
        space = build_space(H.n_modes, H.statistics, args.cutoff or DEFAULT_BOSON_CUTOFF)
    else:
        space = build_space(H.n_modes, H.statistics)
    opts = bhf_mod.SolverOptions(
        restarts=args.restarts,
        seed=args.seed,
        tol=args.tol if args.tol is not None else bhf_mod.TOL,
    )
    report = {"command": "bhf", "mode": args.mode, "seed": args.seed, "restarts": args.restarts}
    code = EXIT_OK
    if args.mode == "both":
        gap = bhf_mod.verify_pure_equals_mixed(H, space, args.samples, opts)
        results = {"pure": gap.pure, "mixed": gap.mixed}
        report["gap_report"] = gap.to_json()
        report["e_exact"] = gap.e_exact
        if not gap.ok:
            code = EXIT_FAIL
    else:
        results = {args.mode: bhf_mod.minimize(H, space, args.mode, opts)}
        report["e_exact"] = bhf_mod.exact_ground_energy(H, space)
        if results[args.mode].energy < report["e_exact"] - opts.tol:
            code = EXIT_FAIL
    for name, res in results.items():
        report[name] = {
            "energy": res.energy,
            "converged": res.converged,
            "params": params_to_json(res.params),
            "restart_energies": res.restart_energies,
        }
    if not all(res.converged for res in results.values()):
        report["warning"] = "best restart hit the iteration limit"
        code = max(code, EXIT_NUMERIC)
    return report, code


COMMANDS = {"purity": cmd_purity, "repr": cmd_repr, "wick": cmd_wick, "bhf": cmd_bhf}


# --- plumbing ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    common.add_argument("--seed", type=int, default=0, help="seed of the single RNG")
    common.add_argument("--cutoff", type=int, default=None, help="boson occupation cutoff")
    common.add_argument("--restarts", type=int, default=20, help="optimizer restarts")
    common.add_argument("--report", type=Path, default=None, help="write the report here")
    common.add_argument("--manifest", type=Path, default=None, help="manifest path")

    p = sub.add_parser("purity", parents=[common], help="quasifree purity test")
    p.add_argument("--state", type=Path, required=True)
    p.add_argument("--space", type=Path)

    p = sub.add_parser("repr", parents=[common], help="representability conditions")
    p.add_argument("action", nargs="?", choices=["check"], default="check")
    p.add_argument("--state", type=Path, required=True)
    p.add_argument("--space", type=Path)
    p.add_argument("--samples", type=int, default=100, help="sampled polynomials")

    p = sub.add_parser("wick", parents=[common], help="quasifree expectation of an expression")
    p.add_argument("expr", help='ladder expression, e.g. "c*(1) c(1)"')
    p.add_argument("--state", type=Path, required=True)
    p.add_argument("--space", type=Path)
    p.add_argument("--cross-check", action="store_true", help="also evaluate on Fock space")

    p = sub.add_parser("bhf", parents=[common], help="quasifree energy minimization")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--mode", choices=["pure", "mixed", "both"], default="both")
    p.add_argument("--samples", type=int, default=200, help="sampled mixed states")

    p = sub.add_parser("replay", help="re-run a manifest and compare reports")
    p.add_argument("manifest_path", type=Path)
    p.add_argument("--report", type=Path, default=None)
    return parser


def _config(args) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("report", "manifest", "command"):
            continue
        out[key] = str(Path(value).resolve()) if isinstance(value, Path) else value
    return out


def _default_manifest(args) -> Path:
    if args.manifest is not None:
        return args.manifest
    if args.report is not None:
        return args.report.with_suffix(".manifest.json")
    return Path("qflab-manifest.json")


def _error_code(exc: BaseException) -> int:
    if isinstance(exc, NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return EXIT_INPUT


def _execute(command: str, args) -> tuple[dict | None, int]:
    try:
        return COMMANDS[command](args)
    except (QflabError, SchemaError, UsageError, ValueError, KeyError, OSError) as exc:
        code = _error_code(exc)
        print(f"qflab {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return None, code


def _replay(args) -> int:
    manifest = load_json(args.manifest_path)
    config = dict(manifest["config"])
    command = manifest["command"]
    for key in INPUT_ARGS:
        if config.get(key) is not None:
            config[key] = Path(config[key])
    ns = argparse.Namespace(**config, report=None, manifest=None, command=command)
    changed = [
        path for path, digest in manifest.get("inputs", {}).items()
        if not Path(path).exists() or file_digest(path) != digest
    ]
    if changed:
        print(f"qflab replay: inputs changed since the run: {changed}", file=sys.stderr)
        return EXIT_INPUT
    report, code = _execute(command, ns)
    if report is None:
        return code
    text = dumps(report)
    recorded = manifest.get("outputs", {}).get("report")
    identical = None
    if recorded and Path(recorded).exists():
        identical = Path(recorded).read_text() == text
    elif manifest.get("report_digest"):
        identical = hashlib.sha256(text.encode()).hexdigest() == manifest["report_digest"]
    if args.report is not None:
        args.report.write_text(text)
    sys.stdout.write(text)
    print(f"qflab replay: identical={identical}", file=sys.stderr)
    if identical is False:
        return EXIT_FAIL
    return code if code == manifest.get("exit_code", code) else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.command == "replay":
        try:
            return _replay(args)
        except (SchemaError, KeyError, OSError, json.JSONDecodeError) as exc:
            print(f"qflab replay: {exc}", file=sys.stderr)
            return EXIT_INPUT

    start = time.perf_counter()
    report, code = _execute(args.command, args)
    wall = time.perf_counter() - start
    if report is not None:
        text = dumps(report)
        sys.stdout.write(text)
        if args.report is not None:
            args.report.write_text(text)
    inputs = {}
    for key in INPUT_ARGS:
        path = getattr(args, key, None)
        if path is not None and Path(path).exists():
            inputs[str(Path(path).resolve())] = file_digest(path)
    manifest = {
        "command": args.command,
        "config": _config(args),
        "seed": args.seed,
        "version": __version__,
        "inputs": inputs,
        "outputs": {"report": str(args.report.resolve()) if args.report else None},
        "report_digest": hashlib.sha256(dumps(report).encode()).hexdigest() if report else None,
        "exit_code": code,
        "wall_time_s": wall,
        "float_policy": FLOAT_POLICY,
    }
    _default_manifest(args).write_text(dumps(manifest))
    return code


if __name__ == "__main__":
    sys.exit(main())
