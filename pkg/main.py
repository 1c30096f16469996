"""
Command-line entry point for the Fourier-restricted flow laboratory.

Subcommands:
    lattice verify        exact lattice identities and closure
    interactions verify   catalogued interactions against generic convolution
    simulate              dyadic or Galerkin runs, written as CSV
    diagnose              blowup, ladder, Lyapunov and regularity reports for a run
    grid                  physical-space samples of a field
    sheet                 mollified vortex sheet and its determinant identities
"""
import argparse
import logging
import os
import platform
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import orjson
import pydantic
import scipy
from pydantic import ValidationError

from bilinear import verify_appendix_interactions
from config import Settings, get_settings
from diagnostics import (
    energy_ladder,
    euler_blowup_bound,
    hypo_lyapunov_criterion,
    lyapunov_along,
    regularity_functionals,
    run_table,
)
from dyadic import alpha_from_tilde, psi_preset
from evolve import detect_blowup, integrate_galerkin, sweep
from export import (
    general_field_to_json,
    grid_table,
    read_field,
    read_json,
    read_table,
    to_json,
    trajectory_from_table,
    write_json,
    write_table,
)
from field import from_psi
from lattice import verify_lattice_identities
from models import (
    CapacityError,
    LabError,
    ModelKind,
    ParameterRangeError,
    RunManifest,
    SimConfig,
    VerificationError,
)
from physical import det3, evaluate_at, general_symmetry, strain_tensor, synthesize, vortex_sheet

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2

SIM_KEYS = ("model", "alpha", "nu", "shells", "t_end", "rtol", "atol", "dt_min",
            "max_steps", "blowup_threshold", "gamma")
RUN_KEYS = ("psi0", "out", "galerkin", "jobs", "alpha_tilde")


# -------------------------
# Logging Setup
# -------------------------

def setup_logging(settings: Settings):
    """Configure logging with an optional rotating log file."""
    root_logger = logging.getLogger()
    root_logger.setLevel(settings.log_level)
    root_logger.handlers.clear()

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(settings.log_level)
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    root_logger.addHandler(console_handler)

    if settings.log_to_file:
        log_dir = os.path.dirname(settings.log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)
        file_handler = RotatingFileHandler(
            settings.log_file,
            maxBytes=settings.log_max_bytes,
            backupCount=settings.log_backup_count
        )
        file_handler.setLevel(settings.log_level)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        root_logger.addHandler(file_handler)

    logger.info(f"Logging configured: level={settings.log_level}, file={settings.log_file if settings.log_to_file else 'off'}")


# -------------------------
# Manifests
# -------------------------

def library_versions() -> Dict[str, str]:
    settings = get_settings()
    return {
        settings.app_name: settings.app_version,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "orjson": orjson.__version__,
    }


def manifest_path(output: Path) -> Path:
    return output.with_name(output.stem + ".manifest.json")


def write_manifest(command: str, config: Dict[str, Any], outputs: List[Path], seed: Optional[int] = None) -> Path:
    manifest = RunManifest(
        command=command,
        config=config,
        seed=seed,
        versions=library_versions(),
        outputs=[str(p) for p in outputs],
    )
    manifest.finish()
    return write_json(manifest_path(outputs[0]), manifest)


def default_output(name: str) -> Path:
    return Path(get_settings().output_dir) / name


def emit(report: Any, out: Optional[str]) -> Optional[Path]:
    """Write a report to out, or print it when no path is given."""
    if out:
        return write_json(out, report)
    sys.stdout.write(to_json(report).decode() + "\n")
    return None


# -------------------------
# Subcommands
# -------------------------

def cmd_lattice(args, command: str) -> int:
    report = verify_lattice_identities(args.max_shell, args.bits)
    path = emit(report, args.out)
    if path:
        write_manifest(command, {"max_shell": args.max_shell, "bits": args.bits}, [path])
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def cmd_interactions(args, command: str) -> int:
    report = verify_appendix_interactions(args.max_m, args.tol)
    path = emit(report, args.out)
    if path:
        write_manifest(command, {"max_m": args.max_m, "tol": args.tol}, [path])
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def merge_run_options(args) -> Dict[str, Any]:
    """Flat JSON config file values, overridden by every flag given on the command line."""
    merged: Dict[str, Any] = {}
    if args.config:
        loaded = read_json(args.config)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config} must hold a flat JSON object")
        merged.update(loaded)
    for key in SIM_KEYS + RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value
    unknown = set(merged) - set(SIM_KEYS) - set(RUN_KEYS)
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    return merged


def run_outputs(out: Path, count: int) -> List[Path]:
    if count == 1:
        return [out]
    return [out.with_name(f"{out.stem}_{i}{out.suffix}") for i in range(count)]


def cmd_simulate(args, command: str) -> int:
    options = merge_run_options(args)
    nus = options.get("nu", [0.0])
    nus = nus if isinstance(nus, list) else [nus]
    if "alpha_tilde" in options:
        options["alpha"] = alpha_from_tilde(float(options["alpha_tilde"]))
    base = {key: options[key] for key in SIM_KEYS if key in options and key != "nu"}
    configs = [SimConfig(nu=float(nu), **base) for nu in nus]
    N = configs[0].shells
    psi0 = psi_preset(options.get("psi0", "delta0"), N)
    out = Path(options.get("out") or default_output("run.csv"))
    outputs = run_outputs(out, len(configs))

    if options.get("galerkin"):
        trajectories = [integrate_galerkin(from_psi(psi0), cfg) for cfg in configs]
    else:
        trajectories = sweep(psi0, configs, options.get("jobs"))

    for cfg, traj, path in zip(configs, trajectories, outputs):
        write_table(path, run_table(traj))
        echo = {**options, **cfg.model_dump(mode="json")}
        echo.pop("out", None)
        write_manifest(command, echo, [path])
        sys.stdout.write(
            f"{path}: {traj.termination.value} at t={traj.t_final:.17g} "
            f"after {traj.steps} steps ({traj.rejected} rejected)\n"
        )
    return EXIT_OK


def cmd_diagnose(args, command: str) -> int:
    if args.alpha_tilde is not None:
        alpha = alpha_from_tilde(args.alpha_tilde)
    else:
        alpha = args.alpha
    gamma = args.gamma if args.gamma is not None else get_settings().default_gamma
    traj = trajectory_from_table(read_table(args.traj), alpha=alpha, nu=args.nu, gamma=gamma)
    psi = traj.psi()
    report: Dict[str, Any] = {
        "trajectory": {"path": args.traj, "shells": traj.N, "samples": int(traj.times.size),
                       "t_final": traj.t_final, "model": traj.config.model.value},
        "regularity": regularity_functionals(psi[-1], traj),
        "blowup": detect_blowup(traj),
        "saturation_time": traj.saturation_time(),
    }
    status = EXIT_OK
    if traj.config.model == ModelKind.EULER:
        E0 = float(np.sum(psi[0] ** 2))
        if E0 > 0.0:
            report["euler_bound"] = euler_blowup_bound(E0=E0)
        if np.min(psi[0]) >= 0.0:
            ladder = energy_ladder(traj, args.r)
            report["ladder"] = ladder
            if not ladder.passed:
                status = EXIT_VERIFICATION
    else:
        alpha_tilde = alpha * 2.0 * np.log(2.0) / np.log(3.0)
        criterion = hypo_lyapunov_criterion(psi[0], gamma, float(alpha_tilde), args.nu)
        report["lyapunov"] = criterion
        if criterion.qualifies:
            along = lyapunov_along(traj, criterion)
            if along["t"].size:
                report["lyapunov_along"] = {
                    "samples": int(along["t"].size),
                    "min_margin": float(np.min(along["H"] - along["lower"])),
                    "min_rate_margin": float(np.min(along["rate"] - along["rate_floor"])),
                }

    out = Path(args.out) if args.out else default_output("report.json")
    path = write_json(out, report)
    write_manifest(command, {"traj": args.traj, "alpha": alpha, "nu": args.nu,
                             "gamma": gamma, "r": args.r}, [path])
    return status


def cmd_grid(args, command: str) -> int:
    if args.field:
        field = read_field(args.field)
        source = {"field": args.field}
    else:
        field = from_psi(psi_preset(args.psi0, args.shells))
        source = {"psi0": args.psi0, "shells": args.shells}
    grid = synthesize(field, args.resolution)
    out = Path(args.out) if args.out else default_output("grid.csv")
    path = write_table(out, grid_table(grid))
    write_manifest(command, {**source, "resolution": args.resolution}, [path])
    return EXIT_OK


def cmd_sheet(args, command: str) -> int:
    sheet = vortex_sheet(args.epsilon, args.truncation)
    samples = evaluate_at(sheet.field, np.array([[0.0, 0.0, 0.0], [0.0, 1.0 / 3.0, 1.0 / 3.0]]))
    det = det3(strain_tensor(samples["grad"]))
    report = {
        "epsilon": sheet.epsilon,
        "truncation": sheet.truncation,
        "g0_over_epsilon": sheet.g0_over_epsilon,
        "origin": {"expected": sheet.origin_det_expected(), "observed": float(-4.0 * det[0])},
        "region": {"expected": sheet.region_det_expected(), "observed": float(-4.0 * det[1])},
        "helicity": sheet.field.helicity(),
        "symmetry": general_symmetry(sheet.field),
        "field": general_field_to_json(sheet.field),
    }
    out = Path(args.out) if args.out else default_output("sheet.json")
    path = write_json(out, report)
    write_manifest(command, {"epsilon": args.epsilon, "truncation": args.truncation}, [path])
    return EXIT_OK


# -------------------------
# Parser
# -------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fourier-lab",
        description="Fourier-restricted Euler and hypodissipative Navier-Stokes laboratory",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    lattice = commands.add_parser("lattice", help="Constraint lattice checks")
    lattice_actions = lattice.add_subparsers(dest="action", required=True)
    lattice_verify = lattice_actions.add_parser("verify", help="Exact shell identities and closure")
    lattice_verify.add_argument("--max-shell", type=int, required=True, help="Deepest shell to check")
    lattice_verify.add_argument("--bits", type=int, default=None, help="Integer capacity (default from settings)")
    lattice_verify.add_argument("--out", default=None, help="Report path (default: stdout)")
    lattice_verify.set_defaults(handler=cmd_lattice)

    interactions = commands.add_parser("interactions", help="Interaction catalogue checks")
    interaction_actions = interactions.add_subparsers(dest="action", required=True)
    interactions_verify = interaction_actions.add_parser("verify", help="Compare the nine cases with convolution")
    interactions_verify.add_argument("--max-m", type=int, required=True, help="Largest generation")
    interactions_verify.add_argument("--tol", type=float, default=1e-12, help="Relative tolerance")
    interactions_verify.add_argument("--out", default=None, help="Report path (default: stdout)")
    interactions_verify.set_defaults(handler=cmd_interactions)

    simulate = commands.add_parser("simulate", help="Integrate a trajectory")
    simulate.add_argument("--config", default=None, help="Flat JSON file of run options; flags override it")
    simulate.add_argument("--model", choices=[m.value for m in ModelKind], default=None)
    simulate.add_argument("--alpha", type=float, default=None, help="Exponent of (-Δ)^α")
    simulate.add_argument("--alpha-tilde", dest="alpha_tilde", type=float, default=None,
                          help="Dyadic exponent; sets α = α̃ log3/(2 log2)")
    simulate.add_argument("--nu", type=float, nargs="+", default=None, help="Viscosity; several values sweep")
    simulate.add_argument("--shells", type=int, default=None, help="Truncation shell N")
    simulate.add_argument("--psi0", default=None, help="delta0, geometric(q) or a CSV column file")
    simulate.add_argument("--t-end", dest="t_end", type=float, default=None)
    simulate.add_argument("--rtol", type=float, default=None)
    simulate.add_argument("--atol", type=float, default=None)
    simulate.add_argument("--dt-min", dest="dt_min", type=float, default=None)
    simulate.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    simulate.add_argument("--blowup-threshold", dest="blowup_threshold", type=float, default=None)
    simulate.add_argument("--gamma", type=float, default=None, help="Exponent of the H_γ column")
    simulate.add_argument("--galerkin", action="store_true", help="Integrate the full truncated field")
    simulate.add_argument("--jobs", type=int, default=None, help="Worker processes for sweeps")
    simulate.add_argument("--out", default=None, help="CSV path")
    simulate.set_defaults(handler=cmd_simulate)

    diagnose = commands.add_parser("diagnose", help="Diagnostics for a run CSV")
    diagnose.add_argument("--traj", required=True, help="CSV written by simulate")
    diagnose.add_argument("--gamma", type=float, default=None)
    diagnose.add_argument("--alpha", type=float, default=0.0)
    diagnose.add_argument("--alpha-tilde", dest="alpha_tilde", type=float, default=None)
    diagnose.add_argument("--nu", type=float, default=0.0)
    diagnose.add_argument("--r", type=float, default=0.4, help="Ladder ratio")
    diagnose.add_argument("--out", default=None, help="Report path")
    diagnose.set_defaults(handler=cmd_diagnose)

    grid = commands.add_parser("grid", help="Sample a field on the M³ grid")
    source = grid.add_mutually_exclusive_group(required=True)
    source.add_argument("--field", default=None, help="Field JSON file")
    source.add_argument("--psi0", default=None, help="Symmetric field from ψ data")
    grid.add_argument("--shells", type=int, default=4, help="Truncation used with --psi0")
    grid.add_argument("--resolution", type=int, required=True, help="Points per axis")
    grid.add_argument("--out", default=None, help="CSV path")
    grid.set_defaults(handler=cmd_grid)

    sheet = commands.add_parser("sheet", help="Mollified vortex sheet")
    sheet.add_argument("--epsilon", type=float, required=True, help="Mollification width in (0, 1)")
    sheet.add_argument("--truncation", type=int, required=True, help="Largest axis frequency kept")
    sheet.add_argument("--out", default=None, help="Report path")
    sheet.set_defaults(handler=cmd_sheet)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 1 on a failed verification, 2 on usage or parameter errors
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = get_settings()
    setup_logging(settings)
    command = " ".join(argv)
    logger.info("Command started", extra={"command": command})

    try:
        status = args.handler(args, command)
    except VerificationError as exc:
        logger.error("Verification failed", extra={"error": str(exc), "counterexample": exc.counterexample})
        sys.stderr.write(f"verification failed: {exc}\n")
        return EXIT_VERIFICATION
    except ParameterRangeError as exc:
        logger.warning("Parameter out of range", extra={"error": str(exc), "inequality": exc.inequality})
        sys.stderr.write(f"parameter error: {exc} (requires {exc.inequality})\n")
        return EXIT_USAGE
    except (ValidationError, CapacityError, ValueError, OSError) as exc:
        logger.warning("Invalid input", extra={"error": str(exc)})
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except LabError as exc:
        logger.error("Run failed", extra={"error": str(exc)}, exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VERIFICATION

    logger.info("Command finished", extra={"command": command, "status": status})
    return status


if __name__ == "__main__":
    sys.exit(main())
