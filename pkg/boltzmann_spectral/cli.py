"""Command-line entry point: coeffs, solve, verify and reconstruct.

Exit codes: 0 ok, 64 usage, 1 I/O, 2 numeric failure, 3 inadmissible initial data,
5 failed verification.
"""

import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from .cascade import SpectralState, cascade_solve, evaluate_solution
from .coefficients import CoeffTable, build_table, spectral_bound_audit
from .config import settings
from .diagnostics_io import (
    grid_mass,
    read_init,
    read_table,
    reconstruct_f,
    write_field,
    write_report,
    write_series,
    write_table,
)
from .errors import AdmissibilityError, SpectralError, UsageError
from .galerkin import assemble, integrate, output_times, trajectory_report
from .models import KernelParams, RunConfig, VelocityGrid
from .verification import SUITES, run_suites

EXIT_OK = 0
EXIT_IO = 1
EXIT_NUMERIC = 2
EXIT_ADMISSIBILITY = 3
EXIT_VERIFY = 5
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _add_kernel_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--s", type=float, default=0.5, help="kernel singularity exponent in (0, 1)")
    parser.add_argument("--kappa-beta", type=float, default=1.0, help="kernel amplitude")
    parser.add_argument("--nmax", type=int, default=6, help="energy cutoff 2n + l <= nmax")
    parser.add_argument("--table", type=Path, default=None, help="coefficient table path")
    parser.add_argument("--threads", type=int, default=None, help="worker pool for table builds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boltzmann-spectral", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    coeffs = commands.add_parser("coeffs", help="build and write a coefficient table")
    _add_kernel_args(coeffs)
    coeffs.add_argument("--out", type=Path, default=None, help="table output path")

    solve = commands.add_parser("solve", help="evolve initial data with the cascade and/or Galerkin solver")
    _add_kernel_args(solve)
    solve.add_argument("--init", type=Path, required=True, help='JSON {"n,l,m": [re, im]}')
    solve.add_argument("--method", choices=["cascade", "galerkin", "both"], default="both")
    solve.add_argument("--t-end", type=float, default=2.0)
    solve.add_argument("--dt", type=float, default=0.05, help="initial time step")
    solve.add_argument("--rel-tol", type=float, default=1e-8)
    solve.add_argument("--c0", type=float, default=0.0, help="Gelfand-Shilov weight rate")
    solve.add_argument("--samples", type=int, default=11, help="number of output times")
    solve.add_argument("--out", type=Path, default=None, help="output directory for series and reports")

    verify = commands.add_parser("verify", help="run the verification suites on a table")
    _add_kernel_args(verify)
    verify.add_argument("--suites", type=str, default=None, help=f"comma list from {','.join(SUITES)}")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", type=Path, default=None, help="JSON verdict path")

    reconstruct = commands.add_parser("reconstruct", help="evaluate f = mu + sqrt(mu) g on a velocity grid")
    _add_kernel_args(reconstruct)
    reconstruct.add_argument("--init", type=Path, required=True)
    reconstruct.add_argument("--time", type=float, default=0.0, help="evolve with the cascade to this time")
    reconstruct.add_argument("--extent", type=float, default=8.0)
    reconstruct.add_argument("--points", type=int, default=64)
    reconstruct.add_argument("--out", type=Path, default=Path("f.npy"))
    return parser


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse arguments into a validated RunConfig.

    Raises:
        UsageError: On unknown flags or an empty suite list
        ValidationError: On out-of-range values
    """
    args = build_parser().parse_args(argv)
    suites = None
    if getattr(args, "suites", None) is not None:
        suites = [name.strip() for name in args.suites.split(",") if name.strip()]
        if not suites:
            raise UsageError("--suites must name at least one suite")
        unknown = [name for name in suites if name not in SUITES]
        if unknown:
            raise UsageError(f"Unknown suites {unknown}; available: {', '.join(SUITES)}")

    fields = {
        "command": args.command,
        "s": args.s,
        "kappa_beta": args.kappa_beta,
        "n_max_energy": args.nmax,
        "table_path": args.table,
        "threads": args.threads,
        "out_path": args.out,
        "suites": suites,
    }
    if args.command == "solve":
        fields |= {
            "init_path": args.init,
            "method": args.method,
            "t_end": args.t_end,
            "dt_init": args.dt,
            "rel_tol": args.rel_tol,
            "c0": args.c0,
            "samples": args.samples,
        }
    elif args.command == "verify":
        fields["seed"] = args.seed
    elif args.command == "reconstruct":
        fields |= {
            "init_path": args.init,
            "time": args.time,
            "grid": VelocityGrid(extent=args.extent, points_per_axis=args.points),
        }
    return RunConfig(**fields)


def default_table_path(config: RunConfig) -> Path:
    """Table location under BOLTZMANN_TABLE_DIR named by (s, kappa_beta, N)."""
    name = f"table_s{config.s:g}_k{config.kappa_beta:g}_n{config.n_max_energy}.bspt"
    return settings.table_dir / name


def _build(config: RunConfig) -> CoeffTable:
    params = KernelParams(s=config.s, kappa_beta=config.kappa_beta)
    return build_table(config.n_max_energy, params, settings.quadrature_spec(), threads=config.threads)


def load_or_build_table(config: RunConfig) -> CoeffTable:
    """Read the configured table, or build and cache it when the file does not exist yet.

    Raises:
        UsageError: If an existing table was built for another s or kappa_beta
    """
    path = config.table_path or default_table_path(config)
    if path.exists():
        table = read_table(path)
        if table.params.s != config.s or table.params.kappa_beta != config.kappa_beta:
            logger.error(f"Table {path} does not match the requested kernel")
            raise UsageError(
                f"Table {path} was built for s={table.params.s}, kappa_beta={table.params.kappa_beta}, "
                f"but s={config.s}, kappa_beta={config.kappa_beta} was requested"
            )
        return table
    logger.info(f"No table at {path}; building one")
    table = _build(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_table(path, table)
    return table


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def cmd_coeffs(config: RunConfig) -> int:
    table = _build(config)
    path = config.out_path or config.table_path or default_table_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = write_table(path, table)
    c_low, c_high = spectral_bound_audit(table)
    _emit(
        {
            "table": str(path),
            "digest": digest,
            "null_space": {f"{n},{l}": table.linear[(n, l)] for n, l in ((0, 0), (1, 0), (0, 1))},
            "lambda_20": table.linear.get((2, 0)),
            "spectral_band": [c_low, c_high],
            "mu_entries": len(table.mu),
        }
    )
    return EXIT_OK


def _max_discrepancy(first: list[SpectralState], second: list[SpectralState]) -> float:
    worst = 0.0
    for a, b in zip(first, second, strict=True):
        modes = set(a.coeffs) | set(b.coeffs)
        scale = max((abs(b.get(mode)) for mode in modes), default=0.0)
        if scale == 0.0:
            continue
        worst = max(worst, max(abs(a.get(mode) - b.get(mode)) for mode in modes) / scale)
    return worst


def cmd_solve(config: RunConfig) -> int:
    init = read_init(config.init_path)
    if init.max_energy() > config.n_max_energy:
        raise AdmissibilityError(
            f"Initial data reaches energy {init.max_energy()} beyond --nmax {config.n_max_energy}"
        )
    table = load_or_build_table(config)
    system = assemble(table, config.n_max_energy)
    times = output_times(config.t_end, config.samples)

    runs = {}
    if config.method in ("cascade", "both"):
        solution = cascade_solve(init, table, config.n_max_energy)
        trajectory = [evaluate_solution(solution, t) for t in times]
        runs["cascade"] = (trajectory_report(system, "cascade", times, trajectory, config.c0), trajectory)
    if config.method in ("galerkin", "both"):
        runs["galerkin"] = integrate(
            system, init, config.t_end, config.dt_init, config.rel_tol, config.c0, config.samples
        )
    if len(runs) == 2:
        discrepancy = _max_discrepancy(runs["cascade"][1], runs["galerkin"][1])
        for report, _ in runs.values():
            report.discrepancy = discrepancy
        logger.info(f"Cascade/Galerkin discrepancy {discrepancy:.3e}")

    if config.out_path is not None:
        config.out_path.mkdir(parents=True, exist_ok=True)
        for method, (report, trajectory) in runs.items():
            write_series(config.out_path / f"series_{method}.csv", report, trajectory, list(system.modes))
            write_report(config.out_path / f"report_{method}.json", report)
    _emit({method: report.model_dump(mode="json") for method, (report, _) in runs.items()})
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    table = load_or_build_table(config)
    report = run_suites(table, config.suites, config.seed)
    if config.out_path is not None:
        write_report(config.out_path, report)
    _emit(report.model_dump(mode="json"))
    if not report.passed:
        logger.error(f"Verification failed: {', '.join(report.failed())}")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_reconstruct(config: RunConfig) -> int:
    state = read_init(config.init_path)
    if config.time > 0:
        table = load_or_build_table(config)
        solution = cascade_solve(state, table, config.n_max_energy)
        state = evaluate_solution(solution, config.time)
    f, residual = reconstruct_f(state, config.grid)
    out = config.out_path or Path("f.npy")
    write_field(out, f)
    _emit(
        {
            "field": str(out),
            "time": config.time,
            "mass": grid_mass(f, config.grid),
            "imag_residual": residual,
            "max_f": float(np.max(f)),
        }
    )
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "coeffs": cmd_coeffs,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "reconstruct": cmd_reconstruct,
}


def configure_logging() -> None:
    logger.remove()
    logger.add(sys.stderr, level=settings.log_level)


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and map failures onto exit codes."""
    try:
        config = parse_config(argv)
        return COMMANDS[config.command](config)
    except SystemExit as e:
        return int(e.code or 0)
    except (UsageError, ValidationError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except AdmissibilityError as e:
        logger.error(f"Inadmissible initial data: {e}")
        return EXIT_ADMISSIBILITY
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_IO
    except SpectralError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERIC
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE


def main() -> None:
    configure_logging()
    sys.exit(run())
