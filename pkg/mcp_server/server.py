"""MCP server exposing the spectral Boltzmann solver.

Coefficient tables are expensive, so the server keeps every table it builds in a
process-wide cache keyed by (s, kappa_beta, n_max_energy). Heavy computations run in a
worker thread to keep the event loop responsive.
"""

import asyncio
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Annotated

from fastmcp import FastMCP
from loguru import logger
from starlette.requests import Request
from starlette.responses import JSONResponse

from boltzmann_spectral.cascade import SpectralState, cascade_solve, evaluate_solution
from boltzmann_spectral.coefficients import CoeffTable, build_table, spectral_bound_audit
from boltzmann_spectral.config import settings
from boltzmann_spectral.diagnostics_io import write_table
from boltzmann_spectral.errors import SpectralError
from boltzmann_spectral.galerkin import output_times
from boltzmann_spectral.models import KernelParams, ModeIndex
from boltzmann_spectral.verification import run_suites

# Tables built during this process (initialized in lifespan)
table_cache: dict[tuple[float, float, int], CoeffTable] = {}
# One lock per table key; concurrent requests for the same table wait for a single build
table_locks: dict[tuple[float, float, int], asyncio.Lock] = {}


@asynccontextmanager
async def lifespan(app: FastMCP):
    """Reset the table cache on startup and release it on shutdown."""
    logger.info("Starting boltzmann-spectral MCP server...")
    table_cache.clear()
    table_locks.clear()

    yield

    logger.info(f"Shutting down MCP server, dropping {len(table_cache)} cached tables")
    table_cache.clear()


mcp = FastMCP("boltzmann-spectral", lifespan=lifespan)


async def get_table(s: float, n_max_energy: int, kappa_beta: float = 1.0) -> CoeffTable:
    """Return a cached table, building it in a worker thread on first use."""
    key = (s, kappa_beta, n_max_energy)
    params = KernelParams(s=s, kappa_beta=kappa_beta)
    async with table_locks.setdefault(key, asyncio.Lock()):
        if key not in table_cache:
            logger.info(f"Building table for s={s}, kappa_beta={kappa_beta}, N={n_max_energy}")
            table_cache[key] = await asyncio.to_thread(
                build_table,
                n_max_energy,
                params,
                settings.quadrature_spec(),
                settings.threads,
            )
    return table_cache[key]


def parse_state(init: dict[str, list[float]]) -> SpectralState:
    coeffs = {ModeIndex.parse(key): complex(*value) for key, value in init.items()}
    state = SpectralState(coeffs=coeffs)
    state.reality_flag = state.conjugation_defect() == 0.0
    return state


@mcp.tool()
async def build_coefficients(
    s: Annotated[float, "Kernel singularity exponent in (0, 1)"],
    n_max_energy: Annotated[int, "Energy cutoff N; coefficients up to 2n + l <= N"],
    kappa_beta: Annotated[float, "Kernel amplitude"] = 1.0,
    out_path: Annotated[str | None, "Optional path to write the table to"] = None,
) -> dict:
    """Build (or reuse) a coefficient table and summarize it.

    Returns:
        Dictionary with the eigenvalues on the null space, lambda_20, the spectral band
        [c_low, c_high], the number of mu entries and, if written, the digest and path
    """
    try:
        table = await get_table(s, n_max_energy, kappa_beta)
        c_low, c_high = spectral_bound_audit(table)
        summary = {
            "null_space": [table.linear[key] for key in ((0, 0), (1, 0), (0, 1))],
            "lambda_20": table.linear.get((2, 0)),
            "spectral_band": [c_low, c_high],
            "mu_entries": len(table.mu),
        }
        if out_path:
            summary["digest"] = await asyncio.to_thread(write_table, Path(out_path), table)
            summary["path"] = out_path
        return summary
    except (SpectralError, ValueError, OSError) as e:
        logger.error(f"Failed to build coefficients: {e}")
        return {"error": str(e)}


@mcp.tool()
async def eigenvalues(
    s: Annotated[float, "Kernel singularity exponent in (0, 1)"],
    n_max_energy: Annotated[int, "Energy cutoff N"],
    kappa_beta: Annotated[float, "Kernel amplitude"] = 1.0,
) -> dict:
    """List lambda_{n,l} for every (n, l) with 2n + l <= N.

    Returns:
        Dictionary with "eigenvalues": [{"n", "l", "lambda"}, ...]
    """
    try:
        table = await get_table(s, n_max_energy, kappa_beta)
        rows = [{"n": n, "l": l, "lambda": value} for (n, l), value in sorted(table.linear.items())]
        return {"eigenvalues": rows}
    except (SpectralError, ValueError) as e:
        logger.error(f"Failed to list eigenvalues: {e}")
        return {"error": str(e)}


@mcp.tool()
async def solve_cascade(
    s: Annotated[float, "Kernel singularity exponent in (0, 1)"],
    n_max_energy: Annotated[int, "Energy cutoff N of the solved ball"],
    init: Annotated[dict[str, list[float]], 'Initial coefficients {"n,l,m": [re, im]}'],
    t_end: Annotated[float, "Final time"],
    samples: Annotated[int, "Number of output times"] = 11,
    kappa_beta: Annotated[float, "Kernel amplitude"] = 1.0,
) -> dict:
    """Solve the mode cascade in closed form and sample it.

    Returns:
        Dictionary with "times" and "modes", mapping "n,l,m" to [[re, im], ...] per time
    """
    try:
        state = parse_state(init)
        table = await get_table(s, n_max_energy, kappa_beta)
        solution = await asyncio.to_thread(cascade_solve, state, table, n_max_energy)
        times = output_times(t_end, samples)
        states = [evaluate_solution(solution, t) for t in times]
        return {
            "times": times,
            "modes": {
                f"{mode.n},{mode.l},{mode.m}": [[v.real, v.imag] for v in (st.get(mode) for st in states)]
                for mode in sorted(solution.modes, key=ModeIndex.sort_key)
            },
        }
    except (SpectralError, ValueError) as e:
        logger.error(f"Cascade solve failed: {e}")
        return {"error": str(e)}


@mcp.tool()
async def run_verification(
    s: Annotated[float, "Kernel singularity exponent in (0, 1)"],
    n_max_energy: Annotated[int, "Energy cutoff N of the audited table"],
    suites: Annotated[list[str] | None, "Suites to run (default: all)"] = None,
    seed: Annotated[int, "Random seed for the trilinear audit"] = 0,
    kappa_beta: Annotated[float, "Kernel amplitude"] = 1.0,
) -> dict:
    """Run the verification suites and return the machine-readable verdict."""
    try:
        table = await get_table(s, n_max_energy, kappa_beta)
        report = await asyncio.to_thread(run_suites, table, suites, seed)
        return report.model_dump(mode="json")
    except (SpectralError, ValueError) as e:
        logger.error(f"Verification failed to run: {e}")
        return {"error": str(e)}


@mcp.custom_route("/health", methods=["GET"])
async def health(request: Request):
    return JSONResponse({"status": "ok", "cached_tables": len(table_cache)})


if __name__ == "__main__":
    mcp.run(transport="streamable-http", port=settings.mcp_server_port)
