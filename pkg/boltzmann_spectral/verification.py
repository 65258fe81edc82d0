"""Self-consistency suites run against a coefficient table."""

import math
from collections.abc import Callable, Iterable

import numpy as np
from loguru import logger

from .coefficients import (
    CoeffTable,
    coupling_map,
    cr_bound_audit,
    lambda_linear,
    mu_coefficient,
    mu_groups,
    mu_sum_audit,
    musq_sum,
    rad1_bound_audit,
    rad2_bound_audit,
    spectral_bound_audit,
    verify_orthogonality,
)
from .galerkin import trilinear_audit
from .models import SuiteResult, VerificationReport

EIGEN_TOL = 1e-9
INVARIANT_TOL = 1e-10
ORTHOGONALITY_TOL = 1e-8
SELECTION_TOL = 1e-12
SPECTRAL_LOW = 0.05
SPECTRAL_SPREAD = 50.0
MUSQ_TOL = 1e-8
MUSQ_MAX_ENERGY = 6
MUSQ_GROUP_FLOOR = 1e-5
SELECTION_MAX_ENERGY = 6
TRILINEAR_GROWTH = 2.0
TRILINEAR_TRIALS = 200


def eigen_identity(table: CoeffTable, seed: int) -> SuiteResult:
    """lambda = -lambda1 - lambda2 entrywise, and lambda vanishes on the null space."""
    worst, where = 0.0, None
    for key, value in table.linear.items():
        scale = max(abs(value), abs(table.lin1[key]), abs(table.lin2[key]), math.ulp(1.0))
        error = abs(value + table.lin1[key] + table.lin2[key]) / scale
        if error > worst:
            worst, where = error, key
    null_space = max(abs(table.linear[key]) for key in ((0, 0), (1, 0), (0, 1)))
    passed = worst <= EIGEN_TOL and null_space <= INVARIANT_TOL
    return SuiteResult(
        name="eigen-identity",
        passed=passed,
        metric=worst,
        threshold=EIGEN_TOL,
        detail=f"worst at (n, l) = {where}; max |lambda| on the null space {null_space:.3e}",
    )


def orthogonality(table: CoeffTable, seed: int) -> SuiteResult:
    worst, where = 0.0, None
    for group in mu_groups(table.n_max_energy, table.invariant_sources):
        report = verify_orthogonality(*group, table)
        if report.max_violation > worst:
            worst, where = report.max_violation, group
    return SuiteResult(
        name="orthogonality",
        passed=worst <= ORTHOGONALITY_TOL,
        metric=worst,
        threshold=ORTHOGONALITY_TOL,
        detail=f"worst group {where}",
    )


def selection_rules(table: CoeffTable, seed: int) -> SuiteResult:
    """Forbidden target orders evaluate to zero, and every expansion is energy-additive."""
    cap = min(table.n_max_energy, SELECTION_MAX_ENERGY)
    worst, where = 0.0, None
    for group in mu_groups(cap, table.invariant_sources):
        n, nt, l, lt = group
        row = table.mu_group(group)
        scale = max((abs(v) for v in row.values()), default=1.0)
        for m in range(-l, l + 1):
            for mt in range(-lt, lt + 1):
                for k in range(min(l, lt) + 1):
                    big_l = l + lt - 2 * k
                    for m_star in range(-big_l, big_l + 1):
                        if m_star == m + mt:
                            continue
                        value = mu_coefficient(
                            n, nt, l, lt, k, m, mt, table.params, table.spec,
                            m_star=m_star, enforce_selection=False,
                        )
                        if abs(value) / scale > worst:
                            worst, where = abs(value) / scale, (n, nt, l, lt, k, m, mt, m_star)
    try:
        coupling_map(table, table.n_max_energy)
        additive = True
    except AssertionError as e:
        logger.error(f"Energy additivity check failed: {e}")
        additive = False
    return SuiteResult(
        name="selection-rules",
        passed=additive and worst <= SELECTION_TOL,
        metric=worst,
        threshold=SELECTION_TOL,
        detail=f"worst forbidden entry {where}; energy additivity {'holds' if additive else 'violated'}",
    )


def spectral_bound(table: CoeffTable, seed: int) -> SuiteResult:
    """Band of lambda / ((2n+l+3/2)^s + l^(2s)) and the gap lambda >= lambda_20."""
    c_low, c_high = spectral_bound_audit(table)
    gap = table.linear.get((2, 0))
    if gap is None:
        gap = lambda_linear(2, 0, table.params, table.spec)
    below_gap = [
        key
        for key, value in table.linear.items()
        if key not in ((0, 0), (1, 0), (0, 1)) and value < gap * (1.0 - EIGEN_TOL)
    ]
    spread = c_high / c_low if c_low > 0 else math.inf
    return SuiteResult(
        name="spectral-bound",
        passed=c_low > SPECTRAL_LOW and spread < SPECTRAL_SPREAD and not below_gap,
        metric=c_low,
        threshold=SPECTRAL_LOW,
        detail=f"band [{c_low:.4g}, {c_high:.4g}], spread {spread:.3g}, below gap {below_gap}",
    )


def musq_crosscheck(table: CoeffTable, seed: int) -> SuiteResult:
    """Brute-force sum of |mu|^2 at m* = 0 against the axis-value route.

    Errors are relative to the larger of the two sums, floored at a fraction of the group's
    total sum of squares. Tuples that vanish by parity leave only rounding noise.
    """
    cap = min(table.n_max_energy, MUSQ_MAX_ENERGY)
    worst, where = 0.0, None
    for group in mu_groups(cap, table.invariant_sources):
        n, nt, l, lt = group
        row = table.mu_group(group)
        floor = MUSQ_GROUP_FLOOR * sum(abs(value) ** 2 for value in row.values())
        for k in range(min(l, lt) + 1):
            brute = sum(
                abs(value) ** 2 for key, value in row.items() if key[4] == k and key[5] + key[6] == 0
            )
            routed = musq_sum(n, nt, l, lt, k, 0, table.params, table.spec)
            error = abs(brute - routed) / max(brute, abs(routed), floor, math.ulp(1.0))
            if error > worst:
                worst, where = error, (n, nt, l, lt, k)
    return SuiteResult(
        name="musq-crosscheck",
        passed=worst <= MUSQ_TOL,
        metric=worst,
        threshold=MUSQ_TOL,
        detail=f"worst tuple {where}",
    )


def trilinear(table: CoeffTable, seed: int, trials: int = TRILINEAR_TRIALS) -> SuiteResult:
    """Fitted trilinear constants stay within a fixed factor of the N = 4 fit."""
    levels = list(range(4, table.n_max_energy + 1, 2))
    if not levels:
        return SuiteResult(
            name="trilinear", passed=True, metric=0.0, threshold=TRILINEAR_GROWTH,
            detail="table too small for a trilinear audit",
        )
    constants = {N: trilinear_audit(table, N, trials, seed).unweighted for N in levels}
    base = constants[4]
    growth = max(value / base for value in constants.values()) if base > 0 else math.inf
    return SuiteResult(
        name="trilinear",
        passed=growth <= TRILINEAR_GROWTH,
        metric=growth,
        threshold=TRILINEAR_GROWTH,
        detail=", ".join(f"C({N})={value:.4g}" for N, value in constants.items()),
    )


def cr_bound(table: CoeffTable, seed: int) -> SuiteResult:
    audits = [rad1_bound_audit(table), rad2_bound_audit(table), mu_sum_audit(table), cr_bound_audit(table)]
    constants = np.array([audit.constant for audit in audits])
    return SuiteResult(
        name="cr-bound",
        passed=bool(np.all(np.isfinite(constants))),
        metric=float(constants.max()),
        threshold=math.inf,
        detail=", ".join(f"{audit.name}={audit.constant:.4g} at {audit.argmax}" for audit in audits),
    )


SUITES: dict[str, Callable[[CoeffTable, int], SuiteResult]] = {
    "eigen-identity": eigen_identity,
    "orthogonality": orthogonality,
    "selection-rules": selection_rules,
    "spectral-bound": spectral_bound,
    "musq-crosscheck": musq_crosscheck,
    "trilinear": trilinear,
    "cr-bound": cr_bound,
}


def run_suites(
    table: CoeffTable, names: Iterable[str] | None = None, seed: int = 0
) -> VerificationReport:
    """Run the named suites (all by default) and collect the verdicts.

    Raises:
        ValueError: On an empty or unknown suite list
    """
    selected = list(SUITES) if names is None else list(names)
    if not selected:
        raise ValueError("At least one verification suite must be selected")
    unknown = [name for name in selected if name not in SUITES]
    if unknown:
        raise ValueError(f"Unknown verification suites {unknown}; available: {list(SUITES)}")

    results = []
    for name in selected:
        result = SUITES[name](table, seed)
        verdict = "passed" if result.passed else "FAILED"
        logger.info(f"Suite {name} {verdict}: metric {result.metric:.3e} (threshold {result.threshold:.3e})")
        results.append(result)
    return VerificationReport(
        passed=all(result.passed for result in results),
        s=table.params.s,
        n_max_energy=table.n_max_energy,
        suites=results,
    )
