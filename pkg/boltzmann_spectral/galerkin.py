"""Truncated Galerkin system S_N g: assembly, time integration and monitors.

The projected equation dg/dt + L g = S_N Gamma(g, g) is integrated with classical RK4 and
step doubling. Because the coupling is strictly energy-triangular, the truncated dynamics
of every retained mode coincide with the untruncated ones.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from .cascade import SpectralState
from .coefficients import CoeffTable, coupling_map, lambda_linear
from .errors import AdmissibilityError, StiffnessError, SupportError, WeightOverflowError
from .models import ModeIndex, SolveReport, TrilinearAudit, modes_up_to

_MAX_WEIGHT_EXPONENT = 700.0
_MONOTONE_SLACK = 1e-12
_MARGIN_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class QuadraticSystem:
    """Linear rates and quadratic couplings of the modes with energy <= n_max_energy."""

    n_max_energy: int
    modes: tuple[ModeIndex, ...]
    linear: np.ndarray
    quad: dict[ModeIndex, tuple[tuple[ModeIndex, ModeIndex, complex], ...]]
    s: float
    lambda_20: float
    index: dict[ModeIndex, int] = field(init=False, repr=False)
    energies: np.ndarray = field(init=False, repr=False)
    target_idx: np.ndarray = field(init=False, repr=False)
    source_a: np.ndarray = field(init=False, repr=False)
    source_b: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        index = {mode: i for i, mode in enumerate(self.modes)}
        flat = [
            (index[target], index[a], index[b], weight)
            for target, entries in self.quad.items()
            for a, b, weight in entries
        ]
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "energies", np.array([mode.energy() for mode in self.modes]))
        object.__setattr__(self, "target_idx", np.array([e[0] for e in flat], dtype=int))
        object.__setattr__(self, "source_a", np.array([e[1] for e in flat], dtype=int))
        object.__setattr__(self, "source_b", np.array([e[2] for e in flat], dtype=int))
        object.__setattr__(self, "weights", np.array([e[3] for e in flat], dtype=complex))

    @property
    def size(self) -> int:
        return len(self.modes)

    def to_vector(self, state: SpectralState) -> np.ndarray:
        outside = [mode for mode, value in state.coeffs.items() if value != 0 and mode not in self.index]
        if outside:
            raise SupportError(
                f"State carries mode {min(outside)} outside the system of energy {self.n_max_energy}"
            )
        return state.as_vector(self.modes)

    def to_state(self, vector: np.ndarray, reality_flag: bool = False) -> SpectralState:
        return SpectralState(
            coeffs={mode: complex(value) for mode, value in zip(self.modes, vector, strict=True)},
            reality_flag=reality_flag,
        )

    def linear_part(self, y: np.ndarray) -> np.ndarray:
        return self.linear * y

    def bilinear(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size, dtype=complex)
        np.add.at(out, self.target_idx, self.weights * x[self.source_a] * y[self.source_b])
        return out

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return self.bilinear(y, y) - self.linear * y

    def dissipation(self, y: np.ndarray) -> float:
        """||L^{1/2} g||^2."""
        return float(np.sum(self.linear * np.abs(y) ** 2))


def assemble(table: CoeffTable, n_max_energy: int) -> QuadraticSystem:
    """Project the collision operator onto the modes of energy <= n_max_energy."""
    quad = coupling_map(table, n_max_energy)
    modes = modes_up_to(n_max_energy)
    linear = np.array(
        [0.0 if mode.is_collision_invariant() else table.eigenvalue(mode.n, mode.l) for mode in modes]
    )
    lambda_20 = table.linear.get((2, 0))
    if lambda_20 is None:
        lambda_20 = lambda_linear(2, 0, table.params, table.spec)
    logger.debug(
        f"Assembled Galerkin system: N={n_max_energy}, {len(modes)} modes, "
        f"{sum(len(v) for v in quad.values())} couplings"
    )
    return QuadraticSystem(
        n_max_energy=n_max_energy,
        modes=modes,
        linear=linear,
        quad=quad,
        s=table.params.s,
        lambda_20=float(lambda_20),
    )


def apply_L(system: QuadraticSystem, state: SpectralState) -> SpectralState:
    return system.to_state(system.linear_part(system.to_vector(state)), state.reality_flag)


def apply_gamma(system: QuadraticSystem, state: SpectralState) -> SpectralState:
    """S_N Gamma(g, g) in coefficient space."""
    y = system.to_vector(state)
    return system.to_state(system.bilinear(y, y), state.reality_flag)


def apply_bilinear(system: QuadraticSystem, f: SpectralState, g: SpectralState) -> SpectralState:
    """S_N Gamma(f, g) for two different arguments."""
    return system.to_state(system.bilinear(system.to_vector(f), system.to_vector(g)))


def _weight_exponents(modes, c: float, s: float) -> np.ndarray:
    exponents = np.array([c * (mode.energy() + 1.5) ** s for mode in modes], dtype=float)
    if exponents.size and 2.0 * exponents.max() > _MAX_WEIGHT_EXPONENT:
        worst = modes[int(np.argmax(exponents))]
        raise WeightOverflowError(
            f"Weight exponent {2.0 * exponents.max():.1f} at mode {worst} exceeds the representable range"
        )
    return exponents


def weighted_norm(state: SpectralState, c: float, s: float) -> float:
    """(sum e^{2c(2n+l+3/2)^s} |g_{n,l,m}|^2)^(1/2).

    Raises:
        WeightOverflowError: If 2c(2n+l+3/2)^s > 700 for a present mode
    """
    modes = state.modes()
    exponents = _weight_exponents(modes, c, s)
    values = np.array([state.coeffs[mode] for mode in modes], dtype=complex)
    return float(math.sqrt(np.sum(np.exp(2.0 * exponents) * np.abs(values) ** 2)))


def _weighted_vector_norm(system: QuadraticSystem, y: np.ndarray, c: float) -> float:
    exponents = _weight_exponents(system.modes, c, system.s)
    return float(math.sqrt(np.sum(np.exp(2.0 * exponents) * np.abs(y) ** 2)))


def output_times(t_end: float, samples: int) -> list[float]:
    """linspace(0, t_end, samples), or [0] when t_end = 0."""
    if t_end == 0:
        return [0.0]
    return [float(t) for t in np.linspace(0.0, t_end, samples)]


def _rk4_step(system: QuadraticSystem, y: np.ndarray, h: float) -> np.ndarray:
    k1 = system.rhs(y)
    k2 = system.rhs(y + 0.5 * h * k1)
    k3 = system.rhs(y + 0.5 * h * k2)
    k4 = system.rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    system: QuadraticSystem,
    init: SpectralState,
    t_end: float,
    dt_init: float = 0.05,
    rel_tol: float = 1e-8,
    c0: float = 0.0,
    samples: int = 11,
) -> tuple[SolveReport, list[SpectralState]]:
    """Integrate the truncated system from init and record monitors at output times.

    The output times are linspace(0, t_end, samples), or just 0 when t_end = 0. Steps are
    clipped to land on them. A step of size h is accepted when the step-doubling estimate
    max|y_{h/2,h/2} - y_h| / 15 is at most rel_tol times the max-norm of the state, and
    the accepted value is locally extrapolated.

    Returns:
        (report, trajectory) with one state per output time

    Raises:
        AdmissibilityError: If init is nonzero on a collision invariant
        SupportError: If init has modes outside the system
        StiffnessError: If the step size underflows
    """
    offending = init.first_inadmissible_mode()
    if offending is not None:
        raise AdmissibilityError(f"Initial data is nonzero on the collision invariant {offending}")
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")

    y = system.to_vector(init)
    g0_norm = _weighted_vector_norm(system, y, 0.0)
    times = output_times(t_end, samples)
    min_step = 1e-12 * max(1.0, t_end)

    trajectory: list[SpectralState] = []
    l2_norm: list[float] = []
    dissipation_integral: list[float] = []
    weighted: list[float] = []

    def record(t: float, vector: np.ndarray, dissipated: float) -> None:
        trajectory.append(system.to_state(vector.copy(), init.reality_flag))
        l2_norm.append(float(np.linalg.norm(vector)))
        dissipation_integral.append(dissipated)
        weighted.append(_weighted_vector_norm(system, vector, 0.5 * c0 * t))

    logger.info(
        f"Galerkin integration: N={system.n_max_energy}, t_end={t_end}, rel_tol={rel_tol}, c0={c0}"
    )
    t, dissipated = 0.0, 0.0
    record(t, y, dissipated)
    nominal = dt_init
    accepted = rejected = 0
    for target in times[1:]:
        while t < target:
            remaining = target - t
            h = min(nominal, remaining)
            y_full = _rk4_step(system, y, h)
            y_half = _rk4_step(system, _rk4_step(system, y, 0.5 * h), 0.5 * h)
            difference = np.abs(y_half - y_full)
            error = float(difference.max(initial=0.0)) / 15.0
            tolerance = rel_tol * float(np.abs(y_half).max(initial=0.0))

            if error <= tolerance:
                y_new = y_half + (y_half - y_full) / 15.0
                dissipated += 0.5 * h * (system.dissipation(y) + system.dissipation(y_new))
                y = y_new
                t = target if h == remaining else t + h
                accepted += 1
            else:
                rejected += 1

            factor = 4.0 if error == 0.0 else min(4.0, max(0.2, 0.9 * (tolerance / error) ** 0.2))
            next_step = h * factor
            if error <= tolerance and h == remaining:
                next_step = max(next_step, nominal)
            if next_step < min_step:
                worst = system.modes[int(np.argmax(difference))]
                logger.error(f"Step size underflow at t={t:.6g}, limited by mode {worst}")
                raise StiffnessError(
                    f"Step size {next_step:.3g} underflowed at t={t:.6g}; limiting mode {worst}"
                )
            nominal = next_step
        record(t, y, dissipated)

    margins = _margins(times, weighted, system.lambda_20, g0_norm)
    logger.info(f"Galerkin integration finished: {accepted} steps accepted, {rejected} rejected")
    report = SolveReport(
        method="galerkin",
        n_max_energy=system.n_max_energy,
        s=system.s,
        c0=c0,
        lambda_20=system.lambda_20,
        g0_norm=g0_norm,
        times=times,
        l2_norm=l2_norm,
        dissipation_integral=dissipation_integral,
        weighted_norm=weighted,
        decay_bound_margin=margins,
        steps_accepted=accepted,
        steps_rejected=rejected,
    )
    return report, trajectory


def decay_margin(report: SolveReport, lambda_20: float, g0_norm: float, c0: float) -> list[float]:
    """e^{-lambda_20 t/4} ||g0|| - ||e^{(c0 t/2) H^s} S_N g(t)|| at every monitor time."""
    if not math.isclose(report.c0, c0, rel_tol=0.0, abs_tol=1e-15):
        raise ValueError(f"Report was recorded with c0={report.c0}, not {c0}")
    return _margins(report.times, report.weighted_norm, lambda_20, g0_norm)


def _margins(times: list[float], weighted: list[float], lambda_20: float, g0_norm: float) -> list[float]:
    return [
        math.exp(-0.25 * lambda_20 * t) * g0_norm - value
        for t, value in zip(times, weighted, strict=True)
    ]


def trajectory_report(
    system: QuadraticSystem,
    method: str,
    times: list[float],
    trajectory: list[SpectralState],
    c0: float = 0.0,
) -> SolveReport:
    """Monitors of a trajectory sampled at the given times; dissipation by the trapezoid rule."""
    vectors = [system.to_vector(state) for state in trajectory]
    dissipation = [system.dissipation(y) for y in vectors]
    integral = [0.0]
    for i in range(1, len(times)):
        integral.append(integral[-1] + 0.5 * (times[i] - times[i - 1]) * (dissipation[i] + dissipation[i - 1]))
    g0_norm = _weighted_vector_norm(system, vectors[0], 0.0)
    weighted = [_weighted_vector_norm(system, y, 0.5 * c0 * t) for t, y in zip(times, vectors, strict=True)]
    return SolveReport(
        method=method,
        n_max_energy=system.n_max_energy,
        s=system.s,
        c0=c0,
        lambda_20=system.lambda_20,
        g0_norm=g0_norm,
        times=list(times),
        l2_norm=[float(np.linalg.norm(y)) for y in vectors],
        dissipation_integral=integral,
        weighted_norm=weighted,
        decay_bound_margin=_margins(times, weighted, system.lambda_20, g0_norm),
    )


def is_monotone(values: list[float], slack: float = _MONOTONE_SLACK) -> bool:
    """Non-increasing up to slack relative to the first value."""
    scale = max(1.0, abs(values[0])) if values else 1.0
    return all(b <= a + slack * scale for a, b in zip(values, values[1:], strict=False))


def random_admissible_state(
    max_energy: int, norm: float, rng: np.random.Generator, real: bool = True
) -> SpectralState:
    """Seeded random data on the non-invariant modes of energy <= max_energy, scaled to norm.

    With real=True the coefficients satisfy g_{n,l,-m} = conj(g_{n,l,m}).
    """
    coeffs: dict[ModeIndex, complex] = {}
    for mode in modes_up_to(max_energy, include_invariants=False):
        if real and mode.m < 0:
            continue
        value = complex(rng.standard_normal(), rng.standard_normal())
        if real and mode.m == 0:
            value = complex(value.real, 0.0)
        coeffs[mode] = value
        if real and mode.m > 0:
            coeffs[mode.conjugate()] = value.conjugate()
    state = SpectralState(coeffs=coeffs, reality_flag=real)
    total = state.l2_norm()
    if total > 0.0:
        state.coeffs = {mode: norm * value / total for mode, value in coeffs.items()}
    return state


def admissible_c0(system: QuadraticSystem) -> float:
    """Largest c with lambda_{n,l} - lambda_20/4 >= c (2n+l+3/2)^s / 2 on every retained mode."""
    bounds = [
        2.0 * (rate - 0.25 * system.lambda_20) / (mode.energy() + 1.5) ** system.s
        for mode, rate in zip(system.modes, system.linear, strict=True)
        if not mode.is_collision_invariant()
    ]
    return max(0.0, min(bounds, default=0.0))


def _decay_holds(report: SolveReport) -> bool:
    return is_monotone(report.weighted_norm) and min(report.decay_bound_margin) >= -_MARGIN_SLACK


def measure_c0(
    system: QuadraticSystem,
    init: SpectralState,
    t_end: float,
    rel_tol: float = 1e-8,
    max_halvings: int = 30,
) -> float:
    """Empirical c0 for which the weighted norm decays at rate lambda_20/4 on this run."""
    c0 = admissible_c0(system)
    for _ in range(max_halvings + 1):
        report, _ = integrate(system, init, t_end, rel_tol=rel_tol, c0=c0)
        if _decay_holds(report):
            logger.info(f"Measured c0 = {c0:.6g}")
            return c0
        c0 *= 0.5
    logger.warning(f"No positive c0 passed the decay check after {max_halvings} halvings")
    return 0.0


def measure_smallness(
    system: QuadraticSystem,
    direction: SpectralState,
    c0: float,
    t_end: float,
    rel_tol: float = 1e-8,
    steps: int = 12,
) -> float:
    """Largest initial norm in [1e-6, 1], by bisection in log10, keeping the weighted monitor monotone."""
    base = direction.l2_norm()
    if base == 0.0:
        raise ValueError("Smallness search needs a nonzero direction")

    def holds(log_norm: float) -> bool:
        scale = 10.0**log_norm / base
        trial = SpectralState(
            coeffs={mode: scale * value for mode, value in direction.coeffs.items()},
            reality_flag=direction.reality_flag,
        )
        report, _ = integrate(system, trial, t_end, rel_tol=rel_tol, c0=c0)
        return is_monotone(report.weighted_norm)

    low, high = -6.0, 0.0
    if holds(high):
        return 1.0
    if not holds(low):
        logger.warning("Weighted monitor is not monotone even at norm 1e-6")
        return 0.0
    for _ in range(steps):
        middle = 0.5 * (low + high)
        if holds(middle):
            low = middle
        else:
            high = middle
    return 10.0**low


def trilinear_audit(
    table: CoeffTable, n_max_energy: int, trials: int, rng_seed: int, c: float = 0.0
) -> TrilinearAudit:
    """Fitted constants of |(Gamma(f, g), h)| against ||f|| ||L^{1/2} g|| ||L^{1/2} h||.

    f and g are drawn on non-invariant modes of energy <= N - 2, h on energy <= N. The
    weighted variant pairs Gamma(f, g) with e^{c H^s} S_N h and puts e^{(c/2) H^s} on all
    three factors of the bound.
    """
    system = assemble(table, n_max_energy)
    rng = np.random.default_rng(rng_seed)
    inner = np.array(
        [not m.is_collision_invariant() and m.energy() <= n_max_energy - 2 for m in system.modes]
    )
    outer = np.array([not m.is_collision_invariant() for m in system.modes])
    half_weight = np.exp(_weight_exponents(system.modes, 0.5 * c, system.s))
    root_rates = np.sqrt(system.linear)

    def draw(mask: np.ndarray) -> np.ndarray:
        values = rng.standard_normal(system.size) + 1j * rng.standard_normal(system.size)
        return np.where(mask, values, 0.0)

    plain_best = weighted_best = 0.0
    for _ in range(trials):
        f, g, h = draw(inner), draw(inner), draw(outer)
        gamma = system.bilinear(f, g)
        plain = abs(np.vdot(h, gamma)) / (
            np.linalg.norm(f) * np.linalg.norm(root_rates * g) * np.linalg.norm(root_rates * h)
        )
        weighted = abs(np.vdot(half_weight**2 * h, gamma)) / (
            np.linalg.norm(half_weight * f)
            * np.linalg.norm(half_weight * root_rates * g)
            * np.linalg.norm(half_weight * root_rates * h)
        )
        plain_best = max(plain_best, float(plain))
        weighted_best = max(weighted_best, float(weighted))
    return TrilinearAudit(
        n_max_energy=n_max_energy, trials=trials, c=c, unweighted=plain_best, weighted=weighted_best
    )
