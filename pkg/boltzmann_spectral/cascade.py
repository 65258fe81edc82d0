"""Closed-form solution of the triangular mode system on a finite energy ball.

Each coefficient g_{n,l,m}(t) solves

    g' + lambda_{n,l} g = sum_{(a, b, w)} w g_a(t) g_b(t),

where every source pair has strictly smaller energies than the target. Solving the modes
in energy order therefore only ever integrates a scalar linear ODE with an
exponential-polynomial forcing, and the result stays an exponential polynomial.
"""

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from loguru import logger

from .coefficients import CoeffTable, coupling_map
from .config import settings
from .errors import AdmissibilityError, TableCoverageError
from .models import ModeIndex, modes_up_to

Term = tuple[float, int, complex]


def _canonical(terms: Iterable[Term], tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ordered = sorted(terms, key=lambda term: (term[0], term[1]))
    merged: dict[tuple[float, int], complex] = {}
    anchor: float | None = None
    for rate, power, coeff in ordered:
        if anchor is None or abs(rate - anchor) > tol * max(1.0, abs(anchor)):
            anchor = float(rate)
        key = (anchor, int(power))
        merged[key] = merged.get(key, 0.0j) + complex(coeff)
    kept = sorted((key, coeff) for key, coeff in merged.items() if coeff != 0)
    rates = np.array([key[0] for key, _ in kept], dtype=float)
    powers = np.array([key[1] for key, _ in kept], dtype=int)
    coeffs = np.array([coeff for _, coeff in kept], dtype=complex)
    return rates, powers, coeffs


@dataclass(frozen=True, eq=False)
class ExpPoly:
    """Exponential polynomial sum_j c_j t^(p_j) exp(-a_j t) in canonical form.

    Terms are sorted by (rate, power) with no duplicates and no zero coefficients.
    Rates closer than the resonance tolerance are merged onto the smaller one.
    """

    rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    powers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @classmethod
    def from_terms(cls, terms: Iterable[Term], tol: float | None = None) -> "ExpPoly":
        tol = settings.resonance_tol if tol is None else tol
        return cls(*_canonical(terms, tol))

    @classmethod
    def constant(cls, value: complex, rate: float = 0.0) -> "ExpPoly":
        return cls.from_terms([(rate, 0, value)])

    @property
    def terms(self) -> list[Term]:
        return [
            (float(a), int(p), complex(c))
            for a, p, c in zip(self.rates, self.powers, self.coeffs, strict=True)
        ]

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def max_power(self) -> int:
        return int(self.powers.max()) if self.powers.size else 0

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return complex(np.sum(self.coeffs * float(t_arr) ** self.powers * np.exp(-self.rates * float(t_arr))))
        grid = t_arr[..., None]
        return np.sum(self.coeffs * grid**self.powers * np.exp(-self.rates * grid), axis=-1)

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        return ExpPoly.from_terms(self.terms + other.terms)

    def __mul__(self, other: "ExpPoly") -> "ExpPoly":
        return exppoly_mul(self, other)

    def scaled(self, factor: complex) -> "ExpPoly":
        return ExpPoly.from_terms((a, p, factor * c) for a, p, c in self.terms)

    def conjugate(self) -> "ExpPoly":
        return ExpPoly(self.rates, self.powers, np.conj(self.coeffs))

    def allclose(self, other: "ExpPoly", tol: float = 1e-12) -> bool:
        """Canonical-form equality up to a relative tolerance on rates and coefficients."""
        if self.coeffs.size != other.coeffs.size:
            return False
        if not np.array_equal(self.powers, other.powers):
            return False
        scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))
        return bool(
            np.allclose(self.rates, other.rates, rtol=tol, atol=tol)
            and np.all(np.abs(self.coeffs - other.coeffs) <= tol * scale)
        )


def exppoly_mul(f: ExpPoly, g: ExpPoly) -> ExpPoly:
    """Product of two exponential polynomials: rates add, powers add."""
    return ExpPoly.from_terms(
        (a1 + a2, p1 + p2, c1 * c2) for a1, p1, c1 in f.terms for a2, p2, c2 in g.terms
    )


def solve_linear_ode(
    lam: float, y0: complex, forcing: ExpPoly, resonance_tol: float | None = None
) -> ExpPoly:
    """Unique solution of y' + lam y = forcing with y(0) = y0.

    Forcing terms c t^p e^{-a t} with |a - lam| <= tol max(1, lam) integrate to
    c t^(p+1) e^{-lam t} / (p + 1). The others have particular solutions
    sum_i q_i t^i e^{-a t} with q_p = c / (lam - a) and q_i = -(i + 1) q_{i+1} / (lam - a).
    """
    tol = settings.resonance_tol if resonance_tol is None else resonance_tol
    terms: list[Term] = []
    homogeneous = complex(y0)
    for rate, power, coeff in forcing.terms:
        delta = lam - rate
        if abs(delta) <= tol * max(1.0, abs(lam)):
            terms.append((lam, power + 1, coeff / (power + 1)))
            continue
        q = coeff / delta
        terms.append((rate, power, q))
        for i in range(power - 1, -1, -1):
            q = -(i + 1) * q / delta
            terms.append((rate, i, q))
        homogeneous -= q
    terms.append((lam, 0, homogeneous))
    return ExpPoly.from_terms(terms, tol)


@dataclass
class SpectralState:
    """Finite coefficient vector g_{n,l,m} of a perturbation."""

    coeffs: dict[ModeIndex, complex] = field(default_factory=dict)
    reality_flag: bool = False

    def get(self, mode: ModeIndex) -> complex:
        return self.coeffs.get(mode, 0.0j)

    def modes(self) -> list[ModeIndex]:
        return sorted(self.coeffs, key=ModeIndex.sort_key)

    def first_inadmissible_mode(self, tol: float = 0.0) -> ModeIndex | None:
        """First collision-invariant mode carrying a coefficient above tol, if any."""
        for mode in self.modes():
            if mode.is_collision_invariant() and abs(self.coeffs[mode]) > tol:
                return mode
        return None

    def is_admissible(self, tol: float = 0.0) -> bool:
        return self.first_inadmissible_mode(tol) is None

    def l2_norm(self) -> float:
        return math.sqrt(sum(abs(value) ** 2 for value in self.coeffs.values()))

    def max_energy(self) -> int:
        return max((mode.energy() for mode, v in self.coeffs.items() if v != 0), default=0)

    def conjugation_defect(self) -> float:
        """max |g_{n,l,-m} - conj(g_{n,l,m})| over present modes."""
        return max(
            (abs(self.get(mode.conjugate()) - np.conj(value)) for mode, value in self.coeffs.items()),
            default=0.0,
        )

    def as_vector(self, modes: Iterable[ModeIndex]) -> np.ndarray:
        return np.array([self.get(mode) for mode in modes], dtype=complex)


@dataclass(frozen=True, eq=False)
class CascadeSolution:
    """Exponential-polynomial trajectory of every mode of energy <= energy_cap."""

    modes: dict[ModeIndex, ExpPoly]
    reality_flag: bool
    energy_cap: int

    def __getitem__(self, mode: ModeIndex) -> ExpPoly:
        return self.modes[mode]


def _check_admissible(init: SpectralState, energy_cap: int, table: CoeffTable) -> None:
    offending = init.first_inadmissible_mode()
    if offending is not None:
        raise AdmissibilityError(
            f"Initial data must vanish on the collision invariants, found {init.get(offending)!r} at {offending}"
        )
    if init.max_energy() > energy_cap:
        raise AdmissibilityError(
            f"Initial data reaches energy {init.max_energy()} beyond the cap {energy_cap}"
        )
    if energy_cap > table.n_max_energy:
        raise TableCoverageError(
            f"Energy cap {energy_cap} exceeds table cutoff {table.n_max_energy}"
        )


def cascade_solve(
    init: SpectralState,
    table: CoeffTable,
    energy_cap: int,
    order: Literal["induction", "energy"] = "induction",
) -> CascadeSolution:
    """Solve every mode of energy <= energy_cap in closed form.

    Args:
        init: Perturbation-admissible initial coefficients
        table: Coefficient table covering energy_cap
        energy_cap: Energy of the solved ball
        order: "induction" walks (n, l, m) lexicographically; "energy" walks by energy.
            Both are topological orders of the coupling graph and give the same result.

    Raises:
        AdmissibilityError: If init is nonzero on an invariant or exceeds the cap
        TableCoverageError: If the table does not reach energy_cap
    """
    _check_admissible(init, energy_cap, table)
    couplings = coupling_map(table, energy_cap)
    modes = modes_up_to(energy_cap)
    if order == "induction":
        walk = sorted(modes, key=ModeIndex.as_tuple)
    elif order == "energy":
        walk = list(modes)
    else:
        raise ValueError(f"Unknown cascade order {order!r}")

    solution: dict[ModeIndex, ExpPoly] = {}
    for mode in walk:
        if mode.is_collision_invariant():
            solution[mode] = ExpPoly()
            continue
        forcing = ExpPoly()
        for a, b, weight in couplings.get(mode, ()):
            source_a, source_b = solution[a], solution[b]
            if source_a.is_zero() or source_b.is_zero():
                continue
            forcing = forcing + (source_a * source_b).scaled(weight)
        solution[mode] = solve_linear_ode(table.eigenvalue(mode.n, mode.l), init.get(mode), forcing)

    logger.debug(
        f"Cascade solved {len(solution)} modes up to energy {energy_cap}; "
        f"largest power {max((p.max_power() for p in solution.values()), default=0)}"
    )
    return CascadeSolution(modes=solution, reality_flag=init.reality_flag, energy_cap=energy_cap)


def evaluate_solution(solution: CascadeSolution, t: float) -> SpectralState:
    """Coefficients of the closed-form solution at time t."""
    if t < 0:
        raise ValueError(f"Evaluation time must be nonnegative, got {t}")
    return SpectralState(
        coeffs={mode: poly(t) for mode, poly in solution.modes.items()},
        reality_flag=solution.reality_flag,
    )
