"""Pydantic models for the spectral solver."""

import math
import re
from functools import lru_cache
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# (n, l) pairs spanning the null space of the linearized operator
COLLISION_INVARIANTS = frozenset({(0, 0), (1, 0), (0, 1)})

QUARTER_PI = math.pi / 4.0

_MODE_PATTERN = re.compile(r"^\(?\s*(-?\d+)\s*[,; ]\s*(-?\d+)\s*[,; ]\s*(-?\d+)\s*\)?$")


class ModeIndex(BaseModel):
    """Basis label (n, l, m) of the eigenfunction phi_{n,l,m}.

    Modes order by Hermite energy 2n + l first, then lexicographically by (n, l, m).
    This is the single canonical order used for tables, CSV columns and vectors.
    """

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=0)
    l: int = Field(ge=0)
    m: int

    @model_validator(mode="after")
    def _check_order(self) -> "ModeIndex":
        if abs(self.m) > self.l:
            raise ValueError(f"|m| must not exceed l, got (n, l, m) = {self.as_tuple()}")
        return self

    @classmethod
    def of(cls, n: int, l: int, m: int) -> "ModeIndex":
        return cls(n=n, l=l, m=m)

    @classmethod
    def parse(cls, text: str) -> "ModeIndex":
        """Parse "n,l,m" (optionally parenthesized) into a mode.

        Raises:
            ValueError: If the text is not three integers
        """
        match = _MODE_PATTERN.match(text.strip())
        if match is None:
            raise ValueError(f"Failed to parse mode index from {text!r}")
        n, l, m = (int(group) for group in match.groups())
        return cls(n=n, l=l, m=m)

    def energy(self) -> int:
        return 2 * self.n + self.l

    def is_collision_invariant(self) -> bool:
        return (self.n, self.l) in COLLISION_INVARIANTS

    def sort_key(self) -> tuple[int, int, int, int]:
        return (self.energy(), self.n, self.l, self.m)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n, self.l, self.m)

    def conjugate(self) -> "ModeIndex":
        """Mode carrying the complex-conjugate eigenfunction."""
        return ModeIndex(n=self.n, l=self.l, m=-self.m)

    def __lt__(self, other: "ModeIndex") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"({self.n},{self.l},{self.m})"


@lru_cache(maxsize=64)
def modes_up_to(max_energy: int, include_invariants: bool = True) -> tuple[ModeIndex, ...]:
    """All modes with 2n + l <= max_energy in canonical order."""
    modes = [
        ModeIndex(n=n, l=energy - 2 * n, m=m)
        for energy in range(max_energy + 1)
        for n in range(energy // 2 + 1)
        for m in range(-(energy - 2 * n), energy - 2 * n + 1)
    ]
    if not include_invariants:
        modes = [mode for mode in modes if not mode.is_collision_invariant()]
    return tuple(sorted(modes, key=ModeIndex.sort_key))


def radial_pairs(max_energy: int) -> list[tuple[int, int]]:
    """All (n, l) with 2n + l <= max_energy ordered by energy then n."""
    return [
        (n, energy - 2 * n) for energy in range(max_energy + 1) for n in range(energy // 2 + 1)
    ]


class KernelParams(BaseModel):
    """Angular kernel beta(theta) = kappa_beta |theta|^(-1-2s) on 0 < |theta| <= pi/4."""

    model_config = ConfigDict(frozen=True)

    s: float = Field(gt=0.0, lt=1.0)
    kappa_beta: float = Field(default=1.0, gt=0.0)
    model: Literal["power_law"] = "power_law"

    def beta(self, theta: np.ndarray) -> np.ndarray:
        """Evaluate beta on an array of angles; zero outside the support."""
        theta = np.abs(np.asarray(theta, dtype=float))
        inside = (theta > 0.0) & (theta <= QUARTER_PI)
        safe = np.where(inside, theta, 1.0)
        return np.where(inside, self.kappa_beta * safe ** (-1.0 - 2.0 * self.s), 0.0)


class QuadratureSpec(BaseModel):
    """Controls for the graded beta-moment quadrature and the sphere rules."""

    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default=1e-10, gt=0.0)
    max_levels: int = Field(default=40, ge=2)
    grading_ratio: float = Field(default=0.5, gt=0.0, lt=1.0)
    panel_order: int = Field(default=16, ge=4)
    sphere_degree_margin: int = Field(default=2, ge=0)


class VelocityGrid(BaseModel):
    """Uniform tensor grid on [-extent, extent]^3."""

    extent: float = Field(default=8.0, gt=0.0)
    points_per_axis: int = Field(default=64, ge=2)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.points_per_axis)

    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points_per_axis - 1)

    def cell_volume(self) -> float:
        return self.spacing() ** 3


class RunConfig(BaseModel):
    """Validated command-line configuration."""

    command: Literal["coeffs", "solve", "verify", "reconstruct"]
    s: float = Field(default=0.5, gt=0.0, lt=1.0)
    kappa_beta: float = Field(default=1.0, gt=0.0)
    n_max_energy: int = Field(default=6, ge=2)
    method: Literal["cascade", "galerkin", "both"] = "both"
    t_end: float = Field(default=2.0, ge=0.0)
    dt_init: float = Field(default=0.05, gt=0.0)
    rel_tol: float = Field(default=1e-8, gt=0.0)
    c0: float = Field(default=0.0, ge=0.0)
    samples: int = Field(default=11, ge=2)
    init_path: Path | None = None
    table_path: Path | None = None
    out_path: Path | None = None
    seed: int = 0
    threads: int | None = Field(default=None, ge=1)
    suites: list[str] | None = None
    time: float = Field(default=0.0, ge=0.0)
    grid: VelocityGrid = Field(default_factory=VelocityGrid)


class SolveReport(BaseModel):
    """Monitors recorded at the output times of a solve."""

    method: Literal["cascade", "galerkin"]
    n_max_energy: int
    s: float
    c0: float = 0.0
    lambda_20: float
    g0_norm: float
    times: list[float]
    l2_norm: list[float]
    dissipation_integral: list[float]
    weighted_norm: list[float]
    decay_bound_margin: list[float]
    steps_accepted: int = 0
    steps_rejected: int = 0
    discrepancy: float | None = None

    @model_validator(mode="after")
    def _check_series(self) -> "SolveReport":
        lengths = {
            len(self.times),
            len(self.l2_norm),
            len(self.dissipation_integral),
            len(self.weighted_norm),
            len(self.decay_bound_margin),
        }
        if len(lengths) != 1:
            raise ValueError(f"Monitor series must share one length, got {sorted(lengths)}")
        if any(b <= a for a, b in zip(self.times, self.times[1:], strict=False)):
            raise ValueError("Output times must be strictly increasing")
        return self


class SuiteResult(BaseModel):
    """Verdict of one verification suite."""

    name: str
    passed: bool
    metric: float
    threshold: float
    detail: str = ""


class VerificationReport(BaseModel):
    """Machine-readable verdict over a set of suites."""

    passed: bool
    s: float
    n_max_energy: int
    suites: list[SuiteResult]

    def failed(self) -> list[str]:
        return [suite.name for suite in self.suites if not suite.passed]


class BoundAudit(BaseModel):
    """Fitted constant of a bound audit over a coefficient table."""

    name: str
    constant: float
    argmax: list[int] = Field(default_factory=list)
    samples: int = 0


class OrthogonalityReport(BaseModel):
    """Largest normalized cross term of one (n, n~, l, l~) group."""

    group: list[int]
    max_violation: float
    pairs_checked: int


class TrilinearAudit(BaseModel):
    """Fitted trilinear constants, plain and Gelfand-Shilov weighted."""

    n_max_energy: int
    trials: int
    c: float
    unweighted: float
    weighted: float
