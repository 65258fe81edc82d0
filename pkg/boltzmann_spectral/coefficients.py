"""Spectral coefficients of the linearized and nonlinear collision operators.

In the basis phi_{n,l,m} the linearized operator is diagonal with eigenvalues
lambda_{n,l}, and the bilinear operator maps a pair of basis functions onto a finite,
energy-additive combination of basis functions:

    Gamma(phi_000, phi_b)            = lambda1_{b} phi_b
    Gamma(phi_a, phi_000)            = lambda2_{a} phi_a
    Gamma(phi_{n,0,0}, phi_{nt,lt,mt}) = lambda_rad1_{n,nt,lt} phi_{n+nt,lt,mt}
    Gamma(phi_{n,l,m}, phi_{nt,0,0})   = lambda_rad2_{n,nt,l} phi_{n+nt,l,m}
    Gamma(phi_{n,l,m}, phi_{nt,lt,mt}) = sum_k mu^{m,mt}_{n,nt,l,lt,k} phi_{n+nt+k, l+lt-2k, m+mt}

Every coefficient is a beta-moment over |theta| <= pi/4. The moments for mu are reduced
to cached sin/cos power moments through an exact angular projection (see
`angular_projection`).
"""

import math
import os
from collections import defaultdict
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy
from loguru import logger
from scipy import special as sps

from .config import settings
from .errors import (
    CoefficientOverflowError,
    QuadratureConvergenceError,
    SpectralError,
    TableCoverageError,
)
from .models import (
    COLLISION_INVARIANTS,
    BoundAudit,
    KernelParams,
    ModeIndex,
    OrthogonalityReport,
    QuadratureSpec,
    modes_up_to,
    radial_pairs,
)
from .quadrature import (
    azimuthal_nodes,
    integrate_beta_even,
    integrate_beta_moment,
    sphere_quadrature,
    transverse_frame,
)
from .specialfn import SQRT_4PI, fourier_image, legendre_derivative, legendre_p, sph_harm_all, sph_norm

FORMAT_VERSION = "1"

# log(2 pi^(3/2))
_LOG_TWO_PI32 = math.log(2.0) + 1.5 * math.log(math.pi)
_MAX_LOG_PREFACTOR = 700.0

MuKey = tuple[int, int, int, int, int, int, int]


@dataclass(frozen=True, eq=False)
class CoeffTable:
    """Immutable coefficient table for all entries up to an energy cutoff.

    mu keys are (n, nt, l, lt, k, m, mt); the target order is always m + mt.
    """

    params: KernelParams
    spec: QuadratureSpec
    n_max_energy: int
    linear: dict[tuple[int, int], float]
    lin1: dict[tuple[int, int], float]
    lin2: dict[tuple[int, int], float]
    rad1: dict[tuple[int, int, int], float]
    rad2: dict[tuple[int, int, int], float]
    mu: dict[MuKey, complex]
    invariant_sources: bool = False
    version: str = FORMAT_VERSION

    def eigenvalue(self, n: int, l: int) -> float:
        return _lookup(self.linear, (n, l), "lambda")

    def covers_pair(self, a: ModeIndex, b: ModeIndex) -> bool:
        """Whether mu entries for the source pair (a, b) were computed."""
        if a.energy() + b.energy() > self.n_max_energy:
            return False
        if self.invariant_sources:
            return True
        return not (a.is_collision_invariant() or b.is_collision_invariant())

    def mu_group(self, group: tuple[int, int, int, int]) -> dict[MuKey, complex]:
        return {key: value for key, value in self.mu.items() if key[:4] == group}


def _lookup(mapping: dict, key: tuple, family: str):
    try:
        return mapping[key]
    except KeyError:
        raise TableCoverageError(f"Table has no {family} entry for index {key}") from None


def _checked_exp(log_value: float, label: str) -> float:
    if log_value > _MAX_LOG_PREFACTOR:
        raise CoefficientOverflowError(
            f"Log-prefactor {log_value:.1f} of {label} exceeds the representable range"
        )
    return math.exp(log_value)


# ----------------------------------------------------------------------------
# Linear family
# ----------------------------------------------------------------------------

_X, _U = sympy.symbols("x u")


def _to_sine_square(expr: sympy.Expr, cosine: bool) -> sympy.Expr:
    # Even polynomial in x, rewritten through x^2 = u (sine) or x^2 = 1 - u (cosine)
    poly = sympy.Poly(sympy.expand(expr), _X)
    base = 1 - _U if cosine else _U
    total = sympy.Integer(0)
    for (power,), coeff in poly.terms():
        if power % 2:
            raise ValueError(f"Expected an even polynomial, found power {power}")
        total += coeff * base ** (power // 2)
    return sympy.expand(total)


@lru_cache(maxsize=None)
def sine_square_series(family: str, n: int, l: int) -> tuple[float, ...]:
    """Exact coefficients c_i of an eigenvalue integrand as sum_i c_i sin(theta)^(2i).

    family "linear": 1 + d - sin^E P_l(sin) - cos^E P_l(cos)
    family "loss":   cos^E P_l(cos) - 1
    family "gain":   sin^E P_l(sin) - d
    with E = 2n + l and d = 1 only for (n, l) = (0, 0). The constant term cancels in
    rational arithmetic, so the floating coefficients carry no cancellation near theta = 0.
    """
    energy = 2 * n + l
    delta = 1 if (n, l) == (0, 0) else 0
    traced = _X**energy * sympy.legendre(l, _X)
    sine_part = _to_sine_square(traced, cosine=False)
    cosine_part = _to_sine_square(traced, cosine=True)
    if family == "linear":
        expr = 1 + delta - sine_part - cosine_part
    elif family == "loss":
        expr = cosine_part - 1
    elif family == "gain":
        expr = sine_part - delta
    else:
        raise ValueError(f"Unknown integrand family {family!r}")
    coeffs = sympy.Poly(sympy.expand(expr), _U).all_coeffs()[::-1]
    if coeffs[0] != 0:
        raise ValueError(f"Integrand {family}{(n, l)} does not vanish at theta = 0")
    return tuple(float(c) for c in coeffs)


def _integrate_series(coeffs: tuple[float, ...], params: KernelParams, spec: QuadratureSpec) -> float:
    nonzero = [i for i, c in enumerate(coeffs) if c != 0.0]
    if not nonzero:
        return 0.0
    poly = np.asarray(coeffs)

    def integrand(theta: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.sin(theta) ** 2, poly)

    return float(integrate_beta_even(integrand, 2.0 * nonzero[0], params, spec))


@lru_cache(maxsize=None)
def lambda_linear(n: int, l: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """Eigenvalue lambda_{n,l} of the linearized operator."""
    return _integrate_series(sine_square_series("linear", n, l), params, spec)


@lru_cache(maxsize=None)
def lambda1(nt: int, lt: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """Loss coefficient: integral of beta (cos^E P_l(cos) - 1); never positive."""
    return _integrate_series(sine_square_series("loss", nt, lt), params, spec)


@lru_cache(maxsize=None)
def lambda2(n: int, l: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """Gain coefficient: integral of beta (sin^E P_l(sin) - delta_{n0} delta_{l0})."""
    return _integrate_series(sine_square_series("gain", n, l), params, spec)


# ----------------------------------------------------------------------------
# Radial couplings
# ----------------------------------------------------------------------------


@lru_cache(maxsize=None)
def lambda_rad1(n: int, nt: int, lt: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """Coefficient of Gamma(phi_{n,0,0}, phi_{nt,lt,mt}) on phi_{n+nt,lt,mt}, n >= 1."""
    if n < 1:
        raise IndexError(f"lambda_rad1 requires n >= 1, got n={n}")
    log_prefactor = 0.5 * (
        _LOG_TWO_PI32
        + sps.gammaln(n + nt + 1)
        + sps.gammaln(n + nt + lt + 1.5)
        - sps.gammaln(nt + 1)
        - sps.gammaln(nt + lt + 1.5)
        - sps.gammaln(n + 1)
        - sps.gammaln(n + 1.5)
    )
    prefactor = _checked_exp(log_prefactor, f"lambda_rad1{(n, nt, lt)}") / SQRT_4PI

    def integrand(theta: np.ndarray) -> np.ndarray:
        cos = np.cos(theta)
        return np.sin(theta) ** (2 * n) * cos ** (2 * nt + lt) * legendre_p(lt, cos)

    return prefactor * float(integrate_beta_even(integrand, 2.0 * n, params, spec))


@lru_cache(maxsize=None)
def lambda_rad2(n: int, nt: int, l: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """Coefficient of Gamma(phi_{n,l,m}, phi_{nt,0,0}) on phi_{n+nt,l,m}."""
    log_prefactor = 0.5 * (
        _LOG_TWO_PI32
        + sps.gammaln(n + nt + 1)
        + sps.gammaln(n + nt + l + 1.5)
        - sps.gammaln(nt + 1)
        - sps.gammaln(nt + 1.5)
        - sps.gammaln(n + 1)
        - sps.gammaln(n + l + 1.5)
    )
    prefactor = _checked_exp(log_prefactor, f"lambda_rad2{(n, nt, l)}") / SQRT_4PI

    def integrand(theta: np.ndarray) -> np.ndarray:
        sin = np.sin(theta)
        return sin ** (2 * n + l) * legendre_p(l, sin) * np.cos(theta) ** (2 * nt)

    vanish_order = 2 * n + l + l % 2
    return prefactor * float(integrate_beta_even(integrand, vanish_order, params, spec))


# ----------------------------------------------------------------------------
# Nonlinear coupling mu
# ----------------------------------------------------------------------------


@lru_cache(maxsize=None)
def power_moment(p: int, q: int, params: KernelParams, spec: QuadratureSpec) -> float:
    """M(p, q): integral over |theta| <= pi/4 of beta sin^p cos^q, p even."""

    def integrand(theta: np.ndarray) -> np.ndarray:
        return np.sin(theta) ** p * np.cos(theta) ** q

    return float(integrate_beta_even(integrand, float(p), params, spec))


@dataclass(frozen=True, eq=False)
class AngularProjection:
    """Polynomial form of the frame-averaged angular integral for fixed (l, lt).

    For every (m, mt, L, M) the double integral over phi_1 and kappa of

        Y_l^m(kappa sin t - kappa_perp cos t) Y_lt^mt(kappa cos t + kappa_perp sin t) conj(Y_L^M(kappa))

    equals sum_j a_j sin(t)^j cos(t)^(l+lt-j), j = l mod 2. coeffs[j_index, m+l, mt+lt, L^2+L+M]
    holds the a_j.
    """

    l: int
    lt: int
    sin_powers: tuple[int, ...]
    coeffs: np.ndarray = field(repr=False)

    def polynomial(self, m: int, mt: int, big_l: int, m_star: int) -> np.ndarray:
        return self.coeffs[:, m + self.l, mt + self.lt, big_l * big_l + big_l + m_star]


@lru_cache(maxsize=256)
def angular_projection(l: int, lt: int, margin: int) -> AngularProjection:
    """Sample the frame-averaged angular integral and solve for its (sin, cos) polynomial.

    The phi_1-average uses l+lt+1 uniform nodes and the kappa-integral a sphere rule of
    degree 2(l+lt)+margin, both exact for the polynomial integrand.
    """
    degree = l + lt
    sin_powers = tuple(range(l % 2, degree + 1, 2))
    count = len(sin_powers)
    samples = (np.pi / 4.0) * (1.0 - np.cos((2 * np.arange(count) + 1) * np.pi / (2 * count)))

    nodes, weights = sphere_quadrature(2 * degree + margin)
    e1, e2 = transverse_frame(nodes)
    phi = azimuthal_nodes(degree)
    perp = np.cos(phi)[:, None, None] * e1[None] + np.sin(phi)[:, None, None] * e2[None]

    targets = np.concatenate([sph_harm_all(big_l, nodes) for big_l in range(degree + 1)])
    targets = np.conj(targets) * weights[None, :]

    values = np.empty((count, 2 * l + 1, 2 * lt + 1, targets.shape[0]), dtype=complex)
    for index, theta in enumerate(samples):
        sin, cos = math.sin(theta), math.cos(theta)
        minus = nodes[None] * sin - perp * cos
        plus = nodes[None] * cos + perp * sin
        averaged = np.einsum("apk,bpk->abk", sph_harm_all(l, minus), sph_harm_all(lt, plus))
        averaged /= phi.size
        values[index] = np.einsum("abk,tk->abt", averaged, targets)

    powers = np.asarray(sin_powers)
    design = np.sin(samples)[:, None] ** powers * np.cos(samples)[:, None] ** (degree - powers)
    coeffs = np.linalg.solve(design, values.reshape(count, -1)).reshape(values.shape)
    coeffs.setflags(write=False)
    logger.debug(f"Angular projection for (l, lt) = {(l, lt)} built from {count} samples")
    return AngularProjection(l=l, lt=lt, sin_powers=sin_powers, coeffs=coeffs)


def _projected_integral(
    n: int,
    nt: int,
    l: int,
    lt: int,
    m: int,
    mt: int,
    big_l: int,
    m_star: int,
    params: KernelParams,
    spec: QuadratureSpec,
) -> complex:
    projection = angular_projection(l, lt, spec.sphere_degree_margin)
    degree = l + lt
    total = 0.0j
    for power, a_j in zip(
        projection.sin_powers, projection.polynomial(m, mt, big_l, m_star), strict=True
    ):
        total += a_j * power_moment(2 * n + l + power, 2 * nt + lt + degree - power, params, spec)
    return complex(total)


def selection_k_max(l: int, lt: int, m: int, mt: int) -> int:
    """Largest admissible k: min(floor((l + lt - |m + mt|)/2), l, lt)."""
    return min((l + lt - abs(m + mt)) // 2, l, lt)


def mu_log_prefactor(n: int, nt: int, l: int, lt: int, k: int) -> float:
    """log of sqrt(2 pi^(3/2) (n+nt+k)! Gamma(n+nt+l+lt-k+3/2) / (nt! Gamma(nt+lt+3/2) n! Gamma(n+l+3/2)))."""
    return 0.5 * (
        _LOG_TWO_PI32
        + sps.gammaln(n + nt + k + 1)
        + sps.gammaln(n + nt + l + lt - k + 1.5)
        - sps.gammaln(nt + 1)
        - sps.gammaln(nt + lt + 1.5)
        - sps.gammaln(n + 1)
        - sps.gammaln(n + l + 1.5)
    )


def mu_coefficient(
    n: int,
    nt: int,
    l: int,
    lt: int,
    k: int,
    m: int,
    mt: int,
    params: KernelParams,
    spec: QuadratureSpec,
    m_star: int | None = None,
    enforce_selection: bool = True,
) -> complex:
    """Nonlinear coupling mu^{m,mt,m*}_{n,nt,l,lt,k}.

    Args:
        n, nt, l, lt, k, m, mt: Source indices and the degree drop k
        params: Kernel parameters
        spec: Quadrature controls
        m_star: Target order; defaults to m + mt
        enforce_selection: Return 0 without computing when m* != m + mt or k > k0.
            Disable to evaluate the integral for forbidden indices.

    Returns:
        The complex coefficient

    Raises:
        IndexError: On index violations
    """
    if l < 1 or lt < 1 or n < 0 or nt < 0 or k < 0:
        raise IndexError(f"mu requires l, lt >= 1 and n, nt, k >= 0, got {(n, nt, l, lt, k)}")
    if abs(m) > l or abs(mt) > lt:
        raise IndexError(f"mu orders out of range: (l, m) = {(l, m)}, (lt, mt) = {(lt, mt)}")
    big_l = l + lt - 2 * k
    if big_l < 0 or (enforce_selection and k > min(l, lt)):
        raise IndexError(f"mu degree drop k={k} out of range for (l, lt) = {(l, lt)}")
    if m_star is None:
        m_star = m + mt
    if abs(m_star) > big_l:
        return 0.0j
    if enforce_selection and (m_star != m + mt or k > selection_k_max(l, lt, m, mt)):
        return 0.0j

    prefactor = (-1) ** k * _checked_exp(
        mu_log_prefactor(n, nt, l, lt, k), f"mu{(n, nt, l, lt, k, m, mt)}"
    )
    return prefactor * _projected_integral(n, nt, l, lt, m, mt, big_l, m_star, params, spec)


def axis_value(
    n: int, nt: int, l: int, lt: int, q: int, params: KernelParams, spec: QuadratureSpec
) -> float:
    """G^{q,-q}_{n,nt,l,lt}(e_1) in closed form as a single beta-moment."""
    qq = abs(q)

    def integrand(theta: np.ndarray) -> np.ndarray:
        sin, cos = np.sin(theta), np.cos(theta)
        return (
            sin ** (2 * n + l + qq)
            * cos ** (2 * nt + lt + qq)
            * legendre_derivative(l, qq, sin)
            * legendre_derivative(lt, qq, cos)
        )

    vanish_order = 2 * n + l + (l - qq) % 2 + qq
    moment = integrate_beta_even(integrand, float(vanish_order), params, spec)
    return (-1) ** qq * sph_norm(l, qq) * sph_norm(lt, qq) * float(moment)


def musq_sum(
    n: int,
    nt: int,
    l: int,
    lt: int,
    k: int,
    m_star: int,
    params: KernelParams,
    spec: QuadratureSpec,
) -> float:
    """Sum over (m, mt) of |mu^{m,mt,m*}_{n,nt,l,lt,k}|^2 through the axis-value route.

    The sum does not depend on m*; it is validated against |m*| <= l + lt - 2k only.
    """
    big_l = l + lt - 2 * k
    if l < 1 or lt < 1 or k < 0 or k > min(l, lt):
        raise IndexError(f"musq_sum indices out of range: {(n, nt, l, lt, k)}")
    if abs(m_star) > big_l:
        raise IndexError(f"Target order m*={m_star} exceeds degree {big_l}")

    total = 0.0
    q_max = min(l, lt)
    for q in range(-q_max, q_max + 1):
        projected = _projected_integral(n, nt, l, lt, q, -q, big_l, 0, params, spec)
        total += (
            math.sqrt(4.0 * math.pi / (2 * big_l + 1))
            * axis_value(n, nt, l, lt, q, params, spec)
            * np.conj(projected)
        ).real
    return math.exp(2.0 * mu_log_prefactor(n, nt, l, lt, k)) * total


# ----------------------------------------------------------------------------
# Table construction
# ----------------------------------------------------------------------------


def mu_groups(n_max_energy: int, invariant_sources: bool = False) -> list[tuple[int, int, int, int]]:
    """Source groups (n, nt, l, lt) with l, lt >= 1 whose energies sum to <= n_max_energy."""
    sources = [
        (n, l)
        for n, l in radial_pairs(n_max_energy)
        if l >= 1 and (invariant_sources or (n, l) not in COLLISION_INVARIANTS)
    ]
    return [
        (n, nt, l, lt)
        for n, l in sources
        for nt, lt in sources
        if 2 * n + l + 2 * nt + lt <= n_max_energy
    ]


def _mu_group(
    group: tuple[int, int, int, int], params: KernelParams, spec: QuadratureSpec, drop_tol: float
) -> dict[MuKey, complex]:
    n, nt, l, lt = group
    values: dict[MuKey, complex] = {}
    for m in range(-l, l + 1):
        for mt in range(-lt, lt + 1):
            for k in range(selection_k_max(l, lt, m, mt) + 1):
                values[(n, nt, l, lt, k, m, mt)] = mu_coefficient(
                    n, nt, l, lt, k, m, mt, params, spec
                )
    scale = max((abs(value) for value in values.values()), default=0.0)
    return {
        key: value
        for key, value in values.items()
        if value != 0 and abs(value) >= drop_tol * scale
    }


def _labelled(label: str, compute: Callable, *args):
    try:
        return compute(*args)
    except SpectralError as e:
        logger.error(f"Failed to compute {label}: {e}")
        raise type(e)(f"Failed to compute {label}: {e}") from e


def build_table(
    n_max_energy: int,
    params: KernelParams,
    spec: QuadratureSpec,
    threads: int | None = None,
    invariant_sources: bool = False,
    drop_tol: float | None = None,
) -> CoeffTable:
    """Compute every coefficient whose source and target energies are <= n_max_energy.

    Args:
        n_max_energy: Energy cutoff N (>= 2)
        params: Kernel parameters
        spec: Quadrature controls
        threads: Worker pool size for the mu groups (default: available parallelism)
        invariant_sources: Also tabulate mu for sources (0, 1, m) in the null space
        drop_tol: Relative drop threshold for sparse mu entries

    Returns:
        The immutable table; its content does not depend on the evaluation order
    """
    if n_max_energy < 2:
        raise ValueError(f"n_max_energy must be at least 2, got {n_max_energy}")
    drop_tol = settings.mu_drop_tol if drop_tol is None else drop_tol
    workers = threads or settings.threads or os.cpu_count() or 1
    logger.info(
        f"Building coefficient table: s={params.s}, kappa_beta={params.kappa_beta}, "
        f"N={n_max_energy}, workers={workers}"
    )

    pairs = radial_pairs(n_max_energy)
    linear = {p: _labelled(f"lambda{p}", lambda_linear, *p, params, spec) for p in pairs}
    lin1 = {p: _labelled(f"lambda1{p}", lambda1, *p, params, spec) for p in pairs}
    lin2 = {p: _labelled(f"lambda2{p}", lambda2, *p, params, spec) for p in pairs}

    rad1_keys = [
        (n, nt, lt)
        for n in range(1, n_max_energy // 2 + 1)
        for nt in range(n_max_energy // 2 + 1)
        for lt in range(n_max_energy + 1)
        if 2 * (n + nt) + lt <= n_max_energy
    ]
    rad2_keys = [
        (n, nt, l)
        for n in range(n_max_energy // 2 + 1)
        for nt in range(1, n_max_energy // 2 + 1)
        for l in range(1, n_max_energy + 1)
        if 2 * (n + nt) + l <= n_max_energy
    ]
    rad1 = {key: _labelled(f"lambda_rad1{key}", lambda_rad1, *key, params, spec) for key in rad1_keys}
    rad2 = {key: _labelled(f"lambda_rad2{key}", lambda_rad2, *key, params, spec) for key in rad2_keys}

    groups = mu_groups(n_max_energy, invariant_sources)
    for l, lt in sorted({(g[2], g[3]) for g in groups}):
        angular_projection(l, lt, spec.sphere_degree_margin)

    mu: dict[MuKey, complex] = {}
    failures: list[str] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_mu_group, group, params, spec, drop_tol) for group in groups]
        for group, future in zip(groups, futures, strict=True):
            try:
                mu.update(future.result())
            except SpectralError as e:
                failures.append(f"mu{group}: {e}")
    if failures:
        logger.error(f"Failed to compute {len(failures)} mu groups")
        raise QuadratureConvergenceError(
            f"Failed to compute {len(failures)} coefficient groups: " + "; ".join(failures)
        )

    logger.info(
        f"Coefficient table ready: {len(linear)} eigenvalues, {len(rad1) + len(rad2)} radial "
        f"couplings, {len(mu)} mu entries"
    )
    return CoeffTable(
        params=params,
        spec=spec,
        n_max_energy=n_max_energy,
        linear=linear,
        lin1=lin1,
        lin2=lin2,
        rad1=rad1,
        rad2=rad2,
        mu=mu,
        invariant_sources=invariant_sources,
    )


# ----------------------------------------------------------------------------
# Expansion of Gamma on basis pairs
# ----------------------------------------------------------------------------


def gamma_pair_expansion(
    a: ModeIndex, b: ModeIndex, table: CoeffTable
) -> list[tuple[ModeIndex, complex]]:
    """Exact finite expansion of Gamma(phi_a, phi_b) in the eigenbasis.

    Raises:
        TableCoverageError: If the table does not reach energy(a) + energy(b)
    """
    target_energy = a.energy() + b.energy()
    if target_energy > table.n_max_energy:
        raise TableCoverageError(
            f"Pair {a}, {b} reaches energy {target_energy} beyond table cutoff {table.n_max_energy}"
        )

    if (a.n, a.l) == (0, 0):
        terms = [(b, complex(_lookup(table.lin1, (b.n, b.l), "lambda1")))]
    elif (b.n, b.l) == (0, 0):
        terms = [(a, complex(_lookup(table.lin2, (a.n, a.l), "lambda2")))]
    elif a.l == 0:
        weight = _lookup(table.rad1, (a.n, b.n, b.l), "lambda_rad1")
        terms = [(ModeIndex(n=a.n + b.n, l=b.l, m=b.m), complex(weight))]
    elif b.l == 0:
        weight = _lookup(table.rad2, (a.n, b.n, a.l), "lambda_rad2")
        terms = [(ModeIndex(n=a.n + b.n, l=a.l, m=a.m), complex(weight))]
    else:
        if not table.covers_pair(a, b):
            raise TableCoverageError(f"Table has no mu entries for the source pair {a}, {b}")
        terms = []
        for k in range(selection_k_max(a.l, b.l, a.m, b.m) + 1):
            weight = table.mu.get((a.n, b.n, a.l, b.l, k, a.m, b.m))
            if weight is not None:
                target = ModeIndex(n=a.n + b.n + k, l=a.l + b.l - 2 * k, m=a.m + b.m)
                terms.append((target, weight))

    terms = [(target, weight) for target, weight in terms if weight != 0]
    for target, _ in terms:
        if target.energy() != target_energy:
            raise AssertionError(f"Energy additivity violated: {a} x {b} -> {target}")
    return terms


def coupling_map(
    table: CoeffTable, n_max_energy: int
) -> dict[ModeIndex, tuple[tuple[ModeIndex, ModeIndex, complex], ...]]:
    """All (a, b, weight) couplings onto each target among non-invariant modes of energy <= N."""
    if n_max_energy > table.n_max_energy:
        raise TableCoverageError(
            f"Requested energy {n_max_energy} beyond table cutoff {table.n_max_energy}"
        )
    sources = modes_up_to(max(n_max_energy - 2, 0), include_invariants=False)
    couplings: dict[ModeIndex, list] = defaultdict(list)
    for a in sources:
        for b in sources:
            if a.energy() + b.energy() > n_max_energy:
                continue
            for target, weight in gamma_pair_expansion(a, b, table):
                couplings[target].append((a, b, weight))
    return {
        target: tuple(couplings[target])
        for target in sorted(couplings, key=ModeIndex.sort_key)
    }


def bobylev_check(
    a: ModeIndex,
    b: ModeIndex,
    table: CoeffTable,
    xi: Iterable[float],
    rel_tol: float = 1e-9,
) -> tuple[complex, complex]:
    """Compare Gamma(phi_a, phi_b) on the Fourier side with its tabulated expansion.

    The direct value integrates the Bobylev representation
    2 beta(t) <g_a(xi-) g_b(xi+) - g_a(0) g_b(xi)>_phi over t in (0, pi/4], with g the
    Fourier image of sqrt(mu) phi. The expanded value sums weight * fourier_image(target, xi).

    Returns:
        (direct, expanded)
    """
    xi = np.asarray(xi, dtype=float)
    radius = float(np.linalg.norm(xi))
    if radius == 0.0:
        raise ValueError("bobylev_check needs a nonzero frequency")
    axis = xi / radius
    e1, e2 = transverse_frame(axis[None])
    phi = azimuthal_nodes(a.energy() + b.energy())
    perp = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    origin_value = fourier_image(a, np.zeros(3))
    centre_value = fourier_image(b, xi)

    def integrand(theta: np.ndarray) -> np.ndarray:
        sin = np.sin(theta)[:, None, None]
        cos = np.cos(theta)[:, None, None]
        xi_minus = radius * sin * (axis * sin - perp[None] * cos)
        xi_plus = radius * cos * (axis * cos + perp[None] * sin)
        product = fourier_image(a, xi_minus) * fourier_image(b, xi_plus)
        return product.mean(axis=1) - origin_value * centre_value

    spec = QuadratureSpec(
        rel_tol=rel_tol,
        max_levels=table.spec.max_levels,
        grading_ratio=table.spec.grading_ratio,
        panel_order=table.spec.panel_order,
    )
    direct = 2.0 * integrate_beta_moment(integrand, 2.0, table.params, spec, min_theta=1e-3)
    expanded = sum(
        (weight * fourier_image(target, xi) for target, weight in gamma_pair_expansion(a, b, table)),
        start=0.0j,
    )
    return complex(direct), complex(expanded)


# ----------------------------------------------------------------------------
# Audits
# ----------------------------------------------------------------------------


def verify_orthogonality(
    n: int, nt: int, l: int, lt: int, table: CoeffTable
) -> OrthogonalityReport:
    """Largest normalized cross term sum_{m,mt} mu^(k1,m*) conj(mu^(k2,m*)) within a group.

    Different m* have disjoint (m, mt) supports, so only pairs k1 != k2 at equal m* are
    accumulated.
    """
    if 2 * n + l + 2 * nt + lt > table.n_max_energy:
        raise TableCoverageError(f"Group {(n, nt, l, lt)} is beyond the table cutoff")
    vectors: dict[tuple[int, int], dict[tuple[int, int], complex]] = defaultdict(dict)
    for (_, _, _, _, k, m, mt), value in table.mu_group((n, nt, l, lt)).items():
        vectors[(k, m + mt)][(m, mt)] = value

    worst = 0.0
    checked = 0
    for k1, m_star in vectors:
        for k2, other_star in vectors:
            if other_star != m_star or k2 <= k1:
                continue
            first, second = vectors[(k1, m_star)], vectors[(k2, m_star)]
            cross = sum(first[key] * np.conj(second[key]) for key in first.keys() & second.keys())
            norm = math.sqrt(
                sum(abs(v) ** 2 for v in first.values()) * sum(abs(v) ** 2 for v in second.values())
            )
            checked += 1
            if norm > 0.0:
                worst = max(worst, abs(cross) / norm)
    return OrthogonalityReport(group=[n, nt, l, lt], max_violation=worst, pairs_checked=checked)


def _band(eigenvalue: Callable[[int, int], float], s: float, cutoff: int) -> tuple[float, float]:
    ratios = [
        eigenvalue(n, l) / ((2 * n + l + 1.5) ** s + l ** (2 * s))
        for n, l in radial_pairs(cutoff)
        if n + l >= 2
    ]
    if not ratios:
        raise TableCoverageError("Spectral bound audit needs at least one mode with n + l >= 2")
    return min(ratios), max(ratios)


def spectral_bound_audit(table: CoeffTable, n_max_energy: int | None = None) -> tuple[float, float]:
    """Band of lambda_{n,l} / ((2n+l+3/2)^s + l^(2s)) over n + l >= 2, 2n + l <= N."""
    cutoff = table.n_max_energy if n_max_energy is None else min(n_max_energy, table.n_max_energy)
    return _band(lambda n, l: table.linear[(n, l)], table.params.s, cutoff)


def eigenvalue_band(
    n_max_energy: int, params: KernelParams, spec: QuadratureSpec
) -> tuple[float, float]:
    """Same band as spectral_bound_audit, from lambda_linear directly; no mu table is built."""
    return _band(lambda n, l: lambda_linear(n, l, params, spec), params.s, n_max_energy)


def rad1_bound_audit(table: CoeffTable) -> BoundAudit:
    """Fitted C in |lambda_rad1|^2 <= C nt^s (nt+lt)^s n^(-5/2-2s), over nt >= 1."""
    s = table.params.s
    best, argmax, samples = 0.0, [], 0
    for (n, nt, lt), value in table.rad1.items():
        if nt < 1:
            continue
        ratio = value**2 * n ** (2.5 + 2 * s) / (nt**s * (nt + lt) ** s)
        samples += 1
        if ratio > best:
            best, argmax = ratio, [n, nt, lt]
    return BoundAudit(name="rad1", constant=best, argmax=argmax, samples=samples)


def rad2_bound_audit(table: CoeffTable) -> BoundAudit:
    """Fitted C in |lambda_rad2|^2 <= C nt^(2s) / ((n+1)^s (n+l)^(5/2+s)), over n + l >= 2."""
    s = table.params.s
    best, argmax, samples = 0.0, [], 0
    for (n, nt, l), value in table.rad2.items():
        if n + l < 2:
            continue
        ratio = value**2 * (n + 1) ** s * (n + l) ** (2.5 + s) / nt ** (2 * s)
        samples += 1
        if ratio > best:
            best, argmax = ratio, [n, nt, l]
    return BoundAudit(name="rad2", constant=best, argmax=argmax, samples=samples)


def mu_sum_audit(table: CoeffTable) -> BoundAudit:
    """Fitted C in sum |mu|^2 / lambda_{nt,lt} <= C lambda_{n*,l*} over sources outside the null space."""
    sums: dict[tuple[int, int, int], float] = defaultdict(float)
    for (n, nt, l, lt, k, m, mt), value in table.mu.items():
        if n + l < 2 or nt + lt < 2:
            continue
        target = (n + nt + k, l + lt - 2 * k, m + mt)
        sums[target] += abs(value) ** 2 / table.linear[(nt, lt)]
    best, argmax = 0.0, []
    for (n_star, l_star, m_star), total in sorted(sums.items()):
        ratio = total / table.linear[(n_star, l_star)]
        if ratio > best:
            best, argmax = ratio, [n_star, l_star, m_star]
    return BoundAudit(name="mu-sum", constant=best, argmax=argmax, samples=len(sums))


def cr_bound_audit(table: CoeffTable) -> BoundAudit:
    """Fitted C in sum_{m+mt=0} |mu|^2 <= C (lt sqrt(l)/(L+1)) prefactor^2 (half-range moment)^2."""
    brute: dict[tuple[int, int, int, int, int], float] = defaultdict(float)
    for (n, nt, l, lt, k, m, mt), value in table.mu.items():
        if m + mt == 0:
            brute[(n, nt, l, lt, k)] += abs(value) ** 2
    best, argmax = 0.0, []
    for (n, nt, l, lt, k), total in sorted(brute.items()):
        half_moment = 0.5 * power_moment(2 * n + l, 2 * nt + lt, table.params, table.spec)
        bound = (
            lt * math.sqrt(l) / (l + lt - 2 * k + 1)
            * math.exp(2.0 * mu_log_prefactor(n, nt, l, lt, k))
            * half_moment**2
        )
        ratio = total / bound
        if ratio > best:
            best, argmax = ratio, [n, nt, l, lt, k]
    return BoundAudit(name="cr", constant=best, argmax=argmax, samples=len(brute))
