"""Special functions and evaluation of the eigenbasis.

Associated Legendre functions follow the sign-free convention

    P_l^m(x) = (1 - x^2)^(m/2) d^m P_l / dx^m,    0 <= m <= l,

so conj(Y_l^m) = Y_l^{-m} with no (-1)^m factor. This differs from scipy.special.sph_harm
and most physics libraries. Harmonics evaluated on 3-vectors take v_1 as the polar axis:

    Y_l^m(sigma) = N_{l,m} (d^|m| P_l/dx^|m|)(sigma_1) (sigma_2 + i sgn(m) sigma_3)^|m|.
"""

import math

import numpy as np
from scipy import special as sps

from .errors import DomainError
from .models import ModeIndex

SQRT_4PI = math.sqrt(4.0 * math.pi)

_DOMAIN_SLACK = 1e-12

# (-i)^l
_MINUS_I_POWERS = (1.0 + 0.0j, -1.0j, -1.0 + 0.0j, 1.0j)


def _as_output(value):
    return np.asarray(value).item() if np.ndim(value) == 0 else value


def _unit_interval(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _DOMAIN_SLACK):
        raise DomainError(f"Legendre argument outside [-1, 1]: max |x| = {np.max(np.abs(x))!r}")
    return np.clip(x, -1.0, 1.0)


def _check_degree(l: int, mm: int) -> None:
    if l < 0 or mm < 0 or mm > l:
        raise IndexError(f"Legendre indices must satisfy 0 <= mm <= l, got l={l}, mm={mm}")


def legendre_p(l: int, x):
    """Legendre polynomial P_l(x) by the three-term recurrence.

    Args:
        l: Degree (nonnegative)
        x: Scalar or array in [-1, 1]

    Returns:
        P_l(x) with the shape of x

    Raises:
        DomainError: If any |x| > 1 + 1e-12
    """
    _check_degree(l, 0)
    x = _unit_interval(x)
    previous = np.ones_like(x)
    if l == 0:
        return _as_output(previous)
    current = x.copy()
    for k in range(1, l):
        previous, current = current, ((2 * k + 1) * x * current - k * previous) / (k + 1)
    return _as_output(current)


def legendre_derivative(l: int, mm: int, x):
    """mm-th derivative of P_l, by forward recurrence in l at fixed mm.

    (l - mm + 1) Q_{l+1} = (2l + 1) x Q_l - (l + mm) Q_{l-1}, seeded with Q_mm = (2mm - 1)!!.
    """
    _check_degree(l, mm)
    x = _unit_interval(x)
    lower = np.full_like(x, float(math.prod(range(1, 2 * mm, 2))))
    if l == mm:
        return _as_output(lower)
    upper = (2 * mm + 1) * x * lower
    for k in range(mm + 1, l):
        lower, upper = upper, ((2 * k + 1) * x * upper - (k + mm) * lower) / (k - mm + 1)
    return _as_output(upper)


def assoc_legendre(l: int, mm: int, x):
    """Sign-free associated Legendre function P_l^mm(x)."""
    x = _unit_interval(x)
    return _as_output((1.0 - x * x) ** (0.5 * mm) * legendre_derivative(l, mm, x))


def sph_norm(l: int, m: int) -> float:
    """Normalization N_{l,m} = sqrt((2l+1)/(4 pi) (l-|m|)!/(l+|m|)!)."""
    mm = abs(m)
    log_ratio = sps.gammaln(l - mm + 1) - sps.gammaln(l + mm + 1)
    return math.sqrt((2 * l + 1) / (4.0 * math.pi) * math.exp(log_ratio))


def _normalized_derivative(l: int, mm: int, x: np.ndarray) -> np.ndarray:
    # N_{l,mm} d^mm P_l/dx^mm; the normalized recurrence stays in range for large l
    log_seed = (
        0.5 * math.log((2 * mm + 1) / (4.0 * math.pi))
        + 0.5 * sps.gammaln(2 * mm + 1)
        - mm * math.log(2.0)
        - sps.gammaln(mm + 1)
    )
    lower = np.full_like(x, math.exp(log_seed))
    if l == mm:
        return lower
    upper = math.sqrt(2 * mm + 3) * x * lower
    for k in range(mm + 1, l):
        a = math.sqrt((2 * k + 3) * (2 * k + 1) / ((k + 1 - mm) * (k + 1 + mm)))
        b = math.sqrt(
            (2 * k + 3) / (2 * k - 1) * (k - mm) * (k + mm) / ((k + 1 + mm) * (k + 1 - mm))
        )
        lower, upper = upper, a * x * upper - b * lower
    return upper


def sph_harm(l: int, m: int, theta, phi):
    """Spherical harmonic Y_l^m at polar angle theta and azimuth phi.

    Raises:
        IndexError: If |m| > l
    """
    if abs(m) > l:
        raise IndexError(f"Spherical harmonic order |m| must not exceed l, got l={l}, m={m}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    mm = abs(m)
    radial = _normalized_derivative(l, mm, _unit_interval(np.cos(theta))) * np.sin(theta) ** mm
    phase = np.cos(mm * phi) + 1j * math.copysign(1.0, m) * np.sin(mm * phi)
    return _as_output(radial * phase)


def _polar_parts(unit: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    unit = np.asarray(unit, dtype=float)
    axial = _unit_interval(unit[..., 0])
    rho = np.hypot(unit[..., 1], unit[..., 2])
    psi = np.arctan2(unit[..., 2], unit[..., 1])
    return axial, rho, psi


def sph_harm_cartesian(l: int, m: int, unit):
    """Y_l^m evaluated on unit vectors of shape (..., 3), polar axis v_1."""
    if abs(m) > l:
        raise IndexError(f"Spherical harmonic order |m| must not exceed l, got l={l}, m={m}")
    axial, rho, psi = _polar_parts(unit)
    mm = abs(m)
    radial = _normalized_derivative(l, mm, axial) * rho**mm
    phase = np.cos(mm * psi) + 1j * math.copysign(1.0, m) * np.sin(mm * psi)
    return _as_output(radial * phase)


def sph_harm_all(l: int, unit) -> np.ndarray:
    """All Y_l^m, m = -l..l, on unit vectors; result has shape (2l+1, ...)."""
    axial, rho, psi = _polar_parts(unit)
    out = np.empty((2 * l + 1, *axial.shape), dtype=complex)
    for mm in range(l + 1):
        radial = _normalized_derivative(l, mm, axial) * rho**mm
        cos_part = radial * np.cos(mm * psi)
        sin_part = radial * np.sin(mm * psi)
        out[l + mm] = cos_part + 1j * sin_part
        out[l - mm] = cos_part - 1j * sin_part
    return out


def laguerre(n: int, alpha: float, x):
    """Generalized Laguerre polynomial L_n^(alpha)(x) by the three-term recurrence."""
    if n < 0:
        raise IndexError(f"Laguerre degree must be nonnegative, got {n}")
    if alpha <= -1.0:
        raise DomainError(f"Laguerre parameter must exceed -1, got {alpha}")
    x = np.asarray(x, dtype=float)
    previous = np.ones_like(x)
    if n == 0:
        return _as_output(previous)
    current = 1.0 + alpha - x
    for k in range(1, n):
        previous, current = (
            current,
            ((2 * k + 1 + alpha - x) * current - (k + alpha) * previous) / (k + 1),
        )
    return _as_output(current)


def ln_gamma(x: float) -> float:
    """Natural log of Gamma for positive arguments."""
    if x <= 0:
        raise DomainError(f"ln_gamma requires a positive argument, got {x}")
    return float(sps.gammaln(x))


def beta_fn(x: float, y: float) -> float:
    """Euler Beta function via log-Gamma."""
    if x <= 0 or y <= 0:
        raise DomainError(f"beta_fn requires positive arguments, got ({x}, {y})")
    return math.exp(ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y))


def gamma_ratio_audit(a: float, b: float, x_grid) -> float:
    """Fitted C in Gamma(x+a+1)/Gamma(x+b+1) <= C (x+a)^(a-b) over a sample grid."""
    x = np.asarray(x_grid, dtype=float)
    if np.any(x + a <= 0):
        raise DomainError(f"Gamma-ratio audit needs x + a > 0 on the whole grid (a={a})")
    log_ratio = sps.gammaln(x + a + 1) - sps.gammaln(x + b + 1) - (a - b) * np.log(x + a)
    return float(np.exp(np.max(log_ratio)))


def radial_log_norm(n: int, l: int) -> float:
    """log of (n! / (sqrt(2) Gamma(n + l + 3/2)))^(1/2)."""
    return 0.5 * (sps.gammaln(n + 1) - 0.5 * math.log(2.0) - sps.gammaln(n + l + 1.5))


def phi_eigenfunction(mode: ModeIndex, v):
    """Eigenfunction phi_{n,l,m}(v) of the linearized operator and of H = -Delta + |v|^2/4.

    Args:
        mode: Basis label
        v: Velocity of shape (3,) or (..., 3)

    Returns:
        Complex value(s) of shape v.shape[:-1]; zero at v = 0 when l >= 1
    """
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    r = np.sqrt(r2)
    safe_r = np.where(r > 0.0, r, 1.0)
    unit = np.where((r > 0.0)[..., None], v / safe_r[..., None], np.array([1.0, 0.0, 0.0]))
    radial = (
        math.exp(radial_log_norm(mode.n, mode.l))
        * (r / math.sqrt(2.0)) ** mode.l
        * np.exp(-0.25 * r2)
        * laguerre(mode.n, mode.l + 0.5, 0.5 * r2)
    )
    return _as_output(radial * sph_harm_cartesian(mode.l, mode.m, unit))


def fourier_prefactor(n: int, l: int) -> complex:
    """A_{n,l} = (-i)^l (2 pi)^(3/4) (sqrt(2) n! Gamma(n + l + 3/2))^(-1/2)."""
    log_magnitude = 0.75 * math.log(2.0 * math.pi) - 0.5 * (
        0.5 * math.log(2.0) + sps.gammaln(n + 1) + sps.gammaln(n + l + 1.5)
    )
    return _MINUS_I_POWERS[l % 4] * math.exp(log_magnitude)


def fourier_image(mode: ModeIndex, xi):
    """Fourier transform (kernel e^{-i v.xi}) of sqrt(mu) phi_{n,l,m} at xi."""
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum(xi * xi, axis=-1)
    r = np.sqrt(r2)
    safe_r = np.where(r > 0.0, r, 1.0)
    unit = np.where((r > 0.0)[..., None], xi / safe_r[..., None], np.array([1.0, 0.0, 0.0]))
    value = (
        fourier_prefactor(mode.n, mode.l)
        * (r / math.sqrt(2.0)) ** mode.energy()
        * np.exp(-0.5 * r2)
        * sph_harm_cartesian(mode.l, mode.m, unit)
    )
    return _as_output(value)


def sqrt_maxwellian(v):
    """sqrt(mu(v)) = (2 pi)^(-3/4) exp(-|v|^2/4)."""
    v = np.asarray(v, dtype=float)
    return _as_output((2.0 * math.pi) ** -0.75 * np.exp(-0.25 * np.sum(v * v, axis=-1)))
