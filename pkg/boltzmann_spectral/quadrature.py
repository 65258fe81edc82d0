"""Quadrature for the singular angular kernel, the unit sphere and the azimuth."""

import math
from collections.abc import Callable
from functools import lru_cache

import numpy as np
from loguru import logger
from scipy import special as sps

from .errors import QuadratureConvergenceError, QuadraturePreconditionError
from .models import QUARTER_PI, KernelParams, QuadratureSpec

# Successive estimates are compared only after this many graded levels
_MIN_LEVELS = 3

_MAX_SPHERE_DEGREE = 256


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    nodes, weights = sps.roots_legendre(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _tail(f: Callable, epsilon: float, vanish_order: float, params: KernelParams):
    # Integral over (0, epsilon) of beta * f(epsilon) (theta/epsilon)^p
    if math.isinf(vanish_order):
        return 0.0
    value = f(np.array([epsilon]))[0]
    return params.kappa_beta * value * epsilon ** (-2.0 * params.s) / (vanish_order - 2.0 * params.s)


def integrate_beta_moment(
    f: Callable[[np.ndarray], np.ndarray],
    vanish_order: float,
    params: KernelParams,
    spec: QuadratureSpec,
    min_theta: float = 0.0,
):
    """Integrate beta(theta) f(theta) over (0, pi/4].

    Composite Gauss panels on the geometric mesh [pi/4 r^(k+1), pi/4 r^k] are added one
    level at a time; the part below the current level is replaced by the leading-order
    tail kappa_beta f(eps) eps^(-2s) / (p - 2s). Refinement stops when two successive
    tail-corrected estimates agree to spec.rel_tol.

    Args:
        f: Vectorized integrand (real or complex) with f(theta) = O(theta^p) near 0
        vanish_order: The certified order p; use math.inf for an identically zero f
        params: Kernel parameters
        spec: Quadrature controls
        min_theta: Optional floor; refinement also stops once the mesh reaches it

    Returns:
        The integral (float or complex, following f)

    Raises:
        QuadraturePreconditionError: If p <= 2s
        QuadratureConvergenceError: If max_levels is reached without agreement

    Example:
        >>> params = KernelParams(s=0.5)
        >>> integrate_beta_moment(lambda t: t**2.0, 2.0, params, QuadratureSpec())  # pi/4
    """
    if not vanish_order > 2.0 * params.s:
        raise QuadraturePreconditionError(
            f"Vanish order {vanish_order} must exceed 2s = {2.0 * params.s} for integrability"
        )

    nodes, weights = gauss_legendre(spec.panel_order)
    upper = QUARTER_PI
    total = 0.0
    previous = None
    for level in range(1, spec.max_levels + 1):
        lower = upper * spec.grading_ratio
        half_width = 0.5 * (upper - lower)
        theta = lower + half_width * (nodes + 1.0)
        total = total + half_width * np.sum(weights * params.beta(theta) * f(theta))
        estimate = total + _tail(f, lower, vanish_order, params)

        if previous is not None and level >= _MIN_LEVELS:
            if abs(estimate - previous) <= spec.rel_tol * abs(estimate):
                return estimate
        if lower < min_theta:
            return estimate
        previous = estimate
        upper = lower

    logger.error(f"Beta-moment quadrature did not converge in {spec.max_levels} levels")
    raise QuadratureConvergenceError(
        f"Failed to converge beta-moment quadrature within {spec.max_levels} levels "
        f"(last change {abs(estimate - previous)!r}, estimate {estimate!r})"
    )


def integrate_beta_even(
    f: Callable[[np.ndarray], np.ndarray],
    vanish_order: float,
    params: KernelParams,
    spec: QuadratureSpec,
):
    """Integral over |theta| <= pi/4 of beta f for an even integrand: twice the half-range."""
    return 2.0 * integrate_beta_moment(f, vanish_order, params, spec)


@lru_cache(maxsize=128)
def sphere_quadrature(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on S^2 exact for spherical polynomials of degree <= degree.

    Gauss-Legendre in the polar cosine (polar axis v_1) with ceil((degree+1)/2) nodes,
    times degree+1 uniform azimuthal nodes.

    Returns:
        (nodes, weights) with nodes of shape (K, 3); weights sum to 4 pi
    """
    if degree < 0 or degree > _MAX_SPHERE_DEGREE:
        raise ValueError(f"Sphere rule degree must lie in [0, {_MAX_SPHERE_DEGREE}], got {degree}")
    polar_count = (degree + 2) // 2
    azimuth_count = degree + 1
    x, w = gauss_legendre(polar_count)
    phi = 2.0 * math.pi * np.arange(azimuth_count) / azimuth_count
    ring = np.sqrt(1.0 - x * x)
    nodes = np.stack(
        [
            np.repeat(x, azimuth_count),
            np.outer(ring, np.cos(phi)).ravel(),
            np.outer(ring, np.sin(phi)).ravel(),
        ],
        axis=-1,
    )
    weights = np.repeat(w, azimuth_count) * (2.0 * math.pi / azimuth_count)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def azimuthal_nodes(trig_degree: int) -> np.ndarray:
    """The trig_degree+1 uniform nodes of [0, 2 pi)."""
    return 2.0 * math.pi * np.arange(trig_degree + 1) / (trig_degree + 1)


def azimuthal_average(g: Callable[[np.ndarray], np.ndarray], trig_degree: int) -> complex:
    """(1/2pi) times the integral of g over [0, 2pi), exact for trig degree <= trig_degree."""
    return complex(np.mean(g(azimuthal_nodes(trig_degree))))


def transverse_frame(axes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal vectors (e1, e2) spanning the plane orthogonal to each unit axis.

    The reference direction is e_z, switched to e_x when |axis . e_z| > 1 - 1e-6.
    """
    axes = np.asarray(axes, dtype=float)
    near_pole = np.abs(axes[..., 2]) > 1.0 - 1e-6
    reference = np.where(near_pole[..., None], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    e1 = reference - np.sum(reference * axes, axis=-1, keepdims=True) * axes
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(axes, e1)
    return e1, e2
