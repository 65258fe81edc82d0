"""Tests for the graded beta-moment rule and the sphere/azimuth rules."""

import math

import numpy as np
import pytest
from scipy import integrate

from boltzmann_spectral.errors import QuadratureConvergenceError, QuadraturePreconditionError
from boltzmann_spectral.models import KernelParams, QuadratureSpec
from boltzmann_spectral.quadrature import (
    azimuthal_average,
    gauss_legendre,
    integrate_beta_even,
    integrate_beta_moment,
    sphere_quadrature,
    transverse_frame,
)


class TestGaussLegendre:
    def test_polynomial_exactness(self):
        nodes, weights = gauss_legendre(4)
        assert np.sum(weights * nodes**6) == pytest.approx(2 / 7, rel=1e-14)

    def test_arrays_are_read_only(self):
        nodes, _ = gauss_legendre(5)
        with pytest.raises(ValueError):
            nodes[0] = 0.0


class TestBetaMoment:
    """Graded panels with the leading-order tail correction."""

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_monomial_closed_form(self, s, spec):
        params = KernelParams(s=s, kappa_beta=2.0)
        value = integrate_beta_moment(lambda t: t**2.0, 2.0, params, spec)
        expected = 2.0 * (math.pi / 4) ** (2 - 2 * s) / (2 - 2 * s)
        assert value == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_against_adaptive_reference(self, s, spec):
        params = KernelParams(s=s)
        value = integrate_beta_moment(lambda t: np.sin(t) ** 2 * np.cos(t) ** 3, 2.0, params, spec)
        reference, _ = integrate.quad(
            lambda t: t ** (-1 - 2 * s) * math.sin(t) ** 2 * math.cos(t) ** 3,
            0.0,
            math.pi / 4,
            epsabs=1e-15,
            epsrel=1e-13,
            limit=400,
        )
        assert value == pytest.approx(reference, rel=1e-9)

    def test_complex_integrand(self, params, spec):
        real = integrate_beta_moment(lambda t: np.sin(t) ** 2, 2.0, params, spec)
        value = integrate_beta_moment(lambda t: (1 + 2j) * np.sin(t) ** 2, 2.0, params, spec)
        assert value == pytest.approx((1 + 2j) * real, rel=1e-13)

    def test_even_extension_doubles(self, params, spec):
        half = integrate_beta_moment(lambda t: np.sin(t) ** 4, 4.0, params, spec)
        assert integrate_beta_even(lambda t: np.sin(t) ** 4, 4.0, params, spec) == pytest.approx(2 * half)

    def test_non_integrable_order(self, params, spec):
        with pytest.raises(QuadraturePreconditionError, match="must exceed"):
            integrate_beta_moment(lambda t: t, 1.0, params, spec)

    def test_level_budget_exhausted(self, params):
        with pytest.raises(QuadratureConvergenceError, match="2 levels"):
            integrate_beta_moment(lambda t: t**2, 2.0, params, QuadratureSpec(max_levels=2))

    def test_kernel_vanishes_outside_support(self, params):
        assert params.beta(np.array([0.0, 1.0]))[0] == 0.0
        assert params.beta(np.array([0.0, 1.0]))[1] == 0.0


class TestSphereRules:
    def test_weights_sum_to_area(self):
        _, weights = sphere_quadrature(8)
        assert weights.sum() == pytest.approx(4 * math.pi, rel=1e-14)

    def test_polynomial_exactness(self):
        nodes, weights = sphere_quadrature(6)
        assert np.sum(weights * nodes[:, 0] ** 4) == pytest.approx(4 * math.pi / 5, rel=1e-13)
        assert np.sum(weights * nodes[:, 1] ** 2 * nodes[:, 2] ** 4) == pytest.approx(
            4 * math.pi / 35, rel=1e-13
        )

    def test_degree_limit(self):
        with pytest.raises(ValueError, match="degree"):
            sphere_quadrature(300)

    def test_azimuthal_average(self):
        assert azimuthal_average(lambda phi: np.cos(2 * phi) ** 2, 4) == pytest.approx(0.5)
        assert abs(azimuthal_average(lambda phi: np.exp(3j * phi), 3)) < 1e-14

    @pytest.mark.parametrize(
        "axis", [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.6, -0.8], [0.3, 0.4, math.sqrt(0.75)]]
    )
    def test_transverse_frame_orthonormal(self, axis):
        axes = np.array([axis])
        e1, e2 = transverse_frame(axes)
        basis = np.stack([axes[0], e1[0], e2[0]])
        np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-14)
