"""Tests for exponential polynomials and the closed-form mode cascade."""

import math

import numpy as np
import pytest

from boltzmann_spectral.cascade import (
    ExpPoly,
    SpectralState,
    cascade_solve,
    evaluate_solution,
    exppoly_mul,
    solve_linear_ode,
)
from boltzmann_spectral.errors import AdmissibilityError, TableCoverageError
from boltzmann_spectral.galerkin import random_admissible_state
from boltzmann_spectral.models import ModeIndex

EPS = 1e-3
SAMPLE_TIMES = [0.0, 0.25, 0.5, 1.0, 2.0, 3.5]


def derivative(poly: ExpPoly, t: float) -> complex:
    return sum(
        c * (p * t ** (p - 1) if p else 0.0) * math.exp(-a * t) - a * c * t**p * math.exp(-a * t)
        for a, p, c in poly.terms
    )


class TestExpPoly:
    """Canonical form and arithmetic."""

    def test_exponentials_multiply(self):
        product = exppoly_mul(ExpPoly.constant(1.0, rate=0.5), ExpPoly.constant(1.0, rate=1.5))
        assert product.terms == [(2.0, 0, 1.0 + 0j)]

    def test_powers_add(self):
        t_exp = ExpPoly.from_terms([(1.0, 1, 1.0)])
        assert (t_exp * ExpPoly.constant(1.0, rate=1.0)).terms == [(2.0, 1, 1.0 + 0j)]

    def test_random_product_matches_pointwise(self):
        rng = np.random.default_rng(7)

        def random_poly(size):
            return ExpPoly.from_terms(
                (float(rng.uniform(0, 2)), int(rng.integers(0, 3)), complex(*rng.normal(size=2)))
                for _ in range(size)
            )

        f, g = random_poly(3), random_poly(4)
        times = np.linspace(0.0, 4.0, 20)
        np.testing.assert_allclose((f * g)(times), f(times) * g(times), rtol=1e-12, atol=1e-14)

    def test_canonical_form(self):
        poly = ExpPoly.from_terms([(2.0, 0, 1.0), (1.0, 1, 3.0), (2.0, 0, -1.0), (1.0, 0, 2.0)])
        assert poly.terms == [(1.0, 0, 2.0 + 0j), (1.0, 1, 3.0 + 0j)]
        assert poly(0.0) == pytest.approx(2.0)

    def test_near_equal_rates_merge(self):
        poly = ExpPoly.from_terms([(1.0, 0, 1.0), (1.0 + 1e-14, 0, 1.0)])
        assert poly.terms == [(1.0, 0, 2.0 + 0j)]

    def test_conjugate_and_scale(self):
        poly = ExpPoly.from_terms([(1.0, 0, 1 + 2j)])
        assert poly.conjugate().terms == [(1.0, 0, 1 - 2j)]
        assert poly.scaled(0).is_zero()


class TestLinearOde:
    def test_homogeneous(self):
        solution = solve_linear_ode(1.0, 1.0, ExpPoly())
        assert solution.terms == [(1.0, 0, 1.0 + 0j)]

    def test_exact_resonance(self):
        solution = solve_linear_ode(1.0, 0.0, ExpPoly.constant(1.0, rate=1.0))
        assert solution.terms == [(1.0, 1, 1.0 + 0j)]

    def test_integrating_factor(self):
        solution = solve_linear_ode(2.0, 0.0, ExpPoly.constant(1.0, rate=1.0))
        for t in SAMPLE_TIMES:
            assert solution(t) == pytest.approx(math.exp(-t) - math.exp(-2 * t), abs=1e-15)

    def test_polynomial_forcing_residual(self):
        forcing = ExpPoly.from_terms([(0.3, 2, 1.5 - 0.5j), (1.2, 0, 2.0), (0.7, 1, 1j)])
        lam = 0.7
        solution = solve_linear_ode(lam, 0.25 + 0.1j, forcing)
        assert solution(0.0) == pytest.approx(0.25 + 0.1j)
        for t in SAMPLE_TIMES:
            residual = derivative(solution, t) + lam * solution(t) - forcing(t)
            assert abs(residual) < 1e-12


class TestCascadeSolve:
    """Closed-form solution on a finite energy ball."""

    def test_single_mode_decays_exponentially(self, table6):
        mode = ModeIndex.of(0, 2, 0)
        solution = cascade_solve(SpectralState({mode: EPS}, reality_flag=True), table6, 6)
        rate = table6.eigenvalue(0, 2)
        for t in (0.5, 1.0, 2.0):
            assert solution[mode](t) == pytest.approx(EPS * math.exp(-rate * t), rel=1e-12)

    def test_quadratic_forcing_matches_hand_integration(self, table6):
        source, target = ModeIndex.of(0, 2, 0), ModeIndex.of(0, 4, 0)
        solution = cascade_solve(SpectralState({source: EPS}, reality_flag=True), table6, 6)
        weight = table6.mu[(0, 0, 2, 2, 0, 0, 0)]
        rate_2, rate_4 = table6.eigenvalue(0, 2), table6.eigenvalue(0, 4)
        for t in (0.5, 1.0, 2.0):
            expected = (
                weight * EPS**2 * (math.exp(-2 * rate_2 * t) - math.exp(-rate_4 * t)) / (rate_4 - 2 * rate_2)
            )
            assert solution[target](t) == pytest.approx(expected, rel=1e-10)

    def test_zero_initial_data(self, table4):
        solution = cascade_solve(SpectralState(), table4, 4)
        assert all(poly.is_zero() for poly in solution.modes.values())

    def test_orders_agree(self, table6):
        init = random_admissible_state(4, EPS, np.random.default_rng(11))
        by_induction = cascade_solve(init, table6, 6, order="induction")
        by_energy = cascade_solve(init, table6, 6, order="energy")
        for mode, poly in by_induction.modes.items():
            assert poly.allclose(by_energy[mode])

    def test_reality_and_invariants_preserved(self, table6):
        init = random_admissible_state(6, EPS, np.random.default_rng(5))
        solution = cascade_solve(init, table6, 6)
        for t in SAMPLE_TIMES:
            state = evaluate_solution(solution, t)
            assert state.reality_flag
            assert state.conjugation_defect() <= 1e-15
            assert state.first_inadmissible_mode() is None

    def test_evaluation_at_zero_returns_init(self, table6):
        init = random_admissible_state(6, EPS, np.random.default_rng(2))
        state = evaluate_solution(cascade_solve(init, table6, 6), 0.0)
        for mode, value in init.coeffs.items():
            assert state.get(mode) == pytest.approx(value, abs=1e-18)

    def test_norm_decreases_for_small_data(self, table6):
        solution = cascade_solve(random_admissible_state(6, EPS, np.random.default_rng(9)), table6, 6)
        norms = [evaluate_solution(solution, t).l2_norm() for t in np.linspace(0, 5, 26)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:], strict=False))

    def test_inadmissible_initial_data(self, table4):
        with pytest.raises(AdmissibilityError, match=r"\(1,0,0\)"):
            cascade_solve(SpectralState({ModeIndex.of(1, 0, 0): 1e-3}), table4, 4)

    def test_energy_cap_beyond_table(self, table4):
        with pytest.raises(TableCoverageError):
            cascade_solve(SpectralState({ModeIndex.of(0, 2, 0): EPS}), table4, 6)

    def test_negative_time(self, table4):
        solution = cascade_solve(SpectralState(), table4, 4)
        with pytest.raises(ValueError):
            evaluate_solution(solution, -1.0)
