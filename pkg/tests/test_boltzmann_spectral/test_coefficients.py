"""Tests for eigenvalues, radial couplings, mu coefficients and table assembly."""

import dataclasses
import math
from unittest.mock import patch

import numpy as np
import pytest
from scipy import integrate

from boltzmann_spectral.coefficients import (
    bobylev_check,
    build_table,
    coupling_map,
    cr_bound_audit,
    eigenvalue_band,
    gamma_pair_expansion,
    lambda1,
    lambda2,
    lambda_linear,
    lambda_rad1,
    mu_coefficient,
    mu_groups,
    mu_sum_audit,
    musq_sum,
    power_moment,
    rad1_bound_audit,
    rad2_bound_audit,
    selection_k_max,
    sine_square_series,
    spectral_bound_audit,
    verify_orthogonality,
)
from boltzmann_spectral.errors import QuadratureConvergenceError, TableCoverageError
from boltzmann_spectral.models import KernelParams, ModeIndex

XI = np.array([0.7, -0.4, 0.5])


class TestLinearEigenvalues:
    """lambda_{n,l} and the loss/gain split."""

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_collision_invariants_vanish(self, s, spec):
        params = KernelParams(s=s)
        for n, l in [(0, 0), (1, 0), (0, 1)]:
            assert abs(lambda_linear(n, l, params, spec)) <= 1e-10

    def test_series_is_exact(self):
        # 1 - sin^4 - cos^4 = 2u - 2u^2 with u = sin^2
        assert sine_square_series("linear", 2, 0) == (0.0, 2.0, -2.0)
        assert sine_square_series("loss", 0, 0) == (0.0,)

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_loss_gain_identity(self, s, spec):
        params = KernelParams(s=s)
        for n, l in [(2, 0), (0, 3), (1, 2), (3, 1), (0, 6)]:
            value = lambda_linear(n, l, params, spec)
            split = -lambda1(n, l, params, spec) - lambda2(n, l, params, spec)
            assert value == pytest.approx(split, rel=1e-9)

    def test_degree_two_relation(self, params, spec):
        gap = lambda_linear(2, 0, params, spec)
        assert lambda_linear(0, 2, params, spec) == pytest.approx(1.5 * gap, rel=1e-12)
        assert lambda_linear(1, 1, params, spec) == pytest.approx(gap, rel=1e-12)

    def test_gap_against_reference(self, params, spec):
        reference, _ = integrate.quad(
            lambda t: t**-2.0 * 2 * math.sin(t) ** 2 * math.cos(t) ** 2,
            0.0,
            math.pi / 4,
            epsabs=1e-15,
            epsrel=1e-13,
        )
        assert lambda_linear(2, 0, params, spec) == pytest.approx(2 * reference, rel=1e-9)

    def test_loss_is_nonpositive(self, table6):
        assert all(value <= 1e-14 for value in table6.lin1.values())

    def test_eigenvalues_grow(self, table6):
        assert table6.linear[(0, 6)] > table6.linear[(0, 2)] > 0


class TestRadialCouplings:
    def test_unit_prefactor(self, params, spec):
        # the normalization collapses to 1 at (1, 0, 0)
        expected = power_moment(2, 0, params, spec)
        assert lambda_rad1(1, 0, 0, params, spec) == pytest.approx(expected, rel=1e-13)

    def test_rad1_requires_positive_n(self, params, spec):
        with pytest.raises(IndexError, match="n >= 1"):
            lambda_rad1(0, 1, 1, params, spec)

    def test_table_keys(self, table4):
        assert all(n >= 1 and 2 * (n + nt) + lt <= 4 for n, nt, lt in table4.rad1)
        assert all(nt >= 1 and l >= 1 and 2 * (n + nt) + l <= 4 for n, nt, l in table4.rad2)


class TestMuCoefficients:
    """Selection rules and the two routes to sum |mu|^2."""

    def test_selection_bound(self):
        assert selection_k_max(2, 2, 1, 1) == 1
        assert selection_k_max(2, 3, 0, 0) == 2
        assert selection_k_max(1, 1, 1, 1) == 0

    def test_forbidden_degree_drop_is_zero(self, params, spec):
        assert mu_coefficient(0, 0, 2, 2, 2, 1, 1, params, spec) == 0

    def test_forbidden_target_order(self, params, spec):
        assert mu_coefficient(0, 0, 2, 2, 0, 1, 0, params, spec, m_star=0) == 0
        allowed = abs(mu_coefficient(0, 0, 2, 2, 0, 1, 0, params, spec))
        forbidden = mu_coefficient(
            0, 0, 2, 2, 0, 1, 0, params, spec, m_star=0, enforce_selection=False
        )
        assert abs(forbidden) <= 1e-12 * allowed

    @pytest.mark.parametrize("indices", [(0, 0, 0, 2, 0, 0, 0), (0, 0, 2, 2, 0, 3, 0), (0, 0, 1, 1, 2, 0, 0)])
    def test_invalid_indices(self, indices, params, spec):
        with pytest.raises(IndexError):
            mu_coefficient(*indices, params, spec)

    def test_sparse_entries_respect_selection(self, table6):
        for n, nt, l, lt, k, m, mt in table6.mu:
            assert k <= selection_k_max(l, lt, m, mt)
            assert l >= 1 and lt >= 1

    def test_invariant_sources_excluded(self, table6):
        assert all((n, l) != (0, 1) and (nt, lt) != (0, 1) for n, nt, l, lt, *_ in table6.mu)

    def test_groups(self):
        assert mu_groups(4) == [(0, 0, 2, 2)]
        assert (0, 0, 1, 1) in mu_groups(2, invariant_sources=True)

    @pytest.mark.parametrize("group", [(0, 0, 2, 2), (0, 0, 2, 3), (1, 0, 1, 2)])
    def test_orthogonality(self, group, table6):
        report = verify_orthogonality(*group, table6)
        assert report.max_violation <= 1e-8

    @pytest.mark.parametrize("group,k", [((0, 0, 2, 2), 0), ((0, 0, 2, 2), 1), ((1, 0, 1, 2), 1)])
    def test_square_sum_routes_agree(self, group, k, table6, params, spec):
        row = table6.mu_group(group)
        brute = sum(abs(v) ** 2 for key, v in row.items() if key[4] == k and key[5] + key[6] == 0)
        assert musq_sum(*group, k, 0, params, spec) == pytest.approx(brute, rel=1e-8)

    def test_square_sum_rejects_large_order(self, params, spec):
        with pytest.raises(IndexError, match="exceeds degree"):
            musq_sum(0, 0, 2, 2, 2, 1, params, spec)


class TestGammaExpansion:
    """Expansion of Gamma on basis pairs and the Fourier-side oracle."""

    def test_energy_additivity(self, table6):
        for target, entries in coupling_map(table6, 6).items():
            for a, b, _ in entries:
                assert a.energy() + b.energy() == target.energy()

    def test_smallest_truncation_has_no_couplings(self, table4):
        assert coupling_map(table4, 2) == {}

    def test_energy_four_fed_by_degree_two(self, table4):
        couplings = coupling_map(table4, 4)
        assert couplings
        for target, entries in couplings.items():
            assert target.energy() == 4
            assert all(a.energy() == 2 and b.energy() == 2 for a, b, _ in entries)

    def test_coverage(self, table4):
        with pytest.raises(TableCoverageError):
            gamma_pair_expansion(ModeIndex.of(0, 2, 0), ModeIndex.of(0, 3, 0), table4)
        with pytest.raises(TableCoverageError):
            coupling_map(table4, 6)

    def test_ground_pair_is_empty(self, table4):
        assert gamma_pair_expansion(ModeIndex.of(0, 0, 0), ModeIndex.of(0, 0, 0), table4) == []

    def test_momentum_pair_targets(self, params, spec):
        table = build_table(2, params, spec, threads=1, invariant_sources=True)
        a = ModeIndex.of(0, 1, 0)
        targets = {target for target, _ in gamma_pair_expansion(a, a, table)}
        assert targets == {ModeIndex.of(0, 2, 0), ModeIndex.of(1, 0, 0)}

    def test_loss_case(self, table4):
        b = ModeIndex.of(0, 2, 1)
        ((target, weight),) = gamma_pair_expansion(ModeIndex.of(0, 0, 0), b, table4)
        assert target == b
        assert weight == pytest.approx(table4.lin1[(0, 2)])

    @pytest.mark.parametrize(
        "a,b",
        [
            ((0, 0, 0), (0, 2, 1)),
            ((0, 2, -1), (0, 0, 0)),
            ((1, 0, 0), (0, 2, 1)),
            ((0, 2, 1), (1, 0, 0)),
            ((0, 2, 0), (0, 2, 0)),
            ((0, 2, 1), (0, 2, -2)),
        ],
    )
    def test_fourier_oracle(self, a, b, table4):
        direct, expanded = bobylev_check(ModeIndex.of(*a), ModeIndex.of(*b), table4, XI)
        assert abs(direct - expanded) <= 1e-6 * max(abs(direct), abs(expanded), 1e-12)

    def test_fourier_oracle_general_pair(self, table6):
        direct, expanded = bobylev_check(ModeIndex.of(0, 3, 1), ModeIndex.of(1, 1, 0), table6, XI)
        assert abs(direct - expanded) <= 1e-6 * max(abs(direct), abs(expanded))


class TestTableBuild:
    def test_deterministic_across_workers(self, params, spec, table4):
        serial = build_table(4, params, spec, threads=1)
        for name in ("linear", "lin1", "lin2", "rad1", "rad2", "mu"):
            assert getattr(serial, name) == getattr(table4, name)

    def test_reference_size(self, table8):
        assert table8.n_max_energy == 8
        assert set(table8.linear) == {(n, l) for n in range(5) for l in range(9) if 2 * n + l <= 8}
        assert all(abs(table8.linear[key]) <= 1e-10 for key in ((0, 0), (1, 0), (0, 1)))
        for n, nt, l, lt, k, m, mt in table8.mu:
            assert 2 * (n + nt + k) + l + lt - 2 * k <= 8
        assert {key[:4] for key in table8.mu} <= set(mu_groups(8))

    def test_reference_size_extends_smaller_table(self, table8, table6):
        for key, value in table6.mu.items():
            assert table8.mu[key] == pytest.approx(value, rel=1e-12)

    def test_cutoff_too_small(self, params, spec):
        with pytest.raises(ValueError, match="at least 2"):
            build_table(1, params, spec)

    def test_failures_are_aggregated(self, params, spec):
        with (
            patch(
                "boltzmann_spectral.coefficients.mu_coefficient",
                side_effect=QuadratureConvergenceError("no convergence"),
            ),
            pytest.raises(QuadratureConvergenceError, match=r"mu\(0, 0, 2, 2\)"),
        ):
            build_table(4, params, spec, threads=2)

    def test_coverage_lookup(self, table4):
        with pytest.raises(TableCoverageError):
            table4.eigenvalue(3, 0)

    def test_table_is_frozen(self, table4):
        with pytest.raises(dataclasses.FrozenInstanceError):
            table4.n_max_energy = 8


class TestBoundAudits:
    def test_spectral_band(self, table6):
        c_low, c_high = spectral_bound_audit(table6)
        assert 0.05 < c_low <= c_high < 50 * c_low

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_spectral_band_to_energy_sixteen(self, s, spec):
        params = KernelParams(s=s)
        c_low, c_high = eigenvalue_band(16, params, spec)
        assert c_low > 0.05
        assert c_high / c_low < 50
        gap = lambda_linear(2, 0, params, spec)
        for n, l in [(0, 2), (0, 3), (1, 2), (0, 8), (4, 0), (3, 5), (0, 16), (8, 0)]:
            assert lambda_linear(n, l, params, spec) >= gap * (1 - 1e-9)

    def test_band_matches_table_audit(self, table6, params, spec):
        assert eigenvalue_band(6, params, spec) == pytest.approx(spectral_bound_audit(table6), rel=1e-12)

    @pytest.mark.parametrize("audit", [rad1_bound_audit, rad2_bound_audit, mu_sum_audit, cr_bound_audit])
    def test_constants_are_finite_at_reference_size(self, audit, table8):
        result = audit(table8)
        assert math.isfinite(result.constant)
        assert result.constant > 0.0

    @pytest.mark.parametrize("audit", [rad1_bound_audit, rad2_bound_audit, mu_sum_audit, cr_bound_audit])
    def test_constants_are_finite(self, audit, table6):
        result = audit(table6)
        assert math.isfinite(result.constant)
        assert result.samples > 0
