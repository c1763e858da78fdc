"""Sector eigensolver: exact limits, invariants, and failure modes."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from magtrap import TrapParams
from magtrap.radial import (
    BasisConditioningError,
    BracketingError,
    RadialBasis,
    crude_variational_energy,
    find_crossing,
    ground_state_scan,
    overlap_and_hamiltonian_matrices,
    solve_sector,
    spectrum_sweep,
)


class TestZeroCouplingLimit:
    def test_harmonic_ground_energy(self):
        sol = solve_sector(TrapParams(nu=0.0, b=0.0), 0, size=20)
        assert sol.energies[0] == pytest.approx(1.0, abs=1e-8)

    def test_magnetic_ground_energy(self):
        sol = solve_sector(TrapParams(nu=1.0, b=0.0), 1, size=25)
        assert sol.energies[0] == pytest.approx(math.sqrt(5) - 0.5, abs=1e-6)

    def test_excited_levels_match_closed_form(self):
        tp = TrapParams(nu=2.0, b=0.0)
        sol = solve_sector(tp, -2)
        for n in range(3):
            expected = oracles.fock_darwin_energy(2.0, -2, n)
            assert sol.energies[n] == pytest.approx(expected, abs=1e-8)


class TestSectorSymmetry:
    def test_sign_flip_shifts_by_m_nu(self):
        # h(-m) = h(m) + m nu: every level shifts rigidly, any b
        tp = TrapParams(nu=1.3, b=4.0)
        plus = solve_sector(tp, 2).energies[:5]
        minus = solve_sector(tp, -2).energies[:5]
        np.testing.assert_allclose(minus, plus + 2 * 1.3, rtol=1e-10)

    @given(nu=st.floats(0.1, 3.0), b=st.floats(0.0, 10.0),
           m=st.integers(1, 3))
    @settings(max_examples=15)
    def test_sign_flip_property(self, nu, b, m):
        tp = TrapParams(nu=nu, b=b)
        e_plus = solve_sector(tp, m, size=12).energies[0]
        e_minus = solve_sector(tp, -m, size=12).energies[0]
        assert e_minus == pytest.approx(e_plus + m * nu, rel=1e-9)


class TestVariationalStructure:
    def test_energy_decreases_with_basis_size(self):
        tp = TrapParams(nu=1.0, b=5.0)
        energies = [solve_sector(tp, 0, size=k).energies[0]
                    for k in (5, 10, 20, 30)]
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-12)

    def test_levels_ascending(self):
        sol = solve_sector(TrapParams(nu=0.5, b=2.0), 1)
        assert np.all(np.diff(sol.energies) > 0)

    def test_crude_bound_is_exact_at_zero_coupling(self):
        assert crude_variational_energy(TrapParams(nu=0.0), 0) == 1.0
        assert crude_variational_energy(
            TrapParams(nu=1.0), 0) == pytest.approx(math.sqrt(5) / 2,
                                                    abs=1e-15)

    def test_crude_upper_bounds_converged_energy(self):
        # the single-Gaussian trial keeps its bound property even deep in
        # the ring regime, where its error is enormous
        for b in (0.0, 1.0, 10.0):
            tp = TrapParams(nu=0.5, b=b)
            crude = crude_variational_energy(tp, 0)
            assert crude >= solve_sector(tp, 0).energies[0] - 1e-10

    def test_crude_rejects_negative_m(self):
        with pytest.raises(ValueError):
            crude_variational_energy(TrapParams(nu=1.0), -1)


class TestCoefficients:
    def test_small_basis_gram_is_identity(self):
        # the raw-basis Gram test only makes sense while the overlap matrix
        # is itself representable in float64; at K = 8 its condition number
        # is ~1e9, far beyond that the triple product loses all digits even
        # though the solver's internal factorization is exact
        tp = TrapParams(nu=1.0, b=1.0)
        sol = solve_sector(tp, 0, size=8)
        S, _ = overlap_and_hamiltonian_matrices(RadialBasis(m=0, size=8), tp)
        gram = sol.coefficients.T @ S @ sol.coefficients
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-6)

    def test_rayleigh_quotient_reproduces_energy(self):
        tp = TrapParams(nu=0.5, b=3.0)
        sol = solve_sector(tp, 1, size=10)
        S, H = overlap_and_hamiltonian_matrices(RadialBasis(m=1, size=10), tp)
        c = sol.coefficients[:, 0]
        rq = (c @ H @ c) / (c @ S @ c)
        assert rq == pytest.approx(sol.energies[0], rel=1e-9)

    def test_cached_solutions_are_isolated_copies(self):
        tp = TrapParams(nu=0.25, b=0.5)
        first = solve_sector(tp, 0, size=6)
        first.energies[0] = -1.0
        second = solve_sector(tp, 0, size=6)
        assert second.energies[0] > 0

    def test_params_carried_through(self):
        tp = TrapParams(nu=1.0, b=2.0, field_sign=-1)
        sol = solve_sector(tp, 1, size=6)
        assert sol.params.field_sign == -1
        assert sol.m == 1
        assert sol.coefficients.shape == (6, 6)


class TestConditioningFailure:
    def test_oversized_basis_raises(self):
        with pytest.raises(BasisConditioningError) as err:
            solve_sector(TrapParams(nu=1.0, b=1.0), 0, size=100)
        assert err.value.size == 100
        assert "K=100" in str(err.value)

    def test_unconverged_sentinel_warns(self):
        with pytest.warns(RuntimeWarning, match="increase the basis"):
            solve_sector(TrapParams(nu=0.5, b=10.0), 0, size=4,
                         check_convergence=True)

    def test_converged_sentinel_is_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            solve_sector(TrapParams(nu=0.5, b=10.0), 0, size=30,
                         check_convergence=True)


class TestGroundStateScan:
    def test_zero_field_winner_is_m0(self):
        for b in (0.0, 5.0):
            assert ground_state_scan(TrapParams(nu=0.0, b=b)).m_star == 0

    def test_strong_coupling_winner_is_m1(self):
        rec = ground_state_scan(TrapParams(nu=1.0, b=5.0))
        assert rec.m_star == 1
        assert rec.solution.energies[0] == rec.energy

    @pytest.mark.parametrize("m_range", [(-1, 4), (-2, 3), (1, 6)])
    def test_rejects_short_scan_windows(self, m_range):
        with pytest.raises(ValueError):
            ground_state_scan(TrapParams(nu=1.0, b=1.0), m_range=m_range)

    @given(nu=st.floats(0.0, 3.0), b=st.floats(0.0, 8.0))
    @settings(max_examples=10)
    def test_winner_minimizes_over_window(self, nu, b):
        tp = TrapParams(nu=nu, b=b)
        rec = ground_state_scan(tp, size=12)
        sector0 = solve_sector(tp, 0, size=12).energies[0]
        assert rec.energy <= sector0 + 1e-12


class TestFindCrossing:
    def test_locates_degeneracy(self):
        tp = TrapParams(nu=0.0, b=1.0)
        nu_star = find_crossing(tp, 0, 1, (0.05, 5.0))
        assert nu_star == pytest.approx(1.2480082416, abs=1e-6)
        at = TrapParams(nu=nu_star, b=1.0)
        gap = (solve_sector(at, 0).energies[0]
               - solve_sector(at, 1).energies[0])
        assert abs(gap) < 1e-9

    def test_no_crossing_at_zero_coupling(self):
        with pytest.raises(BracketingError):
            find_crossing(TrapParams(nu=0.0, b=0.0), 0, 1, (0.1, 3.0))

    def test_rejects_bad_bracket(self):
        tp = TrapParams(nu=0.0, b=1.0)
        with pytest.raises(ValueError):
            find_crossing(tp, 0, 1, (2.0, 1.0))
        with pytest.raises(ValueError):
            find_crossing(tp, 0, 1, (-1.0, 2.0))


class TestSpectrumSweep:
    def test_row_layout_and_order(self):
        rows = spectrum_sweep(1.0, [0.0, 0.5], [1, 0], size=10, n_levels=2)
        assert len(rows) == 2 * 2 * 2
        keys = [(r[0], r[1], r[2]) for r in rows]
        assert keys == sorted(keys)

    def test_threaded_sweep_matches_serial(self):
        serial = spectrum_sweep(2.0, [0.3, 0.9, 1.7], [-1, 0, 2], size=12,
                                n_levels=2, workers=1)
        threaded = spectrum_sweep(2.0, [0.3, 0.9, 1.7], [-1, 0, 2], size=12,
                                  n_levels=2, workers=3)
        assert serial == threaded

    def test_values_match_direct_solves(self):
        rows = spectrum_sweep(0.5, [1.1], [0], size=10, n_levels=3)
        sol = solve_sector(TrapParams(nu=1.1, b=0.5), 0, size=10)
        for (_, _, level, energy) in rows:
            assert energy == sol.energies[level]
