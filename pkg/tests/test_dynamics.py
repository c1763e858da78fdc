"""Grid propagation: packets, ramps, frames, guards, imaginary time."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import oracles
from magtrap import TrapParams
from magtrap.dynamics import (
    BoundaryLeakError,
    GridSpec,
    GridState,
    RampProtocol,
    angular_maxima_count,
    circular_variance,
    evolve,
    gaussian_packet,
    imaginary_time_ground,
    rotate_frame,
    sector_seed,
    state_observables,
    strang_step,
    to_lab_frame,
)

SPEC128 = GridSpec(n=128, half_extent=8.0)
SPEC64 = GridSpec(n=64, half_extent=8.0)
FREE = TrapParams(nu=0.0, b=0.0)


def center_of_mass(state):
    xi, eta = state.spec.meshes()
    w = state.density() * state.spec.h ** 2
    return float((xi * w).sum()), float((eta * w).sum())


class TestGridSpec:
    def test_spacing_and_softcore_radius(self):
        spec = GridSpec(n=8, half_extent=4.0)
        assert spec.h == 1.0
        assert spec.coulomb_epsilon == 0.5

    def test_offset_axis_avoids_origin_and_is_symmetric(self):
        ax = SPEC64.axis()
        assert np.abs(ax).min() == pytest.approx(0.5 * SPEC64.h)
        np.testing.assert_allclose(ax + ax[::-1], 0.0, atol=1e-15)

    @pytest.mark.parametrize("n", [0, 2, 5, 48])
    def test_rejects_bad_point_count(self, n):
        with pytest.raises(ValueError, match="power of two"):
            GridSpec(n=n)

    @pytest.mark.parametrize("L", [0.0, -3.0, math.inf])
    def test_rejects_bad_extent(self, L):
        with pytest.raises(ValueError):
            GridSpec(n=64, half_extent=L)

    def test_wavenumbers_match_fft_convention(self):
        spec = GridSpec(n=8, half_extent=4.0)
        np.testing.assert_allclose(
            spec.wavenumbers(), 2 * np.pi * np.fft.fftfreq(8, d=1.0))


class TestGridState:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            GridState(spec=SPEC64, amplitudes=np.zeros((3, 3), complex))

    def test_rejects_unknown_frame(self):
        amp = np.zeros((64, 64), complex)
        with pytest.raises(ValueError, match="frame"):
            GridState(spec=SPEC64, amplitudes=amp, frame="galilean")

    def test_lab_frame_requires_zero_angle(self):
        amp = np.zeros((64, 64), complex)
        with pytest.raises(ValueError, match="theta"):
            GridState(spec=SPEC64, amplitudes=amp, frame="lab", theta=0.1)


class TestPackets:
    def test_gaussian_packet_normalized(self):
        st = gaussian_packet(SPEC128, center=2.0, width=0.5)
        assert st.norm() == pytest.approx(1.0, abs=1e-12)
        assert center_of_mass(st) == pytest.approx((2.0, 0.0), abs=1e-10)

    def test_packet_width_sets_variance(self):
        st = gaussian_packet(SPEC128, center=0.0, width=2.0)
        xi, _ = SPEC128.meshes()
        var = float((xi ** 2 * st.density()).sum() * SPEC128.h ** 2)
        assert var == pytest.approx(1.0 / (4.0 * 2.0), rel=1e-9)

    def test_packet_must_fit_in_box(self):
        with pytest.raises(ValueError, match="edge"):
            gaussian_packet(SPEC128, center=6.0, width=0.5)
        with pytest.raises(ValueError, match="width"):
            gaussian_packet(SPEC128, center=0.0, width=0.0)

    @pytest.mark.parametrize("m", [0, 1, -2, 3])
    def test_sector_seed_carries_its_angular_momentum(self, m):
        st = sector_seed(SPEC128, m)
        assert st.norm() == pytest.approx(1.0, abs=1e-12)
        assert state_observables(st, FREE)["Lz"] == pytest.approx(m, abs=1e-9)


class TestRampProtocol:
    @pytest.mark.parametrize("kwargs", [
        {"kind": "quench", "nu_final": 1.0},
        {"kind": "step", "nu_final": 1.0, "tau_ramp": 2.0},
        {"kind": "linear", "nu_final": 1.0},
        {"kind": "smooth", "nu_final": 1.0, "tau_ramp": -1.0},
        {"kind": "step", "nu_final": -0.5},
    ])
    def test_rejects_inconsistent_protocols(self, kwargs):
        with pytest.raises(ValueError):
            RampProtocol(**kwargs)

    def test_step_profile(self):
        r = RampProtocol("step", 1.5)
        assert r.nu(-1.0) == 0.0 and r.nu(0.0) == 0.0
        assert r.nu(1e-9) == 1.5

    def test_linear_profile_clamps(self):
        r = RampProtocol("linear", 2.0, tau_ramp=4.0)
        assert r.nu(2.0) == pytest.approx(1.0)
        assert r.nu(4.0) == r.nu(9.0) == 2.0

    def test_smooth_profile_starts_tiny_and_saturates(self):
        r = RampProtocol("smooth", 1.0, tau_ramp=2.0)
        assert 0.0 < r.nu(0.0) < 1e-3
        assert 0.999 < r.nu(2.0) < 1.0
        taus = np.linspace(0.0, 4.0, 200)
        assert np.all(np.diff(r.nu(taus)) > 0)

    @pytest.mark.parametrize("ramp", [
        RampProtocol("step", 1.5),
        RampProtocol("linear", 1.5, tau_ramp=2.0),
        RampProtocol("smooth", 1.5, tau_ramp=2.0),
    ])
    @pytest.mark.parametrize("tau", [0.3, 1.7, 5.0])
    def test_closed_form_integral_matches_quadrature(self, ramp, tau):
        ref, _ = quad(ramp.nu, 0.0, tau, limit=200)
        assert ramp.nu_integral(tau) == pytest.approx(ref, abs=1e-9)


class TestFrameOperations:
    def test_quarter_turn_is_exact(self):
        st = gaussian_packet(SPEC128, center=2.0)
        cx, cy = center_of_mass(rotate_frame(st, math.pi / 2))
        assert (cx, cy) == pytest.approx((0.0, 2.0), abs=1e-12)

    def test_generic_angle_round_trips(self):
        st = gaussian_packet(SPEC128, center=2.0)
        rot = rotate_frame(st, 0.7)
        assert rot.norm() == pytest.approx(1.0, abs=1e-12)
        back = rotate_frame(rot, -0.7)
        assert np.abs(back.amplitudes - st.amplitudes).max() < 1e-12

    def test_to_lab_frame_clears_angle(self):
        st = GridState(spec=SPEC128,
                       amplitudes=gaussian_packet(SPEC128, 2.0).amplitudes,
                       frame="rotating", tau=1.0, theta=0.3)
        lab = to_lab_frame(st)
        assert lab.frame == "lab" and lab.theta == 0.0 and lab.tau == 1.0
        assert lab.norm() == pytest.approx(1.0, abs=1e-8)
        # pattern rotated by -theta
        assert center_of_mass(lab) == pytest.approx(
            (2.0 * math.cos(0.3), -2.0 * math.sin(0.3)), abs=1e-9)

    def test_to_lab_frame_is_idempotent(self):
        lab = to_lab_frame(gaussian_packet(SPEC128, 2.0))
        assert to_lab_frame(lab) is lab


class TestStateObservables:
    def test_displaced_packet_energy_and_center(self):
        # coherent state of the bare trap: E = 1 + xi0^2 / 2
        obs = state_observables(gaussian_packet(SPEC128, 2.0, 0.5), FREE)
        assert obs["energy"] == pytest.approx(3.0, abs=1e-8)
        assert obs["cx"] == pytest.approx(2.0, abs=1e-9)
        assert obs["cy"] == pytest.approx(0.0, abs=1e-12)
        assert obs["Lz"] == pytest.approx(0.0, abs=1e-12)

    def test_gauge_velocity_of_real_packet(self):
        # <p> = 0 but the kinetic velocity is (0, -(nu/2) xi0)
        tp = TrapParams(nu=1.3, b=0.0)
        obs = state_observables(gaussian_packet(SPEC128, 2.0, 0.5), tp)
        assert obs["vx"] == pytest.approx(0.0, abs=1e-12)
        assert obs["vy"] == pytest.approx(-0.5 * 1.3 * 2.0, abs=1e-12)

    def test_frame_angle_rotates_vector_outputs(self):
        tp = TrapParams(nu=1.3, b=0.0)
        amp = gaussian_packet(SPEC128, 2.0, 0.5).amplitudes
        rot = state_observables(GridState(spec=SPEC128, amplitudes=amp), tp)
        seen = state_observables(
            GridState(spec=SPEC128, amplitudes=amp, theta=math.pi / 2), tp)
        assert seen["cx"] == pytest.approx(rot["cy"], abs=1e-12)
        assert seen["cy"] == pytest.approx(-rot["cx"], abs=1e-12)
        assert seen["vx"] == pytest.approx(rot["vy"], abs=1e-12)
        assert seen["vy"] == pytest.approx(-rot["vx"], abs=1e-12)


class TestClassicalMotion:
    def test_zero_field_packet_oscillates_as_cosine(self):
        res = evolve(gaussian_packet(SPEC128, 2.0, 0.5), FREE,
                     1e-3, 2 * math.pi, record_every=100)
        assert np.abs(res.cx - 2.0 * np.cos(res.tau)).max() < 1e-4
        assert np.abs(res.cy).max() < 1e-10
        assert res.worst_norm_drift < 1e-10

    def test_lab_frame_records_follow_classical_orbit(self):
        tp = TrapParams(nu=1.0, b=0.0)
        res = evolve(gaussian_packet(SPEC128, 2.0, 0.5), tp,
                     1e-3, 2.0, record_every=100)
        ref = oracles.classical_trajectory(1.0, 2.0, res.tau)
        for col, j in ((res.cx, 0), (res.cy, 1), (res.vx, 2), (res.vy, 3)):
            assert np.abs(col - ref[:, j]).max() < 1e-5
        # the t = 0 row already carries the gauge drift
        assert res.vy[0] == pytest.approx(-0.5 * tp.nu * 2.0, abs=1e-10)


class TestEvolveBookkeeping:
    def test_span_snaps_to_whole_steps(self):
        res = evolve(gaussian_packet(SPEC128, 2.0), FREE, 0.01, 0.055,
                     record_every=1)
        assert abs(res.tau[-1] - 0.055) <= 0.005 + 1e-12

    def test_record_cadence(self):
        res = evolve(gaussian_packet(SPEC128, 2.0), FREE, 1e-3, 0.5,
                     record_every=100)
        assert len(res.tau) == 6
        cols = res.as_columns()
        assert set(cols) == {"tau", "norm", "energy", "Lz", "vx", "vy",
                             "autocorr", "cx", "cy"}

    def test_observer_columns(self):
        res = evolve(gaussian_packet(SPEC128, 2.0), FREE, 1e-3, 0.1,
                     record_every=50,
                     observers=(("cv", circular_variance),))
        assert "cv" in res.as_columns()
        assert len(res.extra["cv"]) == len(res.tau)
        assert res.extra["cv"][0] == pytest.approx(
            circular_variance(gaussian_packet(SPEC128, 2.0)), abs=1e-12)

    def test_snapshots_snap_to_grid_times(self):
        res = evolve(gaussian_packet(SPEC128, 2.0), TrapParams(nu=1.0, b=0.0),
                     1e-3, 0.5, snapshot_times=(0.2503, 0.4),
                     snapshot_frame="lab")
        assert [s.requested_tau for s in res.snapshots] == [0.2503, 0.4]
        for snap in res.snapshots:
            assert abs(snap.state.tau - snap.requested_tau) <= 5e-4 + 1e-12
            assert snap.state.frame == "lab" and snap.state.theta == 0.0

    def test_autocorr_starts_at_unity(self):
        res = evolve(gaussian_packet(SPEC128, 2.0), FREE, 1e-3, 0.05)
        assert res.autocorr[0] == pytest.approx(1.0, abs=1e-12)

    def test_final_state_carries_frame_angle(self):
        tp = TrapParams(nu=1.0, b=0.0)
        res = evolve(gaussian_packet(SPEC128, 2.0), tp, 1e-3, 0.5)
        assert res.final_state.theta == pytest.approx(0.5 * 1.0 * 0.5)
        assert res.final_lab().frame == "lab"

    def test_rejects_bad_arguments(self):
        st = gaussian_packet(SPEC128, 2.0)
        with pytest.raises(ValueError):
            evolve(st, FREE, -1e-3, 1.0)
        with pytest.raises(ValueError):
            evolve(st, FREE, 1e-3, 0.0)
        with pytest.raises(ValueError):
            evolve(st, FREE, 1e-3, 1.0, snapshot_frame="corotating")

    def test_coarse_step_warns_about_phase_wrap(self):
        with pytest.warns(UserWarning, match="phase wraps"):
            evolve(gaussian_packet(SPEC128, 2.0), FREE, 0.1, 0.3)


class TestGuards:
    def test_edge_guard_trips_when_region_covers_packet(self):
        with pytest.raises(BoundaryLeakError, match="enlarge the box"):
            evolve(gaussian_packet(SPEC128, 0.0), FREE, 1e-3, 0.01,
                   edge_cells=60)

    def test_interaction_flavor_mismatch_radiates(self):
        # a state relaxed under the cell-averaged interaction is not
        # stationary for the soft-core stepper: the defect at the origin
        # cells radiates and eventually hits the edge guard
        spec = GridSpec(n=128, half_extent=8.0)
        tp = TrapParams(nu=0.0, b=1.0)
        _, st = imaginary_time_ground(spec, tp, 0, coulomb="cell")
        with pytest.raises(BoundaryLeakError):
            evolve(st, tp, 2e-3, 3.0)

    def test_matched_flavor_is_stationary(self):
        spec = GridSpec(n=128, half_extent=8.0)
        tp = TrapParams(nu=0.0, b=1.0)
        _, st = imaginary_time_ground(spec, tp, 0, coulomb="softcore")
        res = evolve(st, tp, 2e-3, 1.0)
        assert res.autocorr.min() > 1.0 - 1e-6
        assert np.ptp(res.energy) < 1e-6

    def test_strang_step_validation(self):
        st = gaussian_packet(SPEC128, 2.0)
        with pytest.raises(ValueError, match="mode"):
            strang_step(st, FREE, 1e-3, mode="complex")
        with pytest.raises(ValueError, match="dtau"):
            strang_step(st, FREE, 0.0)


class TestImaginaryTime:
    def test_bare_trap_ground_energy(self):
        energy, state = imaginary_time_ground(SPEC64, FREE, 0)
        assert energy == pytest.approx(1.0, abs=1e-6)
        assert state.norm() == pytest.approx(1.0, abs=1e-9)
        assert state.frame == "rotating" and state.tau == 0.0

    def test_excited_sector_stays_seeded(self):
        energy, state = imaginary_time_ground(SPEC64, FREE, 1)
        assert energy == pytest.approx(2.0, abs=1e-6)
        assert state_observables(state, FREE)["Lz"] == pytest.approx(
            1.0, abs=1e-6)

    def test_field_shifts_sector_energy(self):
        energy, _ = imaginary_time_ground(SPEC64, TrapParams(nu=1.0, b=0.0), 0)
        assert energy == pytest.approx(math.sqrt(1.25), abs=1e-6)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            imaginary_time_ground(SPEC64, FREE, 0, dtau=0.0)
        with pytest.raises(ValueError):
            imaginary_time_ground(SPEC64, FREE, 0, tol=-1e-9)
        with pytest.raises(ValueError, match="flavor"):
            imaginary_time_ground(SPEC64, FREE, 0, coulomb="hardcore")


class TestAngularDiagnostics:
    def test_symmetric_state_has_full_circular_variance(self):
        assert circular_variance(sector_seed(SPEC128, 2)) > 0.999

    def test_localized_packet_has_small_circular_variance(self):
        assert circular_variance(gaussian_packet(SPEC128, 3.0)) < 0.1

    def test_maxima_count_resolves_separated_lobes(self):
        h2 = SPEC128.h ** 2
        psi = (gaussian_packet(SPEC128, 3.0).amplitudes
               + gaussian_packet(SPEC128, -3.0).amplitudes)
        psi /= math.sqrt(h2 * np.vdot(psi, psi).real)
        two = GridState(spec=SPEC128, amplitudes=psi)
        assert angular_maxima_count(two) == 2
        assert angular_maxima_count(gaussian_packet(SPEC128, 3.0)) == 1

    def test_maxima_count_is_rotation_invariant(self):
        h2 = SPEC128.h ** 2
        psi = (gaussian_packet(SPEC128, 3.0).amplitudes
               + gaussian_packet(SPEC128, -3.0).amplitudes)
        psi /= math.sqrt(h2 * np.vdot(psi, psi).real)
        two = GridState(spec=SPEC128, amplitudes=psi)
        assert angular_maxima_count(rotate_frame(two, 0.4)) == 2
