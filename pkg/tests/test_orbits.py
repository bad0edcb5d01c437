import math

import numpy as np
import pytest
from pytest import approx

from halodar import orbits


EM = orbits.Cr3bpSystem.earth_moon()


class TestDynamics:
    def test_equilibrium_at_collinear_points(self):
        for index in (1, 2, 3):
            point = orbits.libration_point(EM, index)
            state = np.concatenate([point, np.zeros(3)])
            deriv = orbits.cr3bp_derivative(state, EM)
            assert np.abs(deriv).max() < 1e-12

    def test_coriolis_terms_present(self):
        state = np.array([0.5, 0.1, 0.0, 0.0, 0.2, 0.0])
        deriv = orbits.cr3bp_derivative(state, EM)
        no_spin = orbits.cr3bp_derivative(np.array([0.5, 0.1, 0.0, 0.0, 0.0, 0.0]), EM)
        assert deriv[3] - no_spin[3] == approx(2 * 0.2, rel=1e-12)

    def test_singularity_error(self):
        state = np.concatenate([EM.moon_position, np.zeros(3)])
        with pytest.raises(orbits.PropagationError):
            orbits.cr3bp_derivative(state, EM)

    def test_rotating_state_round_trip(self):
        state = orbits.RotatingState(position=[1.02, 0.0, -0.18],
                                     velocity=[0.0, -0.1, 0.0])
        assert np.array_equal(orbits.RotatingState.from_vector(state.vector).vector,
                              state.vector)
        deriv = orbits.cr3bp_derivative(state, EM)
        assert np.allclose(deriv[:3], state.velocity)
        with pytest.raises(ValueError):
            orbits.RotatingState(position=[np.inf, 0, 0], velocity=[0, 0, 0])
        with pytest.raises(ValueError):
            orbits.RotatingState(position=[1, 0], velocity=[0, 0, 0])

    def test_mirror_symmetry(self):
        # x-z plane symmetry: flipping (y, vx, vz) reverses the flow
        y0 = np.array([1.05, 0.02, 0.05, 0.01, 0.2, -0.03])
        tau = 0.7

        def flip(y):
            out = y.copy()
            out[[1, 3, 5]] *= -1.0
            return out

        fwd = orbits.integrate(y0, (0.0, tau), EM, tol=1e-12)
        back = orbits.integrate(flip(fwd.y[:, -1]), (0.0, tau), EM, tol=1e-12)
        assert np.abs(back.y[:, -1] - flip(y0)).max() < 1e-9

    def test_jacobi_constant_conserved(self, orbit):
        y0 = orbit.states[1:, 0]
        c0 = orbits.jacobi_constant(y0, EM)
        sol = orbits.integrate(y0, (0.0, orbit.period_canonical), EM, tol=1e-12,
                               t_eval=np.linspace(0, orbit.period_canonical, 500))
        drift = max(abs(orbits.jacobi_constant(sol.y[:, i], EM) - c0)
                    for i in range(sol.y.shape[1]))
        assert drift / abs(c0) < 1e-9


class TestIntegrate:
    def test_zero_span_identity(self):
        y0 = np.array([1.05, 0.0, 0.1, 0.0, 0.2, 0.0])
        sol = orbits.integrate(y0, (0.0, 0.0), EM, tol=1e-10)
        assert np.array_equal(sol.y[:, -1], y0)

    def test_tolerance_bounds(self):
        y0 = np.array([1.05, 0.0, 0.1, 0.0, 0.2, 0.0])
        with pytest.raises(ValueError):
            orbits.integrate(y0, (0.0, 1.0), EM, tol=1e-3)

    def test_periodicity_residual(self, orbit):
        y0 = orbit.states[1:, 0]
        sol = orbits.integrate(y0, (0.0, orbit.period_canonical), EM, tol=1e-12)
        assert np.abs(sol.y[:, -1] - y0).max() < 1e-6

    def test_tolerance_sweep_residual_non_increasing(self, orbit):
        y0 = orbit.states[1:, 0]
        residuals = []
        for tol in (1e-6, 1e-9, 1e-12):
            sol = orbits.integrate(y0, (0.0, orbit.period_canonical), EM, tol=tol)
            residuals.append(np.abs(sol.y[:, -1] - y0).max())
        assert residuals[1] <= residuals[0]
        assert residuals[2] <= residuals[1]


class TestCorrectedOrbit:
    def test_radii_and_period(self, orbit):
        assert orbit.perilune_radius_km == approx(3371.0, rel=0.02)
        assert orbit.apolune_radius_km == approx(71476.0, rel=0.02)
        assert orbit.period / 86400.0 == approx(6.62, rel=0.02)

    def test_velocity_endpoints(self, orbit):
        assert orbit.v_gw(0.0) == approx(72.0, rel=0.10)
        assert orbit.v_gw(math.pi) == approx(1673.0, rel=0.10)

    def test_velocity_extrema_at_apsides(self, orbit):
        v = orbit.v_gw_mps
        assert int(np.argmin(v)) == 0
        assert int(np.argmax(v)) == 180

    def test_phase_map_bijective(self, orbit):
        t = np.linspace(0.0, orbit.period, 720, endpoint=False)
        theta = orbit.phase_of(t)
        assert theta[0] == approx(0.0, abs=1e-9)
        assert np.all(np.diff(theta) > 0)
        assert theta[-1] < 2 * math.pi
        assert orbit.phase_of(orbit.time_of_phase(1.234)) == approx(1.234, abs=1e-6)

    def test_relay_distance_model(self, orbit):
        assert orbit.d_earth(0.0) == approx(EM.length_unit + orbit.apolune_radius_km, rel=1e-6)
        assert orbit.d_earth(math.pi) == approx(EM.length_unit - orbit.perilune_radius_km, rel=1e-6)

    def test_correct_nrho_from_perturbed_guess(self, orbit):
        guess = orbit.states[1:, 0].copy()
        guess[2] *= 1.001          # small out-of-plane perturbation
        guess[[1, 3, 5]] = 0.0
        redone = orbits.correct_nrho(guess, EM, tol=1e-11, n_samples=512)
        assert redone.perilune_radius_km == approx(orbit.perilune_radius_km, rel=0.05)

    def test_keplerian_stand_in_departs(self, orbit):
        v_kep = orbits.keplerian_speed_profile(orbit)
        ratio = np.maximum(v_kep / orbit.v_gw_mps, orbit.v_gw_mps / v_kep)
        assert ratio.max() > 2.0

    def test_csv_round_trip(self, orbit, tmp_path):
        from halodar.cli import load_orbit_profile
        path = tmp_path / "orbit.csv"
        orbit.to_csv(path)
        loaded = load_orbit_profile(path)
        assert loaded.period == approx(orbit.period, rel=1e-10)
        assert np.allclose(loaded.v_gw_mps, orbit.v_gw_mps, rtol=1e-9)
        assert loaded.content_hash == orbit.content_hash


class TestDwellWeight:
    def test_normalization(self, orbit):
        w = orbits.dwell_weight(orbit)
        d_theta = 2 * math.pi / w.size
        assert w.sum() * d_theta == approx(1.0, abs=1e-9)

    def test_apolune_to_perilune_ratio(self, orbit):
        w = orbits.dwell_weight(orbit)
        assert w[0] / w[180] > 10.0

    def test_r_squared_proxy_correlation(self, orbit):
        w = orbits.dwell_weight(orbit)
        proxy = orbits.dwell_weight_r2_proxy(orbit)
        corr = np.corrcoef(w, proxy)[0, 1]
        assert corr > 0.9


class TestCampaign:
    def test_velocity_bands(self, campaign, campaign_events):
        v_rel = np.array([e.v_rel_mps for e in campaign.encounters])
        dv = np.array([campaign_events[e.event_index].delta_v for e in campaign.encounters])
        assert v_rel[dv == 1.0].max() == approx(49.5, rel=0.20)
        assert v_rel[dv == 5.0].max() == approx(86.7, rel=0.20)

    def test_apolune_median_tracks_deltav(self, campaign, campaign_events):
        v_rel = np.array([e.v_rel_mps for e in campaign.encounters])
        phase = np.array([e.phase for e in campaign.encounters])
        dv = np.array([campaign_events[e.event_index].delta_v for e in campaign.encounters])
        near_apolune = (phase < math.radians(30)) | (phase > math.radians(330))
        med = np.median(v_rel[near_apolune & (dv == 1.0)])
        assert 0.5 <= med <= 2.0

    def test_velocity_direction_disposal(self, campaign, campaign_events):
        directions = np.array([campaign_events[e.event_index].direction
                               for e in campaign.encounters])
        dv = np.array([campaign_events[e.event_index].delta_v for e in campaign.encounters])
        assert ((directions == "V") & (dv == 5.0)).sum() == 0

    def test_percentiles_ordered(self, campaign):
        pct = campaign.v_rel_percentiles
        for lo, hi in ((5, 25), (25, 50), (50, 75), (75, 95)):
            good = np.isfinite(pct[lo]) & np.isfinite(pct[hi])
            assert np.all(pct[lo][good] <= pct[hi][good] + 1e-12)
        good = np.isfinite(pct[95]) & np.isfinite(pct["max"])
        assert np.all(pct[95][good] <= pct["max"][good] + 1e-12)

    def test_density_normalized(self, campaign):
        assert campaign.density.max() == approx(1.0)
        assert np.all(campaign.density >= 0)

    def test_profile_dwell_weight_normalized(self, campaign):
        d_theta = 2 * math.pi / campaign.theta_grid.size
        assert campaign.dwell_weight.sum() * d_theta == approx(1.0, abs=1e-9)

    def test_profile_csv_round_trip(self, campaign, tmp_path):
        from halodar.cli import load_encounter_profile
        path = tmp_path / "campaign.csv"
        campaign.to_csv(path)
        loaded = load_encounter_profile(path)
        assert np.allclose(loaded.density, campaign.density, rtol=1e-9)
        p95 = campaign.v_rel_percentiles[95]
        good = np.isfinite(p95)
        assert np.allclose(loaded.v_rel_percentiles[95][good], p95[good], rtol=1e-9)

    def test_determinism_and_parallel_equivalence(self, orbit):
        events = orbits.default_separation_events(deltavs=(1.0,), n_phases=3)
        a = orbits.run_separation_campaign(orbit, events, horizon_days=30,
                                           tol=1e-9)
        b = orbits.run_separation_campaign(orbit, events, horizon_days=30,
                                           tol=1e-9)
        c = orbits.run_separation_campaign(orbit, events, horizon_days=30,
                                           tol=1e-9, workers=2)
        for other in (b, c):
            assert len(other.encounters) == len(a.encounters)
            for ea, eb in zip(a.encounters, other.encounters):
                assert ea == eb
            assert np.array_equal(a.density, other.density)

    def test_horizon_validation(self, orbit):
        with pytest.raises(ValueError):
            orbits.run_separation_campaign(orbit, [], horizon_days=10.0)

    def test_event_validation(self):
        with pytest.raises(ValueError):
            orbits.SeparationEvent(separation_phase=0.0, direction="Q", delta_v=1.0)
        with pytest.raises(ValueError):
            orbits.SeparationEvent(separation_phase=0.0, direction="V", delta_v=-1.0)


class TestCorrectionErrors:
    def test_divergence_carries_residual(self):
        # a guess far off the halo family: the corrector must fail loudly
        bad = np.array([1.3, 0.0, -0.4, 0.0, 0.9, 0.0])
        with pytest.raises(orbits.CorrectionError) as exc:
            orbits.correct_halo(bad, EM, fixed="x", max_iter=4)
        assert exc.value.residual is None or exc.value.residual > 0

    def test_guess_must_be_on_symmetry_plane(self):
        off_plane = np.array([1.02, 0.05, -0.18, 0.0, -0.1, 0.0])
        with pytest.raises(ValueError):
            orbits.correct_halo(off_plane, EM)
