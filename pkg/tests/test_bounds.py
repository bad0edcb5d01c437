import math

import numpy as np
import pytest
from pytest import approx

from halodar import bounds, link
from halodar.params import C_LIGHT, db


class TestFim:
    def test_diagonal(self, params):
        echo = bounds.EchoParameters(tau=1e-3, f_d=100.0, gamma_sc=1e-3)
        j = bounds.fim(params, echo)
        assert j[0, 1] == 0.0
        assert j[1, 0] == 0.0
        assert j[0, 0] > 0 and j[1, 1] > 0

    def test_linear_in_snr(self, params):
        echo1 = bounds.EchoParameters(tau=1e-3, f_d=100.0, gamma_sc=1e-3)
        echo2 = bounds.EchoParameters(tau=1e-3, f_d=100.0, gamma_sc=2e-3)
        assert np.allclose(bounds.fim(params, echo2), 2 * bounds.fim(params, echo1))

    def test_rms_bandwidth_identity(self, params):
        n = params.n_subcarriers
        beta_sq = bounds.rms_bandwidth_sq(params)
        assert beta_sq == approx((n * n - 1) / (n * n) * params.bandwidth**2 / 12, rel=1e-12)
        wide = params.with_overrides(n_subcarriers=1 << 16)
        ratio = bounds.rms_bandwidth_sq(wide) / (wide.bandwidth**2 / 12)
        assert ratio == approx(1.0, abs=1e-9)


class TestCrb:
    def test_fim_inverse_matches_closed_form(self, params):
        r, v, sigma = 100e3, 10.0, math.pi / 4
        echo = bounds.EchoParameters.from_geometry(r, v, sigma, params)
        j = bounds.fim(params, echo)
        crb_tau = 1.0 / j[0, 0]
        crb_fd = 1.0 / j[1, 1]
        result = bounds.crb(r, sigma, v, params, form="information")
        assert (C_LIGHT / 2) ** 2 * crb_tau == approx(result.crb_range, rel=1e-12)
        assert (C_LIGHT / (2 * params.f_c)) ** 2 * crb_fd == approx(result.crb_velocity, rel=1e-12)

    def test_range_floor_below_one_meter(self, params):
        result = bounds.crb(100e3, math.pi / 4, 10.0, params, form="processor",
                            k=16, include_k_gain=True)
        assert result.range_rmse < 1.0

    def test_processor_information_gap(self, params):
        proc = bounds.crb(100e3, math.pi / 4, 10.0, params, form="processor")
        info = bounds.crb(100e3, math.pi / 4, 10.0, params, form="information")
        gap_db = db(proc.crb_range / info.crb_range)
        assert gap_db == approx(2.5, abs=0.1)
        from halodar.processing import ici_efficiency
        eff = ici_efficiency(10.0, params.delta_f, params)
        assert proc.crb_range / info.crb_range == approx(1.0 / eff, rel=1e-12)

    def test_r4_scaling(self, params):
        near = bounds.crb(50e3, 1.0, 10.0, params)
        far = bounds.crb(50e3 * math.sqrt(2), 1.0, 10.0, params)
        # quartering the SNR (sqrt(2) range growth) doubles the RMSE
        assert far.range_rmse / near.range_rmse == approx(math.sqrt(2) ** 2, rel=1e-9)

    def test_k_gain_non_increasing(self, params):
        values = [bounds.crb(100e3, 1.0, 10.0, params, k=k, include_k_gain=True).crb_range
                  for k in (1, 2, 4, 8, 16)]
        assert all(b < a for a, b in zip(values, values[1:]))
        per_cpi = bounds.crb(100e3, 1.0, 10.0, params, k=16, include_k_gain=False)
        assert per_cpi.crb_range == approx(values[0], rel=1e-12)

    def test_separability(self, params):
        # velocity floor indifferent to bandwidth at fixed CPI duration
        echo = bounds.EchoParameters(tau=1e-3, f_d=100.0, gamma_sc=1e-3)
        wide = params.with_overrides(bandwidth=2 * params.bandwidth,
                                     symbols_per_cpi=2 * params.symbols_per_cpi)
        assert wide.t_cpi == approx(params.t_cpi)
        j_a = bounds.fim(params, echo)
        j_b = bounds.fim(wide, echo)
        # same total echo energy: normalize out the N*M cell-count factor
        norm_a = j_a[1, 1] / (params.n_subcarriers * params.symbols_per_cpi)
        norm_b = j_b[1, 1] / (wide.n_subcarriers * wide.symbols_per_cpi)
        assert norm_b == approx(norm_a, rel=1e-3)
        # range floor indifferent to CPI duration at fixed bandwidth
        long_cpi = params.with_overrides(symbols_per_cpi=4 * params.symbols_per_cpi)
        assert bounds.rms_bandwidth_sq(long_cpi) == bounds.rms_bandwidth_sq(params)

    def test_approximation_error_fields(self, params):
        result = bounds.crb(100e3, 1.0, 10.0, params)
        assert 0 < result.bandwidth_approx_err < 1e-5
        assert 0 < result.duration_approx_err < 1e-3

    def test_form_validation(self, params):
        with pytest.raises(ValueError):
            bounds.crb(100e3, 1.0, 10.0, params, form="mystery")

    def test_echo_parameters_from_geometry(self, params):
        echo = bounds.EchoParameters.from_geometry(100e3, 10.0, 1.0, params)
        assert echo.tau == approx(2 * 100e3 / C_LIGHT)
        assert echo.f_d == approx(2 * 10.0 * params.f_c / C_LIGHT)
        # output SNR identity: N*M*gamma_sc equals the ICI-free chain SNR
        snr = link.detection_snr(100e3, 1.0, 0.0, 1, params) / params.eta_impl
        nm = params.n_subcarriers * params.symbols_per_cpi
        assert nm * echo.gamma_sc == approx(snr, rel=1e-12)
