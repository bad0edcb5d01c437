"""Fisher information and delay/Doppler estimation floors for the OFDM echo.

Two flavors of the bounds are exposed: the information-theoretic form
(invariant to post-processing) and the processor-achievable form that
inherits the velocity-dependent efficiency of the 2D-FFT chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .link import detection_snr
from .params import C_LIGHT, SystemParams
from .processing import ici_efficiency


@dataclass(frozen=True)
class EchoParameters:
    """Delay/Doppler/SNR triple describing a single received echo."""

    tau: float          # round-trip delay 2R/c, s
    f_d: float          # two-way Doppler 2 v f_c / c, Hz
    gamma_sc: float     # per-subcarrier SNR, linear

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("delay must be non-negative")
        if self.gamma_sc <= 0:
            raise ValueError("per-subcarrier SNR must be positive")

    @classmethod
    def from_geometry(cls, r: float, v_rel: float, sigma: float,
                      params: SystemParams) -> "EchoParameters":
        """Echo parameters for a target at range r moving at v_rel.

        gamma_sc is referenced to the full noise bandwidth so that the
        identity (output SNR) = N*M*gamma_sc holds against the link
        budget chain; the N*M coherent gain then carries all of the
        processing credit.
        """
        from .link import echo_power_ratio
        gamma_sc = (echo_power_ratio(r, sigma, params) * params.tx_power
                    * params.symbol_power / params.noise_power)
        return cls(tau=2.0 * r / C_LIGHT,
                   f_d=2.0 * v_rel * params.f_c / C_LIGHT,
                   gamma_sc=gamma_sc)


def rms_bandwidth_sq(params: SystemParams) -> float:
    """Squared RMS bandwidth of the centered subcarrier comb, Hz^2."""
    n = params.n_subcarriers
    return (n * n - 1.0) / 12.0 * params.delta_f**2


def rms_duration_sq(params: SystemParams, m: int | None = None) -> float:
    """Squared RMS observation time of the centered symbol train, s^2."""
    m = params.symbols_per_cpi if m is None else m
    return (m * m - 1.0) / 12.0 * params.t_sym**2


def fim(params: SystemParams, echo: EchoParameters) -> np.ndarray:
    """2x2 Fisher information matrix for (delay, Doppler) from one CPI.

    The delay-Doppler steering vector separates over the centered
    subcarrier and symbol indices, so the cross-information vanishes and
    the matrix is diagonal.
    """
    n = params.n_subcarriers
    m = params.symbols_per_cpi
    scale = 2.0 * n * m * echo.gamma_sc * 4.0 * math.pi**2
    return np.diag([scale * rms_bandwidth_sq(params), scale * rms_duration_sq(params)])


@dataclass(frozen=True)
class CrbResult:
    """Range/velocity estimation floors for one echo geometry."""

    crb_range: float        # m^2
    crb_velocity: float     # (m/s)^2
    beta_rms_sq: float      # Hz^2
    gamma_rms_sq: float     # s^2
    form: str               # "information" or "processor"
    # relative error of the wideband approximations B^2/12 and T_cpi^2/12
    bandwidth_approx_err: float = 0.0
    duration_approx_err: float = 0.0

    def __post_init__(self):
        if self.form not in ("information", "processor"):
            raise ValueError(f"unknown CRB form {self.form!r}")
        if min(self.crb_range, self.crb_velocity, self.beta_rms_sq, self.gamma_rms_sq) <= 0:
            raise ValueError("CRB components must be positive")

    @property
    def range_rmse(self) -> float:
        return math.sqrt(self.crb_range)

    @property
    def velocity_rmse(self) -> float:
        return math.sqrt(self.crb_velocity)


def crb(
    r: float,
    sigma: float,
    v_rel: float,
    params: SystemParams,
    form: str = "processor",
    k: int = 1,
    include_k_gain: bool = False,
) -> CrbResult:
    """Range and velocity estimation floors at one target geometry.

    The processor form divides the output SNR by the leakage efficiency
    of the 2D-FFT chain; the information form keeps the full echo energy
    and is tighter by exactly that factor.  Multi-CPI gain (K^kappa on
    the SNR) is off by default since the bounds are stated per CPI;
    enable `include_k_gain` to fold it in.
    """
    k_eff = k if include_k_gain else 1
    gamma_proc = detection_snr(r, sigma, v_rel, k_eff, params)
    if form == "processor":
        gamma = gamma_proc
    elif form == "information":
        gamma = gamma_proc / ici_efficiency(v_rel, params.delta_f, params)
    else:
        raise ValueError(f"unknown CRB form {form!r}")

    beta_sq = rms_bandwidth_sq(params)
    dur_sq = rms_duration_sq(params)
    crb_r = C_LIGHT**2 / (32.0 * math.pi**2 * gamma * beta_sq)
    crb_v = C_LIGHT**2 / (32.0 * math.pi**2 * params.f_c**2 * gamma * dur_sq)

    b_approx = params.bandwidth**2 / 12.0
    t_approx = params.t_cpi**2 / 12.0
    return CrbResult(
        crb_range=crb_r,
        crb_velocity=crb_v,
        beta_rms_sq=beta_sq,
        gamma_rms_sq=dur_sq,
        form=form,
        bandwidth_approx_err=abs(b_approx - beta_sq) / beta_sq,
        duration_approx_err=abs(t_approx - dur_sq) / dur_sq,
    )
