"""Monostatic radar link budget and the space-vs-ground environment ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .params import SystemParams, db
from .processing import ici_efficiency

MIN_OPTICAL_SIZE_PARAM = 10.0   # pi*d/lambda above which sigma = pi d^2/4 holds


class OpticalRegimeError(ValueError):
    """Target too small for the optical-regime RCS model at this wavelength."""


def rcs_from_diameter(diameter: float, params: SystemParams) -> float:
    """Optical-regime RCS of a sphere-equivalent target, m^2.

    Raises OpticalRegimeError when pi*d/lambda < 10, where the flat
    projected-area model is no longer valid.
    """
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    size_param = math.pi * diameter / params.wavelength
    if size_param < MIN_OPTICAL_SIZE_PARAM:
        raise OpticalRegimeError(
            f"pi*d/lambda = {size_param:.2f} < {MIN_OPTICAL_SIZE_PARAM:.0f}: "
            f"optical RCS model invalid for d = {diameter} m"
        )
    return math.pi * diameter**2 / 4.0


def echo_power_ratio(r: float, sigma: float, params: SystemParams) -> float:
    """Received-to-transmitted power ratio P_r/P_t for a monostatic echo.

    Follows the R^-4 radar equation with identical TX/RX antenna gains.
    """
    if r <= 0:
        raise ValueError("range must be positive")
    g = params.antenna_gain
    return g * g * params.wavelength**2 * sigma / ((4.0 * math.pi) ** 3 * r**4)


def detection_snr(
    r: float,
    sigma: float,
    v_rel: float,
    k: int,
    params: SystemParams,
    n_sc: int | None = None,
    m: int | None = None,
) -> float:
    """Total sensing SNR after 2D-FFT processing and K-CPI integration, linear.

    Uses the standard (Mode A) processing chain: coherent gain N*M times
    the velocity-dependent efficiency, with K^kappa non-coherent gain.
    `n_sc` and `m` override the subcarrier/symbol counts for alternative
    CPI configurations.

    Args:
        r: target range, m.
        sigma: target RCS, m^2.
        v_rel: radial relative velocity, m/s.
        k: number of non-coherently integrated CPIs (>= 1).
    """
    if r <= 0:
        raise ValueError("range must be positive")
    if k < 1:
        raise ValueError("CPI count must be >= 1")
    if v_rel < 0:
        raise ValueError("v_rel must be non-negative")
    n_sc = params.n_subcarriers if n_sc is None else n_sc
    m = params.symbols_per_cpi if m is None else m
    eff = ici_efficiency(v_rel, params.delta_f, params)
    num = params.eirp * params.antenna_gain * params.wavelength**2 * sigma * n_sc * m * eff
    num *= float(k) ** params.kappa
    return num / ((4.0 * math.pi) ** 3 * r**4 * params.noise_power)


@dataclass(frozen=True)
class AdvantageLedger:
    """Decibel ledger of the environmental edge over a ground Ka-band radar.

    Components are two-way where propagation is involved.  The thermal
    term is the noise-temperature ratio between a 290 K terrestrial
    receiver and the cold space-borne front end.
    """

    atmospheric_db: float = 6.0
    ionospheric_db: float = 3.0
    clutter_db: float = 25.0
    thermal_db: float = field(default_factory=lambda: db(290.0 / 200.0))

    @property
    def total_db(self) -> float:
        return self.atmospheric_db + self.ionospheric_db + self.clutter_db + self.thermal_db

    @property
    def range_factor(self) -> float:
        """Detection-range multiplier implied by the ledger under R^-4 loss."""
        return 10.0 ** (self.total_db / 40.0)


def advantage_ledger(params: SystemParams | None = None) -> AdvantageLedger:
    """Environment ledger with the thermal term tied to the system temperature."""
    if params is None:
        return AdvantageLedger()
    return AdvantageLedger(thermal_db=db(290.0 / params.t_sys))


def ground_reference_snr(
    r: float,
    sigma: float,
    v_rel: float,
    k: int,
    params: SystemParams,
    ledger: AdvantageLedger | None = None,
) -> float:
    """Detection SNR of an equivalent ground-based Ka-band radar, linear.

    The space-borne SNR is penalized by the full environment ledger.
    """
    ledger = ledger if ledger is not None else advantage_ledger(params)
    return detection_snr(r, sigma, v_rel, k, params) / 10.0 ** (ledger.total_db / 10.0)
