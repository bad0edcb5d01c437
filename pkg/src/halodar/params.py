"""Radar/OFDM system constants and the sensing policy defaults.

All values are stored in linear SI units; dB conversions happen only at
I/O boundaries.  Derived quantities (wavelength, subcarrier spacing,
antenna gain, EIRP) are computed from the stored primaries rather than
kept as rounded copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

C_LIGHT = 299_792_458.0          # m/s, exact
K_BOLTZMANN = 1.380_649e-23      # J/K, exact


def db(x: float) -> float:
    """Linear power ratio to decibels."""
    return 10.0 * math.log10(x)


def from_db(x_db: float) -> float:
    """Decibels to linear power ratio."""
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SystemParams:
    """Ka-band relay transceiver constants plus sensing policy settings.

    The defaults describe a 27 GHz / 100 MHz OFDM relay with a 1.25 m
    dish and a 35 W amplifier, observed through a 1024-subcarrier,
    64-symbol coherent processing interval.
    """

    f_c: float = 27e9                 # carrier frequency, Hz
    bandwidth: float = 100e6          # occupied bandwidth, Hz
    n_subcarriers: int = 1024         # fast-time FFT size
    symbols_per_cpi: int = 64         # slow-time symbols per CPI
    cp_ratio: float = 1.0 / 8.0       # cyclic prefix fraction
    antenna_diameter: float = 1.25    # m
    aperture_efficiency: float = 0.55
    tx_power: float = 35.0            # W
    t_sys: float = 200.0              # system noise temperature, K
    symbol_power: float = 1.0         # constant-modulus constellation

    # Processing-loss and integration constants
    eta_impl: float = 0.56            # windowing + implementation loss
    eta_kt: float = 0.8               # keystone interpolation loss
    kappa: float = 0.85               # non-coherent integration exponent

    # Detection policy
    p_d: float = 0.9
    p_fa: float = 1e-6

    # Beam geometry
    theta_bw: float = math.radians(0.62)   # half-power beamwidth, rad

    def __post_init__(self):
        if not 0 < self.p_fa < self.p_d < 1:
            raise ValueError(f"need 0 < P_fa < P_d < 1, got ({self.p_d}, {self.p_fa})")
        if self.bandwidth <= 0 or self.f_c <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.n_subcarriers < 1 or self.symbols_per_cpi < 1:
            raise ValueError("subcarrier and symbol counts must be >= 1")

    # -- derived quantities -------------------------------------------------

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.f_c

    @property
    def delta_f(self) -> float:
        """Subcarrier spacing B/N, Hz."""
        return self.bandwidth / self.n_subcarriers

    @property
    def t_sym(self) -> float:
        """OFDM symbol duration including cyclic prefix, s."""
        return (1.0 + self.cp_ratio) / self.delta_f

    @property
    def t_cpi(self) -> float:
        return self.symbols_per_cpi * self.t_sym

    @property
    def antenna_gain(self) -> float:
        """Boresight gain of the dish, linear (same antenna for TX and RX)."""
        return self.aperture_efficiency * (math.pi * self.antenna_diameter / self.wavelength) ** 2

    @property
    def eirp(self) -> float:
        """Effective isotropic radiated power, W."""
        return self.tx_power * self.antenna_gain

    @property
    def noise_power(self) -> float:
        """k_B * T_sys * B, W (full-band noise referenced after 2D processing)."""
        return K_BOLTZMANN * self.t_sys * self.bandwidth

    def with_overrides(self, **kwargs) -> "SystemParams":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Target:
    """Point debris target in the optical scattering regime (Swerling I)."""

    diameter: float       # m
    rcs: float            # mean RCS, m^2

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError("target diameter must be positive")
        if self.rcs <= 0:
            raise ValueError("target RCS must be positive")

    @classmethod
    def from_diameter(cls, diameter: float, params: SystemParams) -> "Target":
        from .link import rcs_from_diameter
        return cls(diameter=diameter, rcs=rcs_from_diameter(diameter, params))
