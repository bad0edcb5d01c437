"""Velocity-adaptive OFDM radar processing models.

Covers the Doppler-induced subcarrier leakage penalty, the reduced-
subcarrier keystone mode that trades range resolution against that
penalty, the coherent-interval configuration bounded by range
migration, and slow-time Doppler ambiguity bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import C_LIGHT, SystemParams

#: Design ceiling on the Doppler-to-subcarrier-spacing ratio in Mode B.
MODE_B_MAX_DOPPLER_FRACTION = 0.2


def two_way_doppler(v_rel: float, f_c: float) -> float:
    """Two-way Doppler shift 2*v*f_c/c, Hz."""
    return 2.0 * v_rel * f_c / C_LIGHT


def _sinc(x: float) -> float:
    # normalized sinc, sin(pi x)/(pi x)
    if x == 0.0:
        return 1.0
    px = math.pi * x
    return math.sin(px) / px


def ici_efficiency(v_rel: float, delta_f: float, params: SystemParams) -> float:
    """Coherent processing efficiency relative to the ideal N*M gain, linear.

    The Doppler-shifted echo leaks energy out of its subcarrier bin,
    attenuating the useful output by sinc^2 of the Doppler-to-spacing
    ratio; the implementation loss is folded in as a constant factor.
    Returns a value in (0, eta_impl].
    """
    if delta_f <= 0:
        raise ValueError("subcarrier spacing must be positive")
    ratio = two_way_doppler(abs(v_rel), params.f_c) / delta_f
    return _sinc(ratio) ** 2 * params.eta_impl


def mode_b_subcarriers(v_rel: float, params: SystemParams) -> int:
    """Largest subcarrier count keeping the Doppler fraction below 0.2.

    Widening the subcarrier spacing (fewer subcarriers across the same
    bandwidth) shrinks f_d/Delta_f at the cost of range-compression gain.
    Clamped to [1, N]; at rest the full grid is kept.
    """
    if v_rel < 0:
        raise ValueError("v_rel must be non-negative")
    f_d = two_way_doppler(v_rel, params.f_c)
    if f_d == 0.0:
        return params.n_subcarriers
    n = math.floor(MODE_B_MAX_DOPPLER_FRACTION * params.bandwidth / f_d)
    return max(1, min(n, params.n_subcarriers))


@dataclass(frozen=True)
class ProcessingMode:
    """Resolved processing configuration for one relative velocity."""

    mode: str                 # "A" (full-grid 2D-FFT) or "B" (keystone, reduced grid)
    n_sc: int                 # active subcarrier count
    gain: float               # linear processing gain
    delta_f_eff: float        # effective subcarrier spacing, Hz

    def __post_init__(self):
        if self.mode not in ("A", "B"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 1 <= self.n_sc:
            raise ValueError("n_sc must be >= 1")


def mode_gains(v_rel: float, params: SystemParams, m: int | None = None):
    """Processing gains of both modes and the preferred one.

    Mode A runs the plain 2D-FFT over the full subcarrier grid and eats
    the whole leakage penalty.  Mode B applies the keystone range-walk
    correction and drops to the leakage-tolerant subcarrier count, paying
    interpolation loss and reduced fast-time gain.  Ties go to Mode A
    (the simpler processor).

    Returns:
        (g_a, g_b, best) where best is a ProcessingMode for max(g_a, g_b).
    """
    m = params.symbols_per_cpi if m is None else m
    g_a = params.n_subcarriers * m * ici_efficiency(v_rel, params.delta_f, params)

    n_b = mode_b_subcarriers(v_rel, params)
    delta_f_b = params.bandwidth / n_b
    eff_b = ici_efficiency(v_rel, delta_f_b, params)   # includes eta_impl
    g_b = n_b * m * eff_b * params.eta_kt

    if g_b > g_a:
        best = ProcessingMode(mode="B", n_sc=n_b, gain=g_b, delta_f_eff=delta_f_b)
    else:
        best = ProcessingMode(mode="A", n_sc=params.n_subcarriers, gain=g_a,
                              delta_f_eff=params.delta_f)
    return g_a, g_b, best


def mode_crossover_velocity(params: SystemParams, lo: float = 1.0, hi: float = 2000.0) -> float:
    """Velocity where the two processing modes have equal gain, m/s.

    Located by sign-change scan and bisection of g_b - g_a over [lo, hi];
    raises if the scan does not find exactly one sign change.
    """
    n_scan = 2000
    vs = [lo + (hi - lo) * i / n_scan for i in range(n_scan + 1)]

    def diff(v):
        g_a, g_b, _ = mode_gains(v, params)
        return g_b - g_a

    signs = [diff(v) > 0 for v in vs]
    changes = [i for i in range(n_scan) if signs[i] != signs[i + 1]]
    if len(changes) != 1:
        raise RuntimeError(f"expected one mode crossover in [{lo}, {hi}], found {len(changes)}")
    a, b = vs[changes[0]], vs[changes[0] + 1]
    for _ in range(60):
        mid = 0.5 * (a + b)
        if (diff(mid) > 0) == (diff(b) > 0):
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class CpiPlan:
    """Coherent-interval layout for one observation session."""

    t_cpi: float      # CPI duration, s
    m_eff: int        # symbols per CPI at this duration
    k: int            # number of CPIs in the sensing budget

    def __post_init__(self):
        if self.m_eff < 1 or self.k < 1:
            raise ValueError("CpiPlan requires m_eff >= 1 and k >= 1")


def optimal_cpi(v_rel: float, t_obs: float, rho: float, params: SystemParams) -> CpiPlan:
    """CPI duration maximizing detection SNR within the sensing budget.

    Each CPI is stretched to the range-migration limit c/(2*B*v): beyond
    it the target walks out of its range cell and coherent gain stops
    accruing.  At rest there is no migration and a single CPI fills the
    window.  The CPI count comes from the sensing fraction rho of the
    session; t_cpi is capped at rho*t_obs so that k >= 1.
    """
    if t_obs <= 0:
        raise ValueError("t_obs must be positive")
    if not 0 < rho <= 1:
        raise ValueError("rho must be in (0, 1]")
    if v_rel < 0:
        raise ValueError("v_rel must be non-negative")

    if v_rel == 0.0:
        t_star = t_obs
    else:
        t_star = min(C_LIGHT / (2.0 * params.bandwidth * v_rel), t_obs)
    t_star = min(t_star, rho * t_obs)
    m_eff = max(1, math.floor(t_star / params.t_sym))
    k = max(1, math.floor(rho * t_obs / t_star))
    return CpiPlan(t_cpi=t_star, m_eff=m_eff, k=k)


def unambiguous_velocity(params: SystemParams) -> float:
    """Largest radial velocity the slow-time sampling resolves, m/s.

    One Doppler sample per OFDM symbol gives a Nyquist interval of
    1/(2*T_sym); velocities beyond c/(4*f_c*T_sym) alias and would need
    auxiliary de-aliasing.
    """
    return C_LIGHT / (4.0 * params.f_c * params.t_sym)


def is_velocity_ambiguous(v_rel: float, params: SystemParams) -> bool:
    """Whether a scenario velocity exceeds the slow-time Nyquist limit."""
    return abs(v_rel) > unambiguous_velocity(params)
