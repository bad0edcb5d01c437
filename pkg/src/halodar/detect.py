"""Fluctuating-target detection: thresholds, the exact multi-CPI oracle,
the integration-exponent fit, and the maximum-range solver.

The closed-form range solver uses the K^kappa integration-gain
approximation; the exact square-law/incomplete-gamma machinery is kept
alongside as the calibration oracle and as an optional solver mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .link import detection_snr
from .params import SystemParams
from .processing import CpiPlan, ProcessingMode, is_velocity_ambiguous, mode_gains, optimal_cpi
from .stats import inverse_lower_gamma, log_regularized_lower_gamma, regularized_lower_gamma


def swerling_threshold(p_d: float, p_fa: float) -> float:
    """Single-CPI SNR needed for an exponentially fluctuating target, linear.

    Inverts P_d = P_fa^(1/(1+snr)).
    """
    if not 0.0 < p_fa < p_d < 1.0:
        raise ValueError(f"need 0 < P_fa < P_d < 1, got P_d={p_d}, P_fa={p_fa}")
    return math.log(p_fa) / math.log(p_d) - 1.0


@dataclass(frozen=True)
class DetectionSpec:
    """Detection operating point and its derived threshold."""

    p_d: float = 0.9
    p_fa: float = 1e-6
    kappa: float = 0.85

    def __post_init__(self):
        if not 0.0 < self.p_fa < self.p_d < 1.0:
            raise ValueError("need 0 < P_fa < P_d < 1")

    @property
    def gamma_th(self) -> float:
        return swerling_threshold(self.p_d, self.p_fa)

    @classmethod
    def from_params(cls, params: SystemParams) -> "DetectionSpec":
        return cls(p_d=params.p_d, p_fa=params.p_fa, kappa=params.kappa)


@lru_cache(maxsize=4096)
def noise_threshold(k: int, p_fa: float) -> float:
    """Square-law sum threshold over K CPIs for false-alarm rate p_fa.

    The noise-only statistic is a sum of K unit-mean exponentials, so the
    threshold is the Gamma(K, 1) quantile at 1 - p_fa.  Cached: the
    root-finding callers evaluate the same operating point repeatedly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < p_fa < 1.0:
        raise ValueError("p_fa must be in (0, 1)")
    return inverse_lower_gamma(float(k), 1.0 - p_fa)


def swerling1_pd_exact(snr_per_cpi: float, k: int, p_fa: float) -> float:
    """Exact detection probability for K square-law-summed CPIs.

    The target amplitude is exponentially distributed and held constant
    across the K CPIs of one look.  For K = 1 this reduces to
    P_fa^(1/(1+snr)); for K > 1 it is the classical incomplete-gamma
    expression in the total SNR.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if snr_per_cpi < 0:
        raise ValueError("snr must be non-negative")
    if snr_per_cpi == 0.0:
        return p_fa

    v_t = noise_threshold(k, p_fa)
    if k == 1:
        return math.exp(-v_t / (1.0 + snr_per_cpi))

    gamma_total = k * snr_per_cpi
    km1 = float(k - 1)
    # second term computed in log space: the prefactor can overflow at
    # small SNR while the gamma factor underflows
    log_term = ((k - 1) * math.log1p(1.0 / gamma_total)
                - v_t / (1.0 + gamma_total)
                + log_regularized_lower_gamma(km1, v_t / (1.0 + 1.0 / gamma_total)))
    p = 1.0 - regularized_lower_gamma(km1, v_t) + math.exp(log_term)
    return min(max(p, 0.0), 1.0)


def required_snr_exact(p_d: float, p_fa: float, k: int) -> float:
    """Per-CPI SNR at which the exact K-CPI detection curve hits p_d."""
    if not 0.0 < p_fa < p_d < 1.0:
        raise ValueError("need 0 < P_fa < P_d < 1")
    lo = swerling_threshold(p_d, p_fa) / (2.0 * k)   # below any sub-coherent gain
    hi = swerling_threshold(p_d, p_fa) * 1.001
    # bisection on the monotone curve
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if swerling1_pd_exact(mid, k, p_fa) < p_d:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-12:
            break
    return math.sqrt(lo * hi)


def fit_kappa(p_d: float, p_fa: float, k_range) -> float:
    """Exponent of the K^kappa integration-gain law fitted to the exact oracle.

    Least-squares in log-log space, constrained through K = 1 where the
    gain is unity by definition.  Raises if the range has fewer than two
    distinct K values.
    """
    ks = sorted({int(k) for k in k_range})
    if len(ks) < 2:
        raise ValueError("kappa fit needs at least two distinct K values")
    if ks[0] < 1 or ks[-1] > 500:
        raise ValueError("K range must lie within [1, 500]")
    base = swerling_threshold(p_d, p_fa)
    num = 0.0
    den = 0.0
    for k in ks:
        if k == 1:
            continue
        gain = base / required_snr_exact(p_d, p_fa, k)
        lk = math.log(k)
        num += lk * math.log(gain)
        den += lk * lk
    return num / den


def kappa_fit_residual_db(p_d: float, p_fa: float, kappa: float, k_range) -> float:
    """Worst dB gap between the K^kappa law and the exact required-SNR gain."""
    base = swerling_threshold(p_d, p_fa)
    worst = 0.0
    for k in k_range:
        gain = base / required_snr_exact(p_d, p_fa, int(k))
        resid = abs(10.0 * math.log10(gain) - kappa * 10.0 * math.log10(k))
        worst = max(worst, resid)
    return worst


@dataclass(frozen=True)
class DetectionOutcome:
    """Solved detection geometry for one target/velocity/budget combination."""

    r_max: float                 # m
    k_used: int                  # CPIs actually integrated
    t_dwell: float               # beam dwell at r_max, s (inf when v_rel = 0)
    dwell_limited: bool
    warning_time: float          # s (inf when v_rel = 0)
    mode: ProcessingMode
    cpi: CpiPlan
    iterations: int
    damped: bool
    doppler_ambiguous: bool

    def __post_init__(self):
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        if self.k_used < 1:
            raise ValueError("k_used must be >= 1")


class RmaxConvergenceError(RuntimeError):
    """Fixed-point iteration failed; carries the iterate history."""

    def __init__(self, history):
        super().__init__(f"range solver did not converge; last iterates {history[-3:]}")
        self.history = list(history)


def beam_dwell(r: float, v_rel: float, params: SystemParams,
               average_chord: bool = False) -> float:
    """Fixed-beam dwell time of a crossing target at range r, s.

    Uses the diametric chord (optimistic reference); the pi/4 mean
    random-chord factor is available as an option.
    """
    if v_rel <= 0:
        return math.inf
    dwell = 2.0 * r * math.tan(params.theta_bw / 2.0) / v_rel
    if average_chord:
        dwell *= math.pi / 4.0
    return dwell


def _resolve_processing(v_rel, params, sensing, mode):
    """Pick the CPI plan and processing gain for a sensing budget."""
    if "k" in sensing:   # fixed snapshot configuration
        m = int(sensing.get("m", params.symbols_per_cpi))
        k_budget = int(sensing["k"])
        plan = CpiPlan(t_cpi=m * params.t_sym, m_eff=m, k=k_budget)
    else:                # session configuration (t_obs, rho)
        plan = optimal_cpi(v_rel, sensing["t_obs"], sensing["rho"], params)
        m = plan.m_eff
        k_budget = plan.k

    g_a, g_b, best = mode_gains(v_rel, params, m=m)
    if mode == "A":
        chosen = ProcessingMode(mode="A", n_sc=params.n_subcarriers, gain=g_a,
                                delta_f_eff=params.delta_f)
    elif mode == "B":
        from .processing import mode_b_subcarriers
        n_sc = mode_b_subcarriers(v_rel, params)
        chosen = ProcessingMode(mode="B", n_sc=n_sc, gain=g_b,
                                delta_f_eff=params.bandwidth / n_sc)
    elif mode == "auto":
        chosen = best
    else:
        raise ValueError(f"unknown processing mode {mode!r}")
    return plan, chosen, k_budget


def _range4_coefficient(sigma, proc_gain, params, spec):
    """R^4 budget at unit K: r_max^4 = coeff * K^kappa."""
    num = params.eirp * params.antenna_gain * params.wavelength**2 * sigma * proc_gain
    return num / ((4.0 * math.pi) ** 3 * params.noise_power * spec.gamma_th)


def solve_rmax(
    target,
    v_rel: float,
    sensing: dict,
    params: SystemParams,
    mode: str = "auto",
    dwell_cap: bool = True,
    average_chord: bool = False,
    exact: bool = False,
    max_iter: int = 50,
) -> DetectionOutcome:
    """Maximum detection range with the beam-dwell cap resolved jointly.

    `sensing` is either a snapshot configuration {"m": .., "k": ..} or a
    session budget {"t_obs": .., "rho": ..}.  The dwell cap couples the
    usable CPI count to the solved range, so the two are iterated to a
    fixed point (converged at 0.1% step size, damped on oscillation).
    With `exact=True` the K^kappa approximation is replaced by the
    incomplete-gamma oracle when converting the threshold to a range.

    Args:
        target: Target instance or bare RCS in m^2.
        v_rel: radial velocity, m/s; 0 disables the dwell cap.
    """
    sigma = getattr(target, "rcs", target)
    if sigma <= 0:
        raise ValueError("target RCS must be positive")
    if v_rel < 0:
        raise ValueError("v_rel must be non-negative")
    spec = DetectionSpec.from_params(params)

    plan, proc, k_budget = _resolve_processing(v_rel, params, sensing, mode)
    coeff = _range4_coefficient(sigma, proc.gain, params, spec)

    def k_gain(k_eff: float) -> float:
        """SNR multiple of the single-CPI threshold requirement at k_eff CPIs."""
        if exact:
            k_int = max(1, int(k_eff))
            return spec.gamma_th / required_snr_exact(spec.p_d, spec.p_fa, k_int)
        return k_eff ** spec.kappa

    def radius(k_eff: float) -> float:
        return (coeff * k_gain(k_eff)) ** 0.25

    r = radius(float(k_budget))
    use_dwell = dwell_cap and v_rel > 0
    history = [r]
    iterations = 1
    damped = False
    dwell_limited = False

    if use_dwell:
        prev_step = None
        for _ in range(max_iter):
            k_dwell = beam_dwell(r, v_rel, params, average_chord) / plan.t_cpi
            k_eff = min(float(k_budget), max(k_dwell, 1.0))
            dwell_limited = k_dwell < k_budget
            r_new = radius(k_eff)
            step = r_new - r
            if prev_step is not None and step * prev_step < 0:
                r_new = r + 0.5 * step     # damp oscillation
                damped = True
            history.append(r_new)
            iterations += 1
            if abs(r_new - r) < 1e-3 * r:
                r = r_new
                break
            prev_step = step
            r = r_new
        else:
            raise RmaxConvergenceError(history)

    if use_dwell:
        k_dwell_final = beam_dwell(r, v_rel, params, average_chord) / plan.t_cpi
        k_used = max(1, min(k_budget, int(k_dwell_final)))
    else:
        k_used = k_budget
    return DetectionOutcome(
        r_max=r,
        k_used=k_used,
        t_dwell=beam_dwell(r, v_rel, params, average_chord),
        dwell_limited=dwell_limited,
        warning_time=warning_time_at(r, v_rel),
        mode=proc,
        cpi=plan,
        iterations=iterations,
        damped=damped,
        doppler_ambiguous=is_velocity_ambiguous(v_rel, params),
    )


def warning_time_at(r_max: float, v_rel: float) -> float:
    """Time to close from first detection at constant approach speed, s."""
    if v_rel < 0:
        raise ValueError("v_rel must be non-negative")
    if v_rel == 0.0:
        return math.inf
    return r_max / v_rel


def warning_time(outcome: DetectionOutcome, v_rel: float) -> float:
    return warning_time_at(outcome.r_max, v_rel)


def pd_at_range(r: float, sigma: float, v_rel: float, k: int,
                params: SystemParams) -> float:
    """Exact detection probability of the standard chain at range r."""
    snr_per_cpi = detection_snr(r, sigma, v_rel, 1, params)
    return swerling1_pd_exact(snr_per_cpi, k, params.p_fa)
