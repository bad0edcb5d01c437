"""Monte Carlo validation of the fluctuating-target detection chain.

One trial draws a single exponential target power (the fade is constant
across the CPIs of a look), adds independent unit-mean complex Gaussian
noise per CPI, square-law sums, and compares against the analytic
noise-only threshold.  Trials run in fixed-size chunks on counter-based
streams keyed by (seed, chunk), so results are bit-identical regardless
of execution order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .detect import noise_threshold
from .link import detection_snr
from .params import SystemParams, Target
from .processing import mode_gains

_CHUNK = 4096


@dataclass(frozen=True)
class McConfig:
    trials: int = 20_000
    seed: int = 0
    k: int = 16
    r: float = 97e3              # m
    diameter: float = 1.0        # m
    v_rel: float = 10.0          # m/s
    mode: str = "A"              # processing mode for the SNR chain

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, chunk], dtype=np.uint64)))


def per_cpi_snr(cfg: McConfig, params: SystemParams) -> float:
    """Mean single-CPI SNR of the configured scenario, linear."""
    sigma = Target.from_diameter(cfg.diameter, params).rcs
    snr = detection_snr(cfg.r, sigma, cfg.v_rel, 1, params)
    if cfg.mode == "B":
        g_a, g_b, _ = mode_gains(cfg.v_rel, params)
        snr *= g_b / g_a
    elif cfg.mode != "A":
        raise ValueError(f"unknown mode {cfg.mode!r}")
    return snr


def _simulate_detections(snr: float, k: int, threshold: float,
                         trials: int, seed: int) -> int:
    detections = 0
    n_chunks = (trials + _CHUNK - 1) // _CHUNK
    for chunk in range(n_chunks):
        n = min(_CHUNK, trials - chunk * _CHUNK)
        rng = _chunk_rng(seed, chunk)
        power = rng.exponential(snr, n) if snr > 0 else np.zeros(n)
        amp = np.sqrt(power)[:, None]
        noise = rng.normal(0.0, math.sqrt(0.5), (n, k)) \
            + 1j * rng.normal(0.0, math.sqrt(0.5), (n, k))
        statistic = (np.abs(amp + noise) ** 2).sum(axis=1)
        detections += int((statistic > threshold).sum())
    return detections


def mc_detection_probability(cfg: McConfig, params: SystemParams,
                             p_fa: float | None = None):
    """Detection probability estimate with its binomial standard error.

    The threshold is the analytic noise-only quantile (the configured
    false-alarm rates are unreachable empirically at these trial counts).
    """
    p_fa = params.p_fa if p_fa is None else p_fa
    threshold = noise_threshold(cfg.k, p_fa)
    snr = per_cpi_snr(cfg, params)
    detections = _simulate_detections(snr, cfg.k, threshold, cfg.trials, cfg.seed)
    p_d = detections / cfg.trials
    se = math.sqrt(max(p_d * (1.0 - p_d), 1.0 / cfg.trials) / cfg.trials)
    return p_d, se


def mc_pd_at_snr(snr: float, k: int, p_fa: float, trials: int, seed: int):
    """Detection probability at an explicit per-CPI SNR (model-level entry)."""
    threshold = noise_threshold(k, p_fa)
    detections = _simulate_detections(snr, k, threshold, trials, seed)
    p_d = detections / trials
    se = math.sqrt(max(p_d * (1.0 - p_d), 1.0 / trials) / trials)
    return p_d, se


def closed_form_pd(snr_per_cpi: float, k: int, p_fa: float, kappa: float) -> float:
    """The K^kappa-boosted single-CPI detection law used by the range solver."""
    boosted = snr_per_cpi * float(k) ** kappa
    return p_fa ** (1.0 / (1.0 + boosted))


def mc_pd_vs_range_curve(r_grid, cfg: McConfig, params: SystemParams):
    """Tabulated closed-form and Monte Carlo detection probability vs range.

    Returns a list of (r, pd_closed, pd_mc, se) rows; the seed stream is
    advanced деterministically per range point via the config seed.
    """
    rows = []
    for i, r in enumerate(np.asarray(r_grid, dtype=float)):
        cfg_r = replace(cfg, r=float(r), seed=cfg.seed + 7919 * i)
        snr = per_cpi_snr(cfg_r, params)
        pd_cf = closed_form_pd(snr, cfg.k, params.p_fa, params.kappa)
        pd_mc, se = mc_detection_probability(cfg_r, params)
        rows.append((float(r), pd_cf, pd_mc, se))
    return rows


def crossing_range(rows, level: float = 0.9, column: int = 2) -> float:
    """Range where the chosen P_d column crosses `level`, by monotone
    interpolation (the MC column is first clamped to a non-increasing
    envelope to suppress sampling jitter)."""
    r = np.array([row[0] for row in rows])
    pd = np.array([row[column] for row in rows])
    order = np.argsort(r)
    r, pd = r[order], pd[order]
    pd = np.minimum.accumulate(pd)     # enforce non-increasing in range
    if not (pd.min() <= level <= pd.max()):
        raise ValueError(f"P_d = {level} not bracketed by the range grid")
    return float(np.interp(-level, -pd, r))


def swerling_draw_diagnostics(snr: float, k: int, trials: int, seed: int):
    """Per-trial fade draws and per-CPI measured powers, for model checks.

    The drawn power is constant across a trial's CPIs by construction;
    the measured per-CPI powers share it plus independent noise.
    """
    rng = _chunk_rng(seed, 0)
    power = rng.exponential(snr, trials)
    amp = np.sqrt(power)[:, None]
    noise = rng.normal(0.0, math.sqrt(0.5), (trials, k)) \
        + 1j * rng.normal(0.0, math.sqrt(0.5), (trials, k))
    measured = np.abs(amp + noise) ** 2
    drawn = np.repeat(power[:, None], k, axis=1)
    return drawn, measured
