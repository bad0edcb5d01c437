"""Scenario files: INI-style key=value sections with SI-suffixed numbers.

A quantity like "100MHz" or "0.62deg" carries an optional SI prefix and
an optional unit; units are normalized to the base SI unit (km becomes
meters, degrees become radians, days become seconds).  The format is
line-diffable on purpose.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields as dc_fields

from .params import SystemParams

_SI_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
              "m": 1e-3, "u": 1e-6, "n": 1e-9, "p": 1e-12}

# unit -> (strip, extra multiplier); longest suffix matched first
_UNITS = {
    "Hz": 1.0, "bps": 1.0, "W": 1.0, "K": 1.0, "s": 1.0, "m": 1.0, "B": 1.0,
    "deg": 0.017453292519943295, "rad": 1.0, "d": 86400.0, "h": 3600.0,
    "min": 60.0, "dB": 1.0, "%": 0.01,
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Zµ%]*)\s*$")


class ConfigError(ValueError):
    """Scenario file problem, with the offending key in the message."""


def parse_quantity(text: str) -> float:
    """Parse a number with optional SI prefix and unit ("97.66kHz" -> 97660)."""
    match = _QUANTITY_RE.match(text)
    if not match:
        raise ConfigError(f"not a quantity: {text!r}")
    value = float(match.group(1))
    suffix = match.group(2).replace("µ", "u")
    if not suffix:
        return value
    for unit in sorted(_UNITS, key=len, reverse=True):
        if suffix.endswith(unit):
            prefix = suffix[: -len(unit)]
            if prefix in _SI_PREFIX:
                return value * _SI_PREFIX[prefix] * _UNITS[unit]
    if suffix in _SI_PREFIX:
        return value * _SI_PREFIX[suffix]
    raise ConfigError(f"unknown unit suffix {suffix!r} in {text!r}")


EXPERIMENT_KINDS = ("table3", "advantage", "campaign", "rmax_profile", "modes",
                    "allocation", "outage", "montecarlo", "full")

_PARAM_FIELDS = {f.name for f in dc_fields(SystemParams)}
_INT_PARAMS = {"n_subcarriers", "symbols_per_cpi"}

_SCENARIO_KEYS = {
    "name", "experiments", "seed", "out", "cache_dir", "compare_tolerance",
    "exact_swerling", "t_obs", "rho", "horizon_days", "recontact_radius_km",
    "separation_phases", "mc_trials", "target_perilune_km", "orbit_tol",
    "campaign_tol", "workers",
}


@dataclass
class Scenario:
    """Resolved run configuration."""

    name: str = "default"
    experiments: tuple = ()
    seed: int = 0
    out: str | None = None
    cache_dir: str | None = None
    compare_tolerance: float = 0.0
    exact_swerling: bool = False
    t_obs: float = 60.0
    rho: float = 0.6
    horizon_days: float = 40.0
    recontact_radius_km: float = 100.0
    separation_phases: int = 24
    mc_trials: int = 20_000
    target_perilune_km: float = 3371.0
    orbit_tol: float = 1e-12
    campaign_tol: float = 1e-10
    workers: int = 1
    overrides: dict = field(default_factory=dict)

    @property
    def params(self) -> SystemParams:
        return SystemParams(**self.overrides)


def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       strict=True)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read scenario file {path}")
    return parser


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; unknown keys are errors."""
    parser = _read_ini(path)
    problems = []
    scenario = Scenario()

    for section in parser.sections():
        if section not in ("scenario", "system"):
            problems.append(f"unknown section [{section}]")
    if problems:
        raise ConfigError("; ".join(problems))

    if parser.has_section("scenario"):
        for key, raw in parser.items("scenario"):
            if key not in _SCENARIO_KEYS:
                problems.append(f"unknown scenario key {key!r}")
                continue
            try:
                if key == "name":
                    scenario.name = raw.strip()
                elif key == "experiments":
                    kinds = tuple(k.strip() for k in raw.split(",") if k.strip())
                    bad = [k for k in kinds if k not in EXPERIMENT_KINDS]
                    if bad:
                        problems.append(f"unknown experiments {bad}")
                    scenario.experiments = kinds
                elif key in ("out", "cache_dir"):
                    setattr(scenario, key, raw.strip())
                elif key == "exact_swerling":
                    scenario.exact_swerling = raw.strip().lower() in ("1", "true", "yes", "on")
                elif key in ("seed", "separation_phases", "mc_trials", "workers"):
                    setattr(scenario, key, int(parse_quantity(raw)))
                else:
                    setattr(scenario, key, parse_quantity(raw))
            except ConfigError as exc:
                problems.append(f"scenario.{key}: {exc}")

    if parser.has_section("system"):
        for key, raw in parser.items("system"):
            if key not in _PARAM_FIELDS:
                problems.append(f"unknown system parameter {key!r}")
                continue
            try:
                value = parse_quantity(raw)
                scenario.overrides[key] = int(value) if key in _INT_PARAMS else value
            except ConfigError as exc:
                problems.append(f"system.{key}: {exc}")

    if problems:
        raise ConfigError("; ".join(problems))
    return scenario


def validate_scenario(scenario: Scenario) -> list[str]:
    """Physical-range checks; returns all violations (empty when valid)."""
    issues = []
    try:
        params = scenario.params
    except (ValueError, TypeError) as exc:
        issues.append(str(exc))
        params = None
    if params is not None:
        if params.bandwidth <= 0:
            issues.append("bandwidth must be positive")
        if not 0 < params.p_fa < params.p_d < 1:
            issues.append(f"need 0 < P_fa < P_d < 1, got P_d={params.p_d}, P_fa={params.p_fa}")
        if params.tx_power <= 0:
            issues.append("tx_power must be positive")
        if params.t_sys <= 0:
            issues.append("t_sys must be positive")
    if not 0 < scenario.rho <= 1:
        issues.append("rho must be in (0, 1]")
    if scenario.t_obs <= 0:
        issues.append("t_obs must be positive")
    if not 30 <= scenario.horizon_days <= 45:
        issues.append("horizon_days must lie in [30, 45]")
    if scenario.recontact_radius_km <= 0:
        issues.append("recontact_radius_km must be positive")
    if scenario.mc_trials < 1000:
        issues.append("mc_trials must be >= 1000 for acceptance-grade runs")
    if not 1e-14 <= scenario.orbit_tol <= 1e-6:
        issues.append("orbit_tol outside [1e-14, 1e-6]")
    if not 1e-14 <= scenario.campaign_tol <= 1e-6:
        issues.append("campaign_tol outside [1e-14, 1e-6]")
    return issues
