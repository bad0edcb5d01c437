"""Batch scenario runner: config in, deterministic CSV/SVG artifacts out.

Subcommands: `run <scenario>`, `validate <scenario>`, `compare <a> <b>`.
Every run writes a manifest with the resolved configuration and content
hashes; plots are always rendered from the emitted CSVs.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from . import __version__, allocate, artifacts, detect, link, mc, orbits, stats
from .config import (EXPERIMENT_KINDS, ConfigError, Scenario, load_scenario,
                     validate_scenario)
from .params import Target, db
from .processing import mode_crossover_velocity, mode_gains, unambiguous_velocity

TABLE_DIAMETERS = (0.3, 0.5, 1.0, 2.0, 5.0)
OUTAGE_KS = (1, 4, 16, 64, 256)


# ---------------------------------------------------------------------------
# cached orbit / campaign
# ---------------------------------------------------------------------------


def load_orbit_profile(path) -> orbits.OrbitSolution:
    """Rehydrate the phase profiles of a cached orbit (no dense trajectory)."""
    comments, header, rows = artifacts.read_csv(path)
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    sys_ = orbits.Cr3bpSystem(mu=float(comments["mu"]),
                              length_unit=float(comments["length_unit_km"]),
                              time_unit=float(comments["time_unit_s"]))
    period = float(comments["period_s"])
    return orbits.OrbitSolution(
        sys=sys_, states=None, period=period,
        perilune_radius_km=float(comments["perilune_radius_km"]),
        apolune_radius_km=float(comments["apolune_radius_km"]),
        theta_grid=cols["theta_rad"], r_km=cols["r_km"],
        v_gw_mps=cols["v_gw_mps"], d_earth_km=cols["d_earth_km"],
        dwell_w=cols["dwell_weight_per_rad"],
        period_canonical=period / sys_.time_unit,
        content_hash=comments.get("content_hash", ""),
    )


def _write_encounters_csv(path, encounters):
    artifacts.write_csv(
        path, ["event_index", "time_s", "phase_rad", "v_rel_mps", "distance_km"],
        [(e.event_index, e.time_s, e.phase, e.v_rel_mps, e.distance_km)
         for e in encounters])


def _read_encounters_csv(path):
    _, _, rows = artifacts.read_csv(path)
    return [orbits.Encounter(event_index=int(r[0]), time_s=float(r[1]),
                             phase=float(r[2]), v_rel_mps=float(r[3]),
                             distance_km=float(r[4])) for r in rows]


def load_encounter_profile(path, encounters_path=None) -> orbits.EncounterProfile:
    comments, header, rows = artifacts.read_csv(path)
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    pct = {q: cols[f"v_rel_p{q}_mps"] for q in (5, 25, 50, 75, 95)}
    pct["max"] = cols["v_rel_max_mps"]
    encounters = []
    if encounters_path is not None and os.path.exists(encounters_path):
        encounters = _read_encounters_csv(encounters_path)
    flagged = []
    raw = comments.get("flagged_events", "none")
    if raw and raw != "none":
        flagged = [(int(part.split(":")[0]), part.split(":")[1])
                   for part in raw.split(";")]
    return orbits.EncounterProfile(
        theta_grid=cols["theta_rad"], v_rel_percentiles=pct,
        density=cols["density"], dwell_weight=cols["dwell_weight_per_rad"],
        encounters=encounters, flagged_events=flagged,
        n_events=int(float(comments.get("n_events", 0))),
    )


class Workspace:
    """Lazily built orbit and campaign, cached under content hashes."""

    def __init__(self, scenario: Scenario, use_cache: bool = True):
        self.scenario = scenario
        self.use_cache = use_cache
        self.cache_dir = scenario.cache_dir or os.path.join(
            os.path.expanduser("~"), ".cache", "halodar")
        self._orbit = None
        self._campaign = None

    def _orbit_key(self):
        sys_ = orbits.Cr3bpSystem.earth_moon()
        return orbits.orbit_content_hash(sys_, self.scenario.target_perilune_km,
                                         self.scenario.orbit_tol)

    def _campaign_key(self):
        s = self.scenario
        text = (f"{self._orbit_key()};h={s.horizon_days!r};r={s.recontact_radius_km!r};"
                f"tol={s.campaign_tol!r};phases={s.separation_phases}")
        import hashlib
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def orbit(self, need_dense: bool = False) -> orbits.OrbitSolution:
        if self._orbit is not None and (self._orbit.states is not None or not need_dense):
            return self._orbit
        path = os.path.join(self.cache_dir, f"orbit_{self._orbit_key()}.csv")
        if self.use_cache and not need_dense and os.path.exists(path):
            self._orbit = load_orbit_profile(path)
            return self._orbit
        self._orbit = orbits.build_gateway_orbit(
            target_perilune_km=self.scenario.target_perilune_km,
            tol=self.scenario.orbit_tol)
        if self.use_cache:
            artifacts.ensure_dir(self.cache_dir)
            self._orbit.to_csv(path)
        return self._orbit

    def campaign(self) -> orbits.EncounterProfile:
        if self._campaign is not None:
            return self._campaign
        key = self._campaign_key()
        path = os.path.join(self.cache_dir, f"campaign_{key}.csv")
        enc_path = os.path.join(self.cache_dir, f"campaign_{key}_encounters.csv")
        if self.use_cache and os.path.exists(path) and os.path.exists(enc_path):
            self._campaign = load_encounter_profile(path, enc_path)
            return self._campaign
        s = self.scenario
        events = orbits.default_separation_events(n_phases=s.separation_phases)
        self._campaign = orbits.run_separation_campaign(
            self.orbit(need_dense=True), events,
            horizon_days=s.horizon_days,
            recontact_radius_km=s.recontact_radius_km,
            tol=s.campaign_tol, workers=s.workers)
        if self.use_cache:
            artifacts.ensure_dir(self.cache_dir)
            self._campaign.to_csv(path)
            _write_encounters_csv(enc_path, self._campaign.encounters)
        return self._campaign


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_table3(scenario, ws, out):
    params = scenario.params
    rows = []
    for d in TABLE_DIAMETERS:
        target = Target.from_diameter(d, params)
        outcome = detect.solve_rmax(target, 10.0, {"m": params.symbols_per_cpi, "k": 16},
                                    params, mode="A", exact=scenario.exact_swerling)
        rows.append((d, db(target.rcs), outcome.r_max / 1e3,
                     outcome.warning_time / 60.0, outcome.k_used,
                     int(outcome.dwell_limited), int(outcome.doppler_ambiguous)))
    path = os.path.join(out, "table3.csv")
    artifacts.write_csv(path, ["diameter_m", "rcs_dbsm", "r_max_km", "warning_min",
                               "k_cpis", "dwell_limited", "doppler_ambiguous"], rows,
                        comments={"v_rel_mps": 10.0, "k": 16,
                                  "exact_swerling": scenario.exact_swerling})
    artifacts.plot_csv(path, os.path.join(out, "table3.svg"), "diameter_m",
                       ["r_max_km"], title="snapshot detection range",
                       xlabel="target diameter [m]", ylabel="R_max [km]")
    return [path]


def run_advantage(scenario, ws, out):
    params = scenario.params
    ledger = link.advantage_ledger(params)
    target = Target.from_diameter(1.0, params)
    gamma_th = detect.swerling_threshold(params.p_d, params.p_fa)

    def ground_margin(r):
        return link.ground_reference_snr(r, target.rcs, 10.0, 16, params, ledger) - gamma_th

    from scipy.optimize import brentq
    crossing = brentq(ground_margin, 1e3, 1e6, xtol=1.0)
    rows = [
        ("atmospheric_two_way", ledger.atmospheric_db),
        ("ionospheric_two_way", ledger.ionospheric_db),
        ("ground_clutter", ledger.clutter_db),
        ("thermal_noise", ledger.thermal_db),
        ("total", ledger.total_db),
    ]
    path = os.path.join(out, "advantage.csv")
    artifacts.write_csv(path, ["component", "value_db"], rows,
                        comments={"range_factor": ledger.range_factor,
                                  "ground_crossing_km_1m_k16": crossing / 1e3})
    return [path]


def run_campaign(scenario, ws, out):
    orbit = ws.orbit(need_dense=False)
    profile = ws.campaign()
    orbit_path = os.path.join(out, "orbit.csv")
    orbit.to_csv(orbit_path)
    camp_path = os.path.join(out, "campaign.csv")
    profile.to_csv(camp_path)
    paths = [orbit_path, camp_path]
    enc_path = os.path.join(out, "encounters.csv")
    _write_encounters_csv(enc_path, profile.encounters)
    paths.append(enc_path)
    artifacts.plot_csv(camp_path, os.path.join(out, "campaign.svg"), "theta_rad",
                       ["density"], title="encounter density vs orbit phase",
                       xlabel="theta [rad]")
    return paths


def _session_rmax_profile(scenario, orbit, profile, params, kind):
    v_prof = allocate.velocity_profile(orbit, profile, kind)
    target = Target.from_diameter(1.0, params)
    r_max = np.empty(orbit.theta_grid.size)
    for i, v in enumerate(v_prof):
        outcome = detect.solve_rmax(target, max(v, 0.0),
                                    {"t_obs": scenario.t_obs, "rho": scenario.rho},
                                    params, exact=scenario.exact_swerling)
        r_max[i] = outcome.r_max / 1e3
    return v_prof, r_max


def run_rmax_profile(scenario, ws, out):
    params = scenario.params
    orbit = ws.orbit()
    profile = ws.campaign()
    v_gw, r_gw = _session_rmax_profile(scenario, orbit, profile, params, "p95")
    v_ext, r_ext = _session_rmax_profile(scenario, orbit, profile, params, "external")
    warn_gw = np.where(v_gw > 0, r_gw * 1e3 / np.maximum(v_gw, 1e-12) / 60.0, np.inf)
    warn_ext = r_ext * 1e3 / np.maximum(v_ext, 1e-12) / 60.0
    path = os.path.join(out, "rmax_profile.csv")
    artifacts.write_csv(
        path,
        ["theta_rad", "v_debris_mps", "r_max_debris_km", "warning_debris_min",
         "v_external_mps", "r_max_external_km", "warning_external_min"],
        zip(orbit.theta_grid, v_gw, r_gw, warn_gw, v_ext, r_ext, warn_ext),
        comments={"t_obs_s": scenario.t_obs, "rho": scenario.rho})
    artifacts.plot_csv(path, os.path.join(out, "rmax_profile.svg"), "theta_rad",
                       ["r_max_debris_km", "r_max_external_km"],
                       title="session-optimized detection range",
                       xlabel="theta [rad]", ylabel="R_max [km]")
    return [path]


def run_modes(scenario, ws, out):
    params = scenario.params
    v_grid = np.concatenate([np.arange(1.0, 100.0, 5.0),
                             np.arange(100.0, 2001.0, 10.0)])
    rows = []
    for v in v_grid:
        g_a, g_b, best = mode_gains(v, params)
        rows.append((v, db(g_a), db(g_b), db(best.gain), best.mode, best.n_sc))
    path = os.path.join(out, "modes.csv")
    artifacts.write_csv(path, ["v_rel_mps", "gain_a_db", "gain_b_db",
                               "gain_best_db", "mode", "n_subcarriers"], rows,
                        comments={"crossover_mps": mode_crossover_velocity(params),
                                  "unambiguous_velocity_mps": unambiguous_velocity(params)})
    artifacts.plot_csv(path, os.path.join(out, "modes.svg"), "v_rel_mps",
                       ["gain_a_db", "gain_b_db"], title="processing gain vs velocity",
                       xlabel="v_rel [m/s]", ylabel="gain [dB]")
    return [path]


def run_allocation(scenario, ws, out):
    params = scenario.params
    orbit = ws.orbit()
    profile = ws.campaign()
    sigma = Target.from_diameter(1.0, params).rcs
    relay = allocate.relay_throughput_profile(orbit)
    targets = allocate.TargetProfile.from_encounters(profile, orbit.theta_grid)
    v_prof = allocate.velocity_profile(orbit, profile, "p95")

    rho_star, _ = allocate.sequential_allocation(relay, scenario.t_obs, params, orbit, v_prof)
    baseline_tp, _ = allocate.constant_allocation(relay, 0.6)
    result = allocate.adaptive_allocation(relay, targets, scenario.t_obs, params,
                                          v_prof, sigma)
    best_rho, best_tp = allocate.best_constant_rho(relay, targets, scenario.t_obs,
                                                   params, v_prof, sigma)
    path = os.path.join(out, "allocation.csv")
    result.to_csv(path)
    summary = os.path.join(out, "allocation_summary.csv")
    artifacts.write_csv(summary, ["policy", "rho", "throughput_mbps"], [
        ("sequential_worst_case", rho_star, relay.orbit_average((1 - rho_star) * relay.r_full_mbps)),
        ("constant_0.6", 0.6, baseline_tp),
        ("best_constant", best_rho, best_tp),
        ("adaptive_mean", result.mean_rho, result.mean_throughput_mbps),
    ])
    artifacts.plot_csv(path, os.path.join(out, "allocation.svg"), "theta_rad",
                       ["duty_cycle"], title="adaptive sensing duty cycle",
                       xlabel="theta [rad]")
    return [path, summary]


def run_outage(scenario, ws, out):
    ratio = np.round(np.arange(0.0, 1.2001, 0.01), 10)
    cols = [ratio]
    header = ["range_ratio"]
    for k in OUTAGE_KS:
        cols.append(np.array([stats.outage_probability(rr, 1.0, k) for rr in ratio]))
        header.append(f"p_out_k{k}")
    path = os.path.join(out, "outage_curves.csv")
    reliable = {f"reliable_ratio_eps0.1_k{k}": stats.reliable_range_ratio(0.1, k)
                for k in OUTAGE_KS}
    artifacts.write_csv(path, header, zip(*cols), comments=reliable)
    artifacts.plot_csv(path, os.path.join(out, "outage_curves.svg"), "range_ratio",
                       [f"p_out_k{k}" for k in OUTAGE_KS],
                       title="sensing outage vs normalized range")

    # per-phase outage for the external-threat profile
    params = scenario.params
    orbit = ws.orbit()
    profile = ws.campaign()
    _, r_ext = _session_rmax_profile(scenario, orbit, profile, params, "external")
    rows = []
    for i, th in enumerate(orbit.theta_grid):
        row = [th, r_ext[i]]
        for rt in (300.0, 400.0, 500.0, 600.0):
            row.append(stats.outage_probability(rt, r_ext[i], 16))
        rows.append(row)
    phase_path = os.path.join(out, "outage_by_phase.csv")
    artifacts.write_csv(phase_path,
                        ["theta_rad", "r_max_det_km", "p_out_rt300", "p_out_rt400",
                         "p_out_rt500", "p_out_rt600"], rows,
                        comments={"k": 16})
    return [path, phase_path]


def run_montecarlo(scenario, ws, out):
    params = scenario.params
    paths = []
    for v_rel in (10.0, 50.0, 500.0):
        cfg = mc.McConfig(trials=scenario.mc_trials, seed=scenario.seed,
                          k=16, v_rel=v_rel, mode="A")
        nominal = detect.solve_rmax(Target.from_diameter(1.0, params), v_rel,
                                    {"m": params.symbols_per_cpi, "k": 16},
                                    params, mode="A").r_max
        r_grid = np.linspace(0.7 * nominal, 1.3 * nominal, 19)
        rows = mc.mc_pd_vs_range_curve(r_grid, cfg, params)
        path = os.path.join(out, f"mc_pd_v{int(v_rel)}.csv")
        artifacts.write_csv(path, ["range_m", "pd_closed", "pd_mc", "std_err"], rows,
                            comments={"v_rel_mps": v_rel, "k": 16,
                                      "trials": scenario.mc_trials,
                                      "seed": scenario.seed,
                                      "crossing_closed_km": mc.crossing_range(rows, 0.9, 1) / 1e3,
                                      "crossing_mc_km": mc.crossing_range(rows, 0.9, 2) / 1e3})
        artifacts.plot_csv(path, path.replace(".csv", ".svg"), "range_m",
                           ["pd_closed", "pd_mc"], title=f"P_d vs range, v={v_rel:g} m/s",
                           xlabel="range [m]", ylabel="P_d")
        paths.append(path)
    return paths


_RUNNERS = {
    "table3": run_table3,
    "advantage": run_advantage,
    "campaign": run_campaign,
    "rmax_profile": run_rmax_profile,
    "modes": run_modes,
    "allocation": run_allocation,
    "outage": run_outage,
    "montecarlo": run_montecarlo,
}


def run_scenario(scenario: Scenario, out_dir: str, use_cache: bool = True) -> list[str]:
    issues = validate_scenario(scenario)
    if issues:
        raise ConfigError("; ".join(issues))
    artifacts.ensure_dir(out_dir)
    ws = Workspace(scenario, use_cache=use_cache)
    kinds = scenario.experiments
    if "full" in kinds:
        kinds = tuple(k for k in EXPERIMENT_KINDS if k != "full")
    produced = []
    for kind in kinds:
        produced.extend(_RUNNERS[kind](scenario, ws, out_dir))

    manifest = {"name": scenario.name, "version": f"halodar-{__version__}",
                "seed": scenario.seed, "experiments": ",".join(kinds),
                "compare_tolerance": scenario.compare_tolerance,
                "exact_swerling": scenario.exact_swerling,
                "t_obs_s": scenario.t_obs, "rho": scenario.rho,
                "horizon_days": scenario.horizon_days,
                "recontact_radius_km": scenario.recontact_radius_km,
                "mc_trials": scenario.mc_trials}
    for key, value in sorted(vars(scenario.params).items()):
        manifest[f"system.{key}"] = value
    for path in sorted(produced):
        manifest[f"sha256.{os.path.basename(path)}"] = artifacts.sha256_file(path)
    artifacts.write_manifest(os.path.join(out_dir, "manifest.txt"), manifest)
    return produced


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def compare_runs(dir_a: str, dir_b: str, tolerance: float | None = None):
    """Per-metric relative differences between two run directories.

    Returns (report lines, worst relative difference).  Raises on
    structural mismatch (missing artifacts or shape differences).
    """
    man_a = artifacts.read_manifest(os.path.join(dir_a, "manifest.txt"))
    man_b = artifacts.read_manifest(os.path.join(dir_b, "manifest.txt"))
    if tolerance is None:
        tolerance = max(float(man_a.get("compare_tolerance", 0.0)),
                        float(man_b.get("compare_tolerance", 0.0)))

    csvs_a = {k[len("sha256."):] for k in man_a if k.startswith("sha256.") and k.endswith(".csv")}
    csvs_b = {k[len("sha256."):] for k in man_b if k.startswith("sha256.") and k.endswith(".csv")}
    if csvs_a != csvs_b:
        raise FileNotFoundError(f"artifact sets differ: {sorted(csvs_a ^ csvs_b)}")

    lines = []
    worst = 0.0
    for name in sorted(csvs_a):
        cols_a = artifacts.read_csv_columns(os.path.join(dir_a, name))
        cols_b = artifacts.read_csv_columns(os.path.join(dir_b, name))
        if set(cols_a) != set(cols_b):
            raise ValueError(f"{name}: column sets differ")
        for col in cols_a:
            va, vb = cols_a[col], cols_b[col]
            if len(va) != len(vb):
                raise ValueError(f"{name}:{col}: row counts differ")
            if not va or isinstance(va[0], str):
                continue
            va = np.asarray(va, dtype=float)
            vb = np.asarray(vb, dtype=float)
            finite = np.isfinite(va) & np.isfinite(vb)
            scale = np.maximum(np.abs(va[finite]), np.abs(vb[finite]))
            diff = np.abs(va[finite] - vb[finite])
            rel = float((diff / np.where(scale > 0, scale, 1.0)).max()) if finite.any() else 0.0
            worst = max(worst, rel)
            lines.append(f"{name}:{col} max_rel_diff = {rel:.6g}")
    return lines, worst, tolerance


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="halodar",
                                     description="halo-orbit debris radar scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--no-cache", action="store_true")
    p_run.add_argument("--exact-swerling", action="store_true")

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")

    p_cmp = sub.add_parser("compare", help="diff two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--tol", type=float, default=None)

    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            scenario = load_scenario(args.scenario)
        except ConfigError as exc:
            print(f"invalid: {exc}")
            return 1
        issues = validate_scenario(scenario)
        if issues:
            for issue in issues:
                print(f"violation: {issue}")
            return 1
        print(f"scenario {scenario.name!r} valid")
        return 0

    if args.command == "run":
        try:
            scenario = load_scenario(args.scenario)
        except ConfigError as exc:
            print(f"config error: {exc}", file=_sys.stderr)
            return 2
        if args.seed is not None:
            scenario.seed = args.seed
        if args.exact_swerling:
            scenario.exact_swerling = True
        out_dir = args.out or scenario.out or f"runs/{scenario.name}"
        try:
            produced = run_scenario(scenario, out_dir, use_cache=not args.no_cache)
        except (ConfigError, ValueError) as exc:
            print(f"error: {exc}", file=_sys.stderr)
            return 2
        print(f"wrote {len(produced)} artifacts to {out_dir}")
        return 0

    if args.command == "compare":
        try:
            lines, worst, tol = compare_runs(args.dir_a, args.dir_b, args.tol)
        except (FileNotFoundError, ValueError) as exc:
            print(f"structural diff: {exc}", file=_sys.stderr)
            return 2
        for line in lines:
            print(line)
        print(f"worst relative difference: {worst:.6g} (tolerance {tol:g})")
        return 0 if worst <= tol else 1

    return 2


if __name__ == "__main__":
    raise SystemExit(main())
