"""Rotating-frame three-body dynamics, halo-family continuation to the
near-rectilinear reference orbit, and the debris-separation recontact campaign.

Everything internal runs in canonical units (primary separation = 1,
mean motion = 1); kilometers and seconds appear only on the public
surface.  The phase coordinate theta is the geometric sweep angle of the
selenocentric position in the orbit's mean plane, rescaled so apolune
sits at 0 and perilune exactly at pi; the dwell weight w(theta) is the
exact time spent per phase bin, so integrals of f(theta) w(theta) dtheta
reproduce time averages.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

MOON_RADIUS_KM = 1737.4
SIDEREAL_MONTH_S = 27.321661 * 86400.0


class PropagationError(RuntimeError):
    """Integration aborted; carries the last valid epoch (canonical time)."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class CorrectionError(RuntimeError):
    """Differential correction diverged; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Cr3bpSystem:
    """Mass ratio and dimensionalization constants of the rotating frame."""

    mu: float = 0.01215             # Earth-Moon mass ratio
    length_unit: float = 384_400.0  # km, mean primary separation
    time_unit: float = SIDEREAL_MONTH_S / (2.0 * math.pi)   # s, 1/mean-motion

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError("mass ratio must be in (0, 0.5)")
        if self.length_unit <= 0 or self.time_unit <= 0:
            raise ValueError("units must be positive")

    @classmethod
    def earth_moon(cls) -> "Cr3bpSystem":
        return cls()

    @property
    def velocity_unit(self) -> float:
        """km/s per canonical velocity."""
        return self.length_unit / self.time_unit

    @property
    def moon_position(self) -> np.ndarray:
        return np.array([1.0 - self.mu, 0.0, 0.0])

    @property
    def earth_position(self) -> np.ndarray:
        return np.array([-self.mu, 0.0, 0.0])


@dataclass(frozen=True)
class RotatingState:
    """Position/velocity pair in the nondimensional rotating frame."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        vel = np.asarray(self.velocity, dtype=float)
        if pos.shape != (3,) or vel.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, y) -> "RotatingState":
        y = np.asarray(y, dtype=float)
        return cls(position=y[:3], velocity=y[3:6])


def _as_vector(state) -> np.ndarray:
    if isinstance(state, RotatingState):
        return state.vector
    y = np.asarray(state, dtype=float)
    if y.shape != (6,):
        raise ValueError("state must be a RotatingState or 6-vector")
    return y


def _rhs6(t, y, mu):
    x, yy, z, vx, vy, vz = y.tolist() if isinstance(y, np.ndarray) else y
    dx1 = x + mu
    dx2 = x - 1.0 + mu
    r1sq = dx1 * dx1 + yy * yy + z * z
    r2sq = dx2 * dx2 + yy * yy + z * z
    if r1sq < 1e-20 or r2sq < 1e-20:
        raise PropagationError("state coincident with a primary", last_time=t)
    c1 = (1.0 - mu) / (r1sq * math.sqrt(r1sq))
    c2 = mu / (r2sq * math.sqrt(r2sq))
    ax = 2.0 * vy + x - c1 * dx1 - c2 * dx2
    ay = -2.0 * vx + yy - c1 * yy - c2 * yy
    az = -c1 * z - c2 * z
    return np.array([vx, vy, vz, ax, ay, az])


def _gravity_hessian(x, yy, z, mu):
    """Second derivatives of the effective potential, 3x3."""
    dx1 = x + mu
    dx2 = x - 1.0 + mu
    r1sq = dx1 * dx1 + yy * yy + z * z
    r2sq = dx2 * dx2 + yy * yy + z * z
    r13 = r1sq * math.sqrt(r1sq)
    r23 = r2sq * math.sqrt(r2sq)
    r15 = r13 * r1sq
    r25 = r23 * r2sq
    m1 = 1.0 - mu
    uxx = 1.0 - m1 / r13 - mu / r23 + 3.0 * m1 * dx1 * dx1 / r15 + 3.0 * mu * dx2 * dx2 / r25
    uyy = 1.0 - m1 / r13 - mu / r23 + 3.0 * m1 * yy * yy / r15 + 3.0 * mu * yy * yy / r25
    uzz = -m1 / r13 - mu / r23 + 3.0 * m1 * z * z / r15 + 3.0 * mu * z * z / r25
    uxy = 3.0 * m1 * dx1 * yy / r15 + 3.0 * mu * dx2 * yy / r25
    uxz = 3.0 * m1 * dx1 * z / r15 + 3.0 * mu * dx2 * z / r25
    uyz = 3.0 * m1 * yy * z / r15 + 3.0 * mu * yy * z / r25
    return np.array([[uxx, uxy, uxz], [uxy, uyy, uyz], [uxz, uyz, uzz]])


def _rhs42(t, y, mu):
    """State + state-transition-matrix dynamics (6 + 36 components)."""
    out = np.empty(42)
    out[:6] = _rhs6(t, y[:6], mu)
    u3 = _gravity_hessian(y[0], y[1], y[2], mu)
    phi = y[6:].reshape(6, 6)
    top, bot = phi[:3], phi[3:]
    dbot = u3 @ top
    dbot[0] += 2.0 * bot[1]
    dbot[1] -= 2.0 * bot[0]
    out[6:24] = bot.ravel()
    out[24:] = dbot.ravel()
    return out


def cr3bp_derivative(state, sys: Cr3bpSystem) -> np.ndarray:
    """Time derivative of the rotating-frame state, [velocity, acceleration].

    Includes the centrifugal and Coriolis terms; raises PropagationError
    when the position coincides with either primary.
    """
    return _rhs6(0.0, _as_vector(state), sys.mu)


def jacobi_constant(state, sys: Cr3bpSystem) -> float:
    """Integral of motion C = 2U - v^2 of the rotating frame."""
    x, yy, z, vx, vy, vz = _as_vector(state)
    mu = sys.mu
    r1 = math.sqrt((x + mu) ** 2 + yy * yy + z * z)
    r2 = math.sqrt((x - 1.0 + mu) ** 2 + yy * yy + z * z)
    u = 0.5 * (x * x + yy * yy) + (1.0 - mu) / r1 + mu / r2
    return 2.0 * u - (vx * vx + vy * vy + vz * vz)


def libration_point(sys: Cr3bpSystem, index: int) -> np.ndarray:
    """Collinear equilibrium position L1, L2 or L3."""
    mu = sys.mu

    def fx(x):
        return _rhs6(0.0, np.array([x, 0.0, 0.0, 0.0, 0.0, 0.0]), mu)[3]

    if index == 1:
        x = brentq(fx, -mu + 1e-6 + (1 - mu) * 0.5, 1.0 - mu - 1e-6, xtol=1e-14)
    elif index == 2:
        x = brentq(fx, 1.0 - mu + 1e-6, 1.5, xtol=1e-14)
    elif index == 3:
        x = brentq(fx, -1.5, -mu - 1e-6, xtol=1e-14)
    else:
        raise ValueError("only collinear points L1-L3 are supported")
    return np.array([x, 0.0, 0.0])


def integrate(state0, t_span, sys: Cr3bpSystem, tol: float = 1e-12,
              t_eval=None, events=None, with_stm: bool = False):
    """Propagate a rotating-frame state with an 8th-order adaptive scheme.

    Thin wrapper over DOP853 with dense output enabled; `tol` is applied
    as both relative and absolute tolerance (canonical coordinates are
    order unity).  Raises PropagationError on solver failure, carrying
    the last reached epoch.
    """
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError("tol must be within [1e-14, 1e-6]")
    y0 = _as_vector(state0) if not with_stm else np.asarray(state0, dtype=float)
    if t_span[0] == t_span[1]:
        # zero-duration span: scipy rejects it, contract says identity
        class _Still:
            t = np.array([t_span[0]])
            y = y0.reshape(-1, 1)
            t_events = [np.array([])] if events else None
            y_events = [np.empty((0, y0.size))] if events else None
            sol = staticmethod(lambda tt: y0.copy())
            success = True
        return _Still()
    rhs = _rhs42 if with_stm else _rhs6
    try:
        sol = solve_ivp(rhs, t_span, y0, method="DOP853", args=(sys.mu,),
                        rtol=tol, atol=tol, dense_output=True,
                        t_eval=t_eval, events=events)
    except PropagationError:
        raise
    if not sol.success:
        last = sol.t[-1] if sol.t.size else t_span[0]
        raise PropagationError(f"propagation failed: {sol.message}", last_time=last)
    return sol


# ---------------------------------------------------------------------------
# Differential correction and family continuation
# ---------------------------------------------------------------------------


def _plane_crossing_event(vy0):
    def crossing(t, y, mu):
        return y[1]
    crossing.terminal = True
    crossing.direction = 1.0 if vy0 < 0 else -1.0
    return crossing


def _propagate_half(y0, sys, tol):
    """Propagate an x-z plane state to its next plane crossing, with STM."""
    aug = np.concatenate([y0, np.eye(6).ravel()])
    ev = _plane_crossing_event(y0[4])
    sol = integrate(aug, (0.0, 8.0), sys, tol=tol, events=[ev], with_stm=True)
    if len(sol.t_events[0]) == 0:
        raise CorrectionError("no symmetry-plane crossing found")
    t_half = sol.t_events[0][0]
    yf = sol.y_events[0][0]
    return t_half, yf[:6], yf[6:].reshape(6, 6)


def correct_planar(y0, sys: Cr3bpSystem, tol=1e-11, res_tol=1e-11, max_iter=25):
    """Correct a planar symmetric orbit: fixed x0, free vy0.

    Newton steps are clamped; the saddle component near the collinear
    point makes full steps overshoot from rough guesses.
    """
    y0 = np.array(y0, dtype=float)
    res = None
    for _ in range(max_iter):
        t_half, yf, phi = _propagate_half(y0, sys, tol)
        res = yf[3]
        if abs(res) < res_tol:
            return y0, 2.0 * t_half
        f = _rhs6(0.0, yf, sys.mu)
        jac = phi[3, 4] - f[3] / yf[4] * phi[1, 4]
        step = -res / jac
        cap = 0.2 * abs(y0[4]) + 1e-6
        if abs(step) > cap:
            step = math.copysign(cap, step)
        y0[4] += step
    raise CorrectionError("planar correction diverged", residual=res)


def correct_halo(y0, sys: Cr3bpSystem, fixed: str = "z",
                 tol=1e-11, res_tol=1e-11, max_iter=25, max_delta=0.1):
    """Single-shooting correction of a symmetric 3D orbit.

    The state lies on the x-z plane; the free pair ((x0, vy0) with z0
    held, or (z0, vy0) with x0 held) is adjusted until the half-period
    crossing is perpendicular (vx = vz = 0 there).  `max_delta` bounds
    each Newton step to keep the iteration on the intended branch.

    Returns:
        (corrected state vector, period, half-period crossing state)
    """
    y0 = np.array(y0, dtype=float)
    if abs(y0[1]) > 1e-12 or abs(y0[3]) > 1e-12 or abs(y0[5]) > 1e-12:
        raise ValueError("guess must lie on the x-z plane with vx = vz = 0")
    cols = (0, 4) if fixed == "z" else (2, 4)
    res_norm = None
    for _ in range(max_iter):
        t_half, yf, phi = _propagate_half(y0, sys, tol)
        res = np.array([yf[3], yf[5]])
        res_norm = float(np.max(np.abs(res)))
        if res_norm < res_tol:
            return y0, 2.0 * t_half, yf
        f = _rhs6(0.0, yf, sys.mu)
        jac = np.empty((2, 2))
        for j, c in enumerate(cols):
            jac[0, j] = phi[3, c] - f[3] / yf[4] * phi[1, c]
            jac[1, j] = phi[5, c] - f[5] / yf[4] * phi[1, c]
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise CorrectionError(f"singular correction matrix: {exc}", residual=res_norm)
        if np.max(np.abs(delta)) > max_delta:
            delta *= max_delta / np.max(np.abs(delta))
        y0[cols[0]] += delta[0]
        y0[cols[1]] += delta[1]
    raise CorrectionError("halo correction diverged", residual=res_norm)


def _plane_state(u):
    """(x0, z0, vy0) triple to a full x-z plane crossing state."""
    return np.array([u[0], 0.0, u[1], 0.0, u[2], 0.0])


def _family_jacobian(yf, phi, mu):
    """d(vx_f, vz_f)/d(x0, z0, vy0) with the crossing time eliminated."""
    f = _rhs6(0.0, yf, mu)
    jac = np.empty((2, 3))
    for j, c in enumerate((0, 2, 4)):
        jac[0, j] = phi[3, c] - f[3] / yf[4] * phi[1, c]
        jac[1, j] = phi[5, c] - f[5] / yf[4] * phi[1, c]
    return jac


def _family_tangent(yf, phi, mu, orient):
    """Unit tangent of the symmetric-orbit family, oriented along `orient`."""
    jac = _family_jacobian(yf, phi, mu)
    _, _, vh = np.linalg.svd(jac)
    t = vh[-1]
    return -t if t @ orient < 0 else t


def _palc_correct(u_guess, tangent, u_anchor, ds, sys, tol, res_tol,
                  max_iter=12, max_delta=0.05):
    """Pseudo-arclength Newton step: perpendicular crossing constraints
    plus the plane (u - u_anchor) . tangent = ds.

    Robust through folds of the family in any single coordinate.
    """
    u = np.asarray(u_guess, dtype=float).copy()
    res_norm = None
    for _ in range(max_iter):
        t_half, yf, phi = _propagate_half(_plane_state(u), sys, tol)
        res = np.array([yf[3], yf[5], (u - u_anchor) @ tangent - ds])
        res_norm = max(abs(res[0]), abs(res[1]))
        if res_norm < res_tol and abs(res[2]) < 1e-9:
            return u, 2.0 * t_half, yf, phi
        jac = np.vstack([_family_jacobian(yf, phi, sys.mu), tangent])
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise CorrectionError(f"singular family step: {exc}", residual=res_norm)
        if np.max(np.abs(delta)) > max_delta:
            delta *= max_delta / np.max(np.abs(delta))
        u += delta
    raise CorrectionError("family-step correction diverged", residual=res_norm)


def _out_of_plane_stability(y0, period, sys, tol=1e-10):
    """Half-trace of the (z, vz) monodromy block of a planar orbit."""
    aug = np.concatenate([y0, np.eye(6).ravel()])
    sol = integrate(aug, (0.0, period), sys, tol=tol, with_stm=True)
    phi = sol.y[6:, -1].reshape(6, 6)
    return 0.5 * (phi[2, 2] + phi[5, 5])


def _linear_lyapunov_seed(sys, amplitude):
    """Small planar oscillation about L2 from the linearized dynamics."""
    xl2 = libration_point(sys, 2)[0]
    mu = sys.mu
    r1 = abs(xl2 + mu)
    r2 = abs(xl2 - 1.0 + mu)
    c2 = (1.0 - mu) / r1**3 + mu / r2**3
    # center (oscillatory) in-plane frequency of the linearized dynamics
    omega = math.sqrt((2.0 - c2 + math.sqrt(9.0 * c2 * c2 - 8.0 * c2)) / 2.0)
    k = (omega * omega + 1.0 + 2.0 * c2) / (2.0 * omega)
    return np.array([xl2 - amplitude, 0.0, 0.0, 0.0, k * omega * amplitude, 0.0])


def correct_nrho(guess, sys: Cr3bpSystem, tol: float = 1e-12,
                 n_theta: int = 360, n_samples: int = 4096) -> "OrbitSolution":
    """Differentially correct a halo guess and package the periodic orbit.

    The guess must lie on the x-z symmetry plane; (z0, vy0) are adjusted
    for a perpendicular half-period crossing, then the orbit is
    propagated densely for one period and the phase profiles extracted.
    """
    y0 = _as_vector(guess)
    corrected, period, _ = correct_halo(y0, sys, fixed="x", tol=tol, res_tol=1e-11)
    return _assemble_orbit(corrected, period, sys, tol, n_theta, n_samples)


def build_gateway_orbit(sys: Cr3bpSystem | None = None,
                        target_perilune_km: float = 3371.0,
                        tol: float = 1e-12,
                        n_theta: int = 360,
                        n_samples: int = 4096,
                        southern: bool = True) -> "OrbitSolution":
    """Construct the near-rectilinear reference orbit by family continuation.

    Pipeline: seed a small planar oscillation at L2, grow it until the
    out-of-plane stability index signals the halo bifurcation, step off
    into the (southern by default) halo branch, then follow the family by
    pseudo-arclength until the perilune radius hits the target, finishing
    with a tight correction re-anchored at apolune.
    """
    sys = sys or Cr3bpSystem.earth_moon()
    coarse = 1e-9

    # planar family up to the out-of-plane bifurcation, grown from a
    # near-linear seed with predicted vy0 at each step
    y0, period = correct_planar(_linear_lyapunov_seed(sys, 5e-4), sys,
                                tol=coarse, res_tol=1e-10)
    members = [(y0.copy(), period, _out_of_plane_stability(y0, period, sys, 1e-9))]
    step = 0.002
    x_bif = None
    for _ in range(120):
        y_try = members[-1][0].copy()
        y_try[0] -= step
        if len(members) >= 2:
            ya, yb = members[-2][0], members[-1][0]
            if abs(yb[0] - ya[0]) > 1e-14:
                frac = (y_try[0] - yb[0]) / (yb[0] - ya[0])
                y_try[4] = yb[4] + frac * (yb[4] - ya[4])
        try:
            y_try, period = correct_planar(y_try, sys, tol=coarse, res_tol=1e-10)
        except CorrectionError:
            step *= 0.5
            if step < 1e-5:
                raise
            continue
        nu = _out_of_plane_stability(y_try, period, sys, 1e-9)
        if (members[-1][2] - 1.0) * (nu - 1.0) < 0:
            xa, na = members[-1][0][0], members[-1][2]
            x_bif = y_try[0] + (nu - 1.0) * (xa - y_try[0]) / (nu - na)
            members.append((y_try.copy(), period, nu))
            break
        members.append((y_try.copy(), period, nu))
        step = min(step * 1.4, 0.008)
    if x_bif is None:
        raise CorrectionError("halo bifurcation not found along the planar family")

    ya, yb = members[-2][0], members[-1][0]
    seed = yb.copy()
    seed[0] = x_bif
    if abs(yb[0] - ya[0]) > 1e-14:
        seed[4] = yb[4] + (x_bif - yb[0]) / (yb[0] - ya[0]) * (yb[4] - ya[4])
    seed, period = correct_planar(seed, sys, tol=coarse, res_tol=1e-10)

    # step off into the halo branch; the anchor crossing of this branch
    # evolves into the perilune.  The family folds both in z0 and (near
    # the rectilinear end) in x0, so it is followed by pseudo-arclength
    # continuation in (x0, z0, vy0) until the anchor radius reaches the
    # target perilune radius.
    z_sign = -1.0 if southern else 1.0
    member = seed.copy()
    member[2] = z_sign * 0.012
    member, period, _ = correct_halo(member, sys, fixed="z", tol=coarse, res_tol=5e-10)

    def anchor_radius_km(u):
        rel = np.array([u[0], 0.0, u[1]]) - sys.moon_position
        return float(np.linalg.norm(rel)) * sys.length_unit

    u = np.array([member[0], member[2], member[4]])
    t_half, yf, phi = _propagate_half(_plane_state(u), sys, coarse)
    period_prev = 2.0 * t_half
    tangent = _family_tangent(yf, phi, sys.mu, orient=np.array([0.0, z_sign, 0.0]))
    rp_prev = anchor_radius_km(u)

    ds = 0.01
    max_ds = 0.05
    bracket = None
    for _ in range(400):
        try:
            u_new, period, yf_new, phi_new = _palc_correct(
                u + ds * tangent, tangent, u, ds, sys, coarse, res_tol=2e-9)
        except CorrectionError:
            ds *= 0.5
            if ds < 1e-6:
                raise
            continue
        if abs(period / period_prev - 1.0) > 0.25:
            ds *= 0.5
            if ds < 1e-6:
                raise CorrectionError("continuation lost the halo branch")
            continue
        rp = anchor_radius_km(u_new)
        if rp <= target_perilune_km:
            bracket = (u.copy(), tangent.copy(), rp_prev, ds, rp)
            break
        tangent = _family_tangent(yf_new, phi_new, sys.mu, orient=tangent)
        u, period_prev, rp_prev = u_new, period, rp
        ds = min(ds * 1.3, max_ds)
    if bracket is None:
        raise CorrectionError("continuation did not reach the target perilune radius")

    # secant on the arclength within the bracketing interval
    u_base, t_base, rp_lo_val, ds_hi, rp_hi_val = bracket
    s_lo, rp_lo = 0.0, rp_lo_val
    s_hi, rp_hi = ds_hi, rp_hi_val
    u_final = None
    for _ in range(15):
        s_new = s_hi + (target_perilune_km - rp_hi) * (s_lo - s_hi) / (rp_lo - rp_hi)
        u_try, period, _, _ = _palc_correct(
            u_base + s_new * t_base, t_base, u_base, s_new, sys, coarse, res_tol=2e-9)
        rp = anchor_radius_km(u_try)
        u_final = u_try
        if abs(rp - target_perilune_km) < 0.5:
            break
        s_lo, rp_lo, s_hi, rp_hi = s_hi, rp_hi, s_new, rp
    if u_final is None:
        raise CorrectionError("perilune targeting failed")

    # final polish at the requested tolerance on the member's own
    # tangent hyperplane (nonsingular at folds), then re-anchor the
    # orbit at apolune: the perpendicular half-period crossing
    u_final, period, crossing, _ = _palc_correct(
        u_final, t_base, u_final, 0.0, sys, tol, res_tol=1e-11)
    apolune = crossing.copy()
    apolune[1] = 0.0
    apolune[3] = 0.0
    apolune[5] = 0.0
    return _assemble_orbit(apolune, period, sys, tol, n_theta, n_samples)


# ---------------------------------------------------------------------------
# Orbit packaging: phase map, profiles, dwell weight
# ---------------------------------------------------------------------------


@dataclass
class OrbitSolution:
    """Periodic reference orbit with its phase-indexed profiles.

    theta runs over [0, 2pi) with apolune at 0 and perilune at pi.  The
    stored d_earth profile is the relay-link distance model: a cosine
    interpolation between the collinear extremes d_EM + r_a (apolune) and
    d_EM - r_p (perilune), the convention relay budgets are quoted in,
    not the instantaneous rotating-frame Earth range.
    """

    sys: Cr3bpSystem
    states: np.ndarray            # (7, n): canonical time row + 6 state rows
    period: float                 # s
    perilune_radius_km: float
    apolune_radius_km: float
    theta_grid: np.ndarray        # (n_theta,) radians, theta_grid[0] = 0
    r_km: np.ndarray              # selenocentric radius at theta_grid
    v_gw_mps: np.ndarray          # selenocentric speed at theta_grid, m/s
    d_earth_km: np.ndarray        # relay-model Earth distance at theta_grid
    dwell_w: np.ndarray           # exact dwell weight, integrates to 1 over theta
    period_canonical: float
    _dense: object = field(repr=False, default=None)
    _theta_of_t: np.ndarray = field(repr=False, default=None)   # (2, m) t, theta
    content_hash: str = ""

    # -- canonical-time internals ------------------------------------------

    def _state_at(self, t_canonical):
        t = np.mod(t_canonical, self.period_canonical)
        return self._dense.sol(t)

    def _phase_at(self, t_canonical):
        t = np.mod(t_canonical, self.period_canonical)
        return np.interp(t, self._theta_of_t[0], self._theta_of_t[1])

    def _time_of_phase(self, theta):
        theta = np.mod(theta, 2.0 * math.pi)
        return np.interp(theta, self._theta_of_t[1], self._theta_of_t[0])

    # -- public surface (seconds / km / m/s) --------------------------------

    def phase_of(self, t_seconds):
        """Orbit phase in [0, 2pi) at time t (seconds past apolune)."""
        return self._phase_at(np.asarray(t_seconds) / self.sys.time_unit)

    def time_of_phase(self, theta):
        """Seconds past apolune at which phase theta is reached."""
        return self._time_of_phase(theta) * self.sys.time_unit

    def v_gw(self, theta):
        return _periodic_interp(theta, self.theta_grid, self.v_gw_mps)

    def r(self, theta):
        return _periodic_interp(theta, self.theta_grid, self.r_km)

    def d_earth(self, theta):
        return _periodic_interp(theta, self.theta_grid, self.d_earth_km)

    def to_csv(self, path):
        from .artifacts import write_csv
        scalars = {
            "mu": self.sys.mu,
            "length_unit_km": self.sys.length_unit,
            "time_unit_s": self.sys.time_unit,
            "period_s": self.period,
            "perilune_radius_km": self.perilune_radius_km,
            "apolune_radius_km": self.apolune_radius_km,
            "content_hash": self.content_hash,
        }
        header = ["theta_rad", "r_km", "v_gw_mps", "d_earth_km", "dwell_weight_per_rad"]
        rows = zip(self.theta_grid, self.r_km, self.v_gw_mps, self.d_earth_km, self.dwell_w)
        write_csv(path, header, rows, comments=scalars)


def _periodic_interp(theta, grid, values):
    theta = np.mod(np.asarray(theta, dtype=float), 2.0 * math.pi)
    gx = np.concatenate([grid, [2.0 * math.pi]])
    gy = np.concatenate([values, [values[0]]])
    out = np.interp(theta, gx, gy)
    return float(out) if out.ndim == 0 else out


def _selenocentric_velocity(states, sys):
    """Inertial-equivalent velocity relative to the Moon, canonical units."""
    rel = states[:3] - sys.moon_position[:, None]
    v = states[3:6].copy()
    v[0] -= rel[1]
    v[1] += rel[0]
    return v


def orbit_content_hash(sys: Cr3bpSystem, target_perilune_km: float, tol: float) -> str:
    """Cache key over the quantities that determine the corrected orbit."""
    text = f"mu={sys.mu!r};lu={sys.length_unit!r};tu={sys.time_unit!r};" \
           f"rp={target_perilune_km!r};tol={tol!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _assemble_orbit(y0, period, sys, tol, n_theta, n_samples) -> OrbitSolution:
    times = np.linspace(0.0, period, n_samples, endpoint=False)
    sol = integrate(y0, (0.0, period * 1.0000001), sys, tol=tol, t_eval=times)
    states = sol.y

    rel = states[:3] - sys.moon_position[:, None]
    radii = np.linalg.norm(rel, axis=0)
    i_apo = int(np.argmax(radii))
    if i_apo != 0:
        raise CorrectionError("orbit anchor is not apolune; wrong family branch")

    # perilune: symmetric crossing at half period
    half = _state_at_dense(sol, period / 2.0)
    r_peri = float(np.linalg.norm(half[:3] - sys.moon_position))
    r_apo = float(radii[0])
    if r_peri >= r_apo:
        raise CorrectionError("half-period crossing is not the close approach")

    # mean orbit plane and swept angle
    v_sel = _selenocentric_velocity(states, sys)
    h = np.cross(rel.T, v_sel.T).mean(axis=0)
    e3 = h / np.linalg.norm(h)
    e1 = rel[:, 0] - np.dot(rel[:, 0], e3) * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    phi = np.unwrap(np.arctan2(rel.T @ e2, rel.T @ e1))
    phi -= phi[0]
    if phi[-1] < 0:      # enforce positive sweep
        phi = -phi
    dphi = np.diff(phi)
    if np.any(dphi <= 0):
        raise CorrectionError("phase sweep is not monotone; degenerate orbit plane")

    phi_peri = float(np.interp(period / 2.0, times, phi))
    two_pi = 2.0 * math.pi
    theta = np.where(phi <= phi_peri,
                     math.pi * phi / phi_peri,
                     math.pi + math.pi * (phi - phi_peri) / (two_pi - phi_peri))

    theta_grid = np.arange(n_theta) * two_pi / n_theta
    # invert theta(t); extend periodically for edge bins
    t_ext = np.concatenate([times - period, times, times + period])
    th_ext = np.concatenate([theta - two_pi, theta, theta + two_pi])
    t_of = np.interp(theta_grid, th_ext, t_ext)

    grid_states = sol.sol(np.mod(t_of, period))
    grid_rel = grid_states[:3] - sys.moon_position[:, None]
    r_grid_km = np.linalg.norm(grid_rel, axis=0) * sys.length_unit
    v_grid = _selenocentric_velocity(grid_states, sys)
    v_gw_mps = np.linalg.norm(v_grid, axis=0) * sys.velocity_unit * 1000.0

    # exact dwell weight: time spent per theta bin
    d_theta = two_pi / n_theta
    edges = (np.arange(n_theta + 1) - 0.5) * d_theta
    t_edges = np.interp(edges, th_ext, t_ext)
    w = np.diff(t_edges) / period / d_theta

    # relay-geometry Earth distance: cosine interpolation between the
    # collinear apolune/perilune anchors
    d_em = sys.length_unit
    rp_km = r_peri * sys.length_unit
    ra_km = r_apo * sys.length_unit
    d_earth_km = d_em + (ra_km - rp_km) / 2.0 + (ra_km + rp_km) / 2.0 * np.cos(theta_grid)

    return OrbitSolution(
        sys=sys,
        states=np.vstack([times, states]),
        period=period * sys.time_unit,
        perilune_radius_km=rp_km,
        apolune_radius_km=ra_km,
        theta_grid=theta_grid,
        r_km=r_grid_km,
        v_gw_mps=v_gw_mps,
        d_earth_km=d_earth_km,
        dwell_w=w,
        period_canonical=period,
        _dense=sol,
        _theta_of_t=np.vstack([times, theta]),
        content_hash=orbit_content_hash(sys, rp_km, tol),
    )


def _state_at_dense(sol, t):
    return sol.sol(t)


def dwell_weight(orbit: OrbitSolution) -> np.ndarray:
    """Exact normalized dwell weight per phase bin (integrates to 1)."""
    return orbit.dwell_w.copy()


def dwell_weight_r2_proxy(orbit: OrbitSolution) -> np.ndarray:
    """The r(theta)^2 approximation of the dwell weight, same normalization."""
    w = orbit.r_km**2
    d_theta = 2.0 * math.pi / orbit.theta_grid.size
    return w / (w.sum() * d_theta)


def keplerian_speed_profile(orbit: OrbitSolution) -> np.ndarray:
    """Speed of the naive two-body stand-in orbit at the same time phase, m/s.

    A Kepler ellipse about the Moon with the same (r_p, r_a), started at
    apoapsis together with the reference orbit and swept by its own
    dynamics (its period differs), evaluated at the epochs of the phase
    grid.  Used as a cross-check: the timing mismatch makes this profile
    depart from the true one by large factors away from apolune.
    """
    sys = orbit.sys
    mu_moon_km = sys.mu * sys.length_unit**3 / sys.time_unit**2   # km^3/s^2
    rp, ra = orbit.perilune_radius_km, orbit.apolune_radius_km
    a = (rp + ra) / 2.0
    ecc = (ra - rp) / (ra + rp)
    n = math.sqrt(mu_moon_km / a**3)          # rad/s

    t = orbit._theta_of_t[0] * sys.time_unit
    t_grid = np.interp(orbit.theta_grid, orbit._theta_of_t[1], orbit._theta_of_t[0])
    t_grid = t_grid * sys.time_unit
    mean_anom = np.mod(n * t_grid + math.pi, 2.0 * math.pi)   # apoapsis start

    e_anom = mean_anom.copy()
    for _ in range(60):                        # Kepler equation, Newton
        f = e_anom - ecc * np.sin(e_anom) - mean_anom
        e_anom = e_anom - f / (1.0 - ecc * np.cos(e_anom))
    r = a * (1.0 - ecc * np.cos(e_anom))
    v2 = mu_moon_km * (2.0 / r - 1.0 / a)
    return np.sqrt(np.maximum(v2, 0.0)) * 1e3


# ---------------------------------------------------------------------------
# Separation campaign
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationEvent:
    """One debris release: orbit phase, thrust direction, speed increment."""

    separation_phase: float     # theta, rad
    direction: str              # "V", "N" or "B"
    delta_v: float              # m/s

    def __post_init__(self):
        if self.delta_v <= 0:
            raise ValueError("delta_v must be positive")
        if self.direction not in ("V", "N", "B"):
            raise ValueError("direction must be one of V, N, B")


def default_separation_events(deltavs=(1.0, 5.0), n_phases: int = 24,
                              directions=("V", "N", "B")) -> list[SeparationEvent]:
    """The standard release grid: phases x VNB directions x delta-v levels."""
    events = []
    for dv in deltavs:
        for d in directions:
            for i in range(n_phases):
                events.append(SeparationEvent(
                    separation_phase=2.0 * math.pi * i / n_phases,
                    direction=d, delta_v=float(dv)))
    return events


@dataclass(frozen=True)
class Encounter:
    event_index: int
    time_s: float
    phase: float
    v_rel_mps: float
    distance_km: float


@dataclass
class EncounterProfile:
    """Per-phase debris encounter statistics aggregated over a campaign."""

    theta_grid: np.ndarray                  # bin centers, rad
    v_rel_percentiles: dict                 # {5,25,50,75,95,"max"} -> arrays (NaN if empty)
    density: np.ndarray                     # encounters per bin, smoothed, max = 1
    dwell_weight: np.ndarray                # exact orbit dwell weight on this grid
    encounters: list
    flagged_events: list
    n_events: int

    def percentile_on(self, which, theta_grid) -> np.ndarray:
        """Percentile profile resampled to another grid, NaN bins filled
        by periodic linear interpolation."""
        vals = np.asarray(self.v_rel_percentiles[which], dtype=float)
        good = np.isfinite(vals)
        if not good.any():
            raise ValueError("campaign produced no encounters")
        src_th = self.theta_grid[good]
        src_v = vals[good]
        gx = np.concatenate([src_th - 2.0 * math.pi, src_th, src_th + 2.0 * math.pi])
        gy = np.tile(src_v, 3)
        return np.interp(np.mod(theta_grid, 2.0 * math.pi), gx, gy)

    def density_on(self, theta_grid) -> np.ndarray:
        return _periodic_interp(theta_grid, self.theta_grid, self.density)

    def to_csv(self, path):
        from .artifacts import write_csv
        header = (["theta_rad", "density", "dwell_weight_per_rad"]
                  + [f"v_rel_p{q}_mps" for q in (5, 25, 50, 75, 95)] + ["v_rel_max_mps"])
        cols = [self.theta_grid, self.density, self.dwell_weight]
        cols += [self.v_rel_percentiles[q] for q in (5, 25, 50, 75, 95)]
        cols += [self.v_rel_percentiles["max"]]
        flagged = ";".join(f"{i}:{reason}" for i, reason in self.flagged_events)
        write_csv(path, header, zip(*cols),
                  comments={"n_events": self.n_events,
                            "n_encounters": len(self.encounters),
                            "flagged_events": flagged or "none"})


def _escape_event(t, y, mu):
    return y[0] * y[0] + y[1] * y[1] + y[2] * y[2] - 4.0   # barycentric r > 2
_escape_event.terminal = True
_escape_event.direction = 1.0


def _impact_event_factory(sys):
    r_moon = MOON_RADIUS_KM / sys.length_unit
    moon_x = 1.0 - sys.mu

    def impact(t, y, mu):
        dx = y[0] - moon_x
        return dx * dx + y[1] * y[1] + y[2] * y[2] - r_moon * r_moon
    impact.terminal = True
    impact.direction = -1.0
    return impact


def _vnb_triad(state, sys):
    """Velocity / normal / binormal unit vectors at a rotating-frame state."""
    rel = state[:3] - sys.moon_position
    v_sel = state[3:6] + np.array([-rel[1], rel[0], 0.0])
    v_hat = v_sel / np.linalg.norm(v_sel)
    h = np.cross(rel, v_sel)
    b_hat = h / np.linalg.norm(h)
    n_hat = np.cross(b_hat, v_hat)
    return {"V": v_hat, "N": n_hat, "B": b_hat}


def _propagate_event(orbit: OrbitSolution, event: SeparationEvent, index: int,
                     horizon_days: float, recontact_radius_km: float, tol: float):
    """Propagate one release and extract all close-approach minima.

    Returns (encounters, flagged_reason_or_None).
    """
    sys = orbit.sys
    t_sep = orbit._time_of_phase(event.separation_phase)
    gw0 = orbit._state_at(t_sep)
    triad = _vnb_triad(gw0, sys)
    dv_canonical = event.delta_v / 1000.0 / sys.velocity_unit
    y0 = gw0.copy()
    y0[3:6] += dv_canonical * triad[event.direction]

    horizon = horizon_days * 86400.0 / sys.time_unit
    dt = 2e-4          # ~75 s: resolves fast shallow sphere crossings
    t_eval = np.arange(t_sep, t_sep + horizon, dt)
    impact = _impact_event_factory(sys)
    sol = integrate(y0, (t_sep, t_sep + horizon), sys, tol=tol,
                    t_eval=t_eval, events=[_escape_event, impact])
    if len(sol.t_events[0]) > 0:
        return [], "escape"
    if len(sol.t_events[1]) > 0:
        return [], "lunar_impact"

    td = sol.t
    gw = orbit._state_at(td)
    diff = sol.y[:3] - gw[:3]
    dist = np.linalg.norm(diff, axis=0)

    # The debris starts inside the keep-out sphere and must first depart:
    # encounters are armed once it has cleared twice the radius (so the
    # initial co-departure cannot register), after which every local
    # minimum of the separation below the radius counts as a recontact.
    radius_c = recontact_radius_km / sys.length_unit
    cleared = np.nonzero(dist > 2.0 * radius_c)[0]
    if cleared.size == 0:
        return [], None
    i_arm = int(cleared[0])

    interior = (dist[1:-1] < dist[:-2]) & (dist[1:-1] <= dist[2:]) \
        & (dist[1:-1] < 1.2 * radius_c)
    candidates = np.nonzero(interior)[0] + 1
    candidates = candidates[candidates > i_arm]

    def exact_distance(t):
        yd = sol.sol(t)
        yg = orbit._state_at(t)
        return float(np.linalg.norm(yd[:3] - yg[:3]))

    encounters = []
    seen = set()
    for i in candidates:
        res = minimize_scalar(exact_distance, bounds=(td[i - 1], td[i + 1]),
                              method="bounded", options={"xatol": 1e-10})
        t_min = float(res.x)
        key = round(t_min / dt)
        if key in seen:
            continue
        seen.add(key)
        d_min = float(res.fun)
        if d_min >= radius_c:
            continue
        yd = sol.sol(t_min)
        yg = orbit._state_at(t_min)
        drel = yd[:3] - yg[:3]
        vrel = yd[3:6] - yg[3:6] + np.array([-drel[1], drel[0], 0.0])
        encounters.append(Encounter(
            event_index=index,
            time_s=(t_min - t_sep) * sys.time_unit,
            phase=float(orbit._phase_at(t_min)),
            v_rel_mps=float(np.linalg.norm(vrel)) * sys.velocity_unit * 1000.0,
            distance_km=d_min * sys.length_unit,
        ))
    return encounters, None


def _event_worker(args):
    return _propagate_event(*args)


def run_separation_campaign(orbit: OrbitSolution,
                            events: list[SeparationEvent] | None = None,
                            horizon_days: float = 40.0,
                            recontact_radius_km: float = 100.0,
                            tol: float = 1e-12,
                            n_theta_bins: int = 72,
                            smooth_bins: int = 3,
                            workers: int = 1) -> EncounterProfile:
    """Propagate every release and aggregate re-entries of the keep-out
    sphere by orbit phase.

    The default recontact radius is the 100 km station keep-out sphere.
    Each event is independent; with workers > 1 they run in a process
    pool, and results are always reduced in event-index order so the
    output is bit-identical regardless of scheduling.
    """
    if not 30.0 <= horizon_days <= 45.0:
        raise ValueError("horizon must be within [30, 45] days")
    if recontact_radius_km <= 0:
        raise ValueError("recontact radius must be positive")
    events = default_separation_events() if events is None else list(events)

    jobs = [(orbit, ev, i, horizon_days, recontact_radius_km, tol)
            for i, ev in enumerate(events)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_event_worker, jobs, chunksize=4))
    else:
        results = [_event_worker(j) for j in jobs]

    encounters = []
    flagged = []
    for i, (encs, flag) in enumerate(results):     # results already index-ordered
        encounters.extend(encs)
        if flag is not None:
            flagged.append((i, flag))

    return _aggregate_profile(orbit, events, encounters, flagged, n_theta_bins, smooth_bins)


def _aggregate_profile(orbit, events, encounters, flagged, n_bins, smooth_bins):
    two_pi = 2.0 * math.pi
    d_theta = two_pi / n_bins
    centers = (np.arange(n_bins) + 0.5) * d_theta

    phases = np.array([e.phase for e in encounters])
    vels = np.array([e.v_rel_mps for e in encounters])
    bins = np.minimum((phases // d_theta).astype(int), n_bins - 1) if len(encounters) else np.array([], int)

    qs = (5, 25, 50, 75, 95)
    pct = {q: np.full(n_bins, np.nan) for q in qs}
    pct["max"] = np.full(n_bins, np.nan)
    counts = np.zeros(n_bins)
    for b in range(n_bins):
        sel = vels[bins == b]
        counts[b] = sel.size
        if sel.size:
            for q in qs:
                pct[q][b] = np.percentile(sel, q)
            pct["max"][b] = sel.max()

    if counts.max() > 0:
        kernel = np.ones(smooth_bins) / smooth_bins
        smoothed = np.convolve(np.tile(counts, 3), kernel, mode="same")[n_bins:2 * n_bins]
        density = smoothed / smoothed.max()
    else:
        density = counts

    # exact dwell weight resampled onto the campaign grid, renormalized
    w = _periodic_interp(centers, orbit.theta_grid, orbit.dwell_w)
    w = w / (w.sum() * d_theta)

    return EncounterProfile(
        theta_grid=centers,
        v_rel_percentiles=pct,
        density=density,
        dwell_weight=w,
        encounters=encounters,
        flagged_events=flagged,
        n_events=len(events),
    )
