"""Window optimization, sliding and pose prediction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Diverged, IndefiniteSystem
from ..imu import GravityParams, ImuCalibration
from ..spline import derive_lin_p, eval_position, eval_rotation
from ..types import PoseObservation
from .init import initialize_spline
from .kkt import marginalize, solve_constrained_step
from .problem import Layout, build_window_problem, evaluate
from .state import KF_DIM, ImuSegment, KeyframeState, MarginalPrior, SolverConfig, WindowState


@dataclass
class OptimizationReport:
    iterations: int = 0
    converged: bool = False
    energy_initial: float = float("nan")
    energy_final: float = float("nan")
    constraint_max: float = float("nan")
    merit_history: list = field(default_factory=list)
    rejected_steps: int = 0
    reason: str = ""


def apply_increment(state: WindowState, layout: Layout, dx_active) -> WindowState:
    """Retract an active-space increment: log-scale, additive angles and vectors, right-multiplied rotations."""
    dx = np.zeros(layout.full_dim)
    dx[layout.active] = dx_active
    out = state.copy()
    out.scale = state.scale * float(np.exp(dx[0]))
    out.gravity = GravityParams(state.gravity.roll + dx[1], state.gravity.pitch + dx[2])
    out.keyframes = [kf.retract(dx[layout.block(kf.kid)]) for kf in state.keyframes]
    return out


def _bias_ok(state: WindowState, bound: float):
    return all(np.linalg.norm(kf.bias.accel_bias) < bound and np.linalg.norm(kf.bias.gyro_bias) < bound
               for kf in state.keyframes)


def optimize_window(state: WindowState, segments: dict, cfg: SolverConfig, calib: ImuCalibration):
    """Damped equality-constrained Gauss-Newton on the window.

    Steps are accepted on an l1 merit ``E + rho |c|_1``; rejected steps raise
    the damping tenfold. Returns ``(state, report)``.
    """
    report = OptimizationReport()
    energy, _, c = evaluate(state, segments, cfg, calib)
    report.energy_initial = energy
    mu = cfg.initial_damping
    rho = 0.0
    for it in range(cfg.max_iterations):
        prob = build_window_problem(state, segments, cfg, calib)
        energy, c = prob.energy, prob.c
        diag = np.diag(prob.H)
        floor = 1e-12 * max(float(np.max(diag)), 1.0)
        accepted = False
        for _ in range(cfg.max_damping_retries):
            try:
                dx, nu = solve_constrained_step(prob.H, prob.b, prob.A, prob.c, mu * np.maximum(diag, floor))
            except IndefiniteSystem:
                mu *= cfg.damping_factor
                report.rejected_steps += 1
                continue
            rho = max(rho, 2.0 * float(np.max(np.abs(nu), initial=0.0)))
            merit0 = energy + rho * float(np.sum(np.abs(c)))
            cand = apply_increment(state, prob.layout, dx)
            if _bias_ok(cand, cfg.bias_bound):
                e1, _, c1 = evaluate(cand, segments, cfg, calib)
                merit1 = e1 + rho * float(np.sum(np.abs(c1)))
                if merit1 <= merit0 + 1e-12 * abs(merit0) + 1e-300:
                    accepted = True
                    break
            mu *= cfg.damping_factor
            report.rejected_steps += 1
        report.iterations = it + 1
        if not accepted:
            if np.max(np.abs(c), initial=0.0) < cfg.constraint_tol * 100 and np.max(np.abs(dx)) < 1e-6:
                report.converged = True
                report.reason = "no further decrease"
                break
            raise Diverged(f"energy increased across all damping retries at iteration {it + 1}",
                           keyframe_index=state.keyframes[-1].kid)
        report.merit_history.append((merit0, merit1))
        state = cand
        state.multipliers = {key: nu[3 * k:3 * k + 3] for k, key in enumerate(prob.constraint_keys)}
        mu = max(mu / cfg.damping_factor ** 2, cfg.min_damping)
        cmax = float(np.max(np.abs(c1), initial=0.0))
        small_step = float(np.max(np.abs(dx), initial=0.0)) < cfg.step_tol
        small_change = abs(energy - e1) <= cfg.energy_rtol * max(energy, 1e-300)
        if (small_step or small_change) and cmax < cfg.constraint_tol:
            report.converged = True
            report.reason = "step" if small_step else "energy"
            break
    energy, _, c = evaluate(state, segments, cfg, calib)
    report.energy_final = energy
    report.constraint_max = float(np.max(np.abs(c), initial=0.0))
    if not report.converged:
        report.reason = "max iterations"
    return state, report


def marginalize_oldest(state: WindowState, segments: dict, cfg: SolverConfig, calib: ImuCalibration):
    """Drop the oldest keyframe, folding its terms and constraints into the prior.

    Returns the new state and the remaining segments (inputs are not mutated).
    """
    old = state.keyframes[0]
    prob = build_window_problem(state, segments, cfg, calib, involving=old.kid)
    layout = prob.layout
    full_drop = np.arange(layout.base[old.kid], layout.base[old.kid] + KF_DIM)
    drop = layout.position[full_drop]
    drop = drop[drop >= 0]
    Hp, gp, ep = marginalize(prob.H, prob.b, prob.energy, prob.A, prob.c, drop)
    keep_full = np.setdiff1d(layout.active, full_drop)
    nz = np.flatnonzero(np.any(Hp != 0.0, axis=1) | (gp != 0.0))
    out = state.copy()
    out.keyframes = state.keyframes[1:]
    out.fej = {k: v for k, v in state.fej.items() if old.kid not in k[1:]}
    out.multipliers = {}
    new_segments = {k: v for k, v in segments.items() if k != old.kid}
    if len(nz) == 0 and ep == 0.0:
        out.prior = None
        return out, new_segments
    slots = [layout.slot(i) for i in keep_full[nz]]
    kids = {k for k, _ in slots if k >= 0}
    out.prior = MarginalPrior(slots, Hp[np.ix_(nz, nz)], gp[nz], float(ep),
                              {kf.kid: kf.copy() for kf in out.keyframes if kf.kid in kids},
                              state.global_vector())
    return out, new_segments


def local_fit_coefficients(keyframes, observation: PoseObservation):
    """Spline coefficients for a new keyframe.

    With three or more keyframes, a cubic through the last three and the new
    pose; otherwise the newest segment's polynomial re-expanded at the new
    time.
    """
    if len(keyframes) >= 3:
        prev = keyframes[-3:]
        times = [kf.timestamp for kf in prev] + [observation.timestamp]
        positions = [kf.position for kf in prev] + [observation.position]
        rotations = [kf.rotation for kf in prev] + [observation.rotation]
        coeffs = initialize_spline(times, positions, rotations).local(3)
        coeffs.pop("lin_p")
        return coeffs
    last = keyframes[-1]
    tau = observation.timestamp - last.timestamp
    return {
        "lin_r": last.lin_r + 2 * last.quad_r * tau + 3 * last.cub_r * tau ** 2,
        "quad_r": last.quad_r + 3 * last.cub_r * tau,
        "cub_r": last.cub_r.copy(),
        "quad_p": last.quad_p + 3 * last.cub_p * tau,
        "cub_p": last.cub_p.copy(),
    }


def make_segment(timestamps, accel, gyro, t_prev_abs, t_kf) -> ImuSegment:
    return ImuSegment(np.asarray(timestamps, dtype=float) - t_kf, np.asarray(accel, dtype=float).reshape(-1, 3),
                      np.asarray(gyro, dtype=float).reshape(-1, 3), t_prev_abs - t_kf)


def add_keyframe(state: WindowState, segments: dict, observation: PoseObservation, imu_segment: ImuSegment,
                 guess: KeyframeState | None = None):
    """Append a keyframe initialized from its observation (or ``guess``)."""
    last = state.keyframes[-1]
    if guess is None:
        guess = KeyframeState(observation.timestamp, observation.position, observation.rotation,
                              last.bias.copy(), **local_fit_coefficients(state.keyframes, observation))
    guess.observation = observation
    out = state.copy()
    out.keyframes = state.keyframes + [guess]
    out.multipliers = {}
    new_segments = dict(segments)
    new_segments[guess.kid] = imu_segment
    return out, new_segments


def slide_window(state: WindowState, segments: dict, cfg: SolverConfig, calib: ImuCalibration,
                 observation: PoseObservation, imu_segment: ImuSegment, guess=None):
    """Marginalize the oldest keyframe when the window is full, then append a new one."""
    if len(state.keyframes) >= cfg.window_size:
        state, segments = marginalize_oldest(state, segments, cfg, calib)
    return add_keyframe(state, segments, observation, imu_segment, guess)


def predict_pose(state: WindowState, t_future: float):
    """Extrapolate the newest segment; returns ``(position, rotation)`` in the observation frame."""
    seg = state.segment(len(state.keyframes) - 1)
    lin_p = derive_lin_p(seg, state.keyframes[-2].position)
    t = t_future - seg.anchor_time
    return eval_position(seg, lin_p, t), eval_rotation(seg, t)
