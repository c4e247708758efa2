"""Time integration of the particle gradient flow with collision detection.

Two steppers are provided: an embedded Dormand-Prince 5(4) pair with PI
step-size control, and an implicit Euler step solved by damped Newton
(the variational, minimizing-movement step of the flow).  Trial steps that
would leave the increasing-configuration cone are rejected and retried with
a halved step.

A run terminates when t_max is reached, when the smallest gap drops to the
collision threshold (finite-time blow-up), or when the step size underflows
away from any collision.  Near a collision the time variable may stall at
machine precision while positions keep contracting; the stepper therefore
never requires t to advance and uses an absolute step floor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .model import (Diagnostics, DomainError, NumericalFailure, Params,
                    ParticleState)

# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


class Method(enum.Enum):
    ADAPTIVE_RK45 = "rk45"
    IMPLICIT_EULER = "implicit_euler"


class OutcomeKind(enum.Enum):
    REACHED_TMAX = "ReachedTmax"
    COLLISION = "Collision"
    STEP_UNDERFLOW = "StepSizeUnderflow"


class RunClass(enum.Enum):
    GLOBAL_OBSERVED = "GlobalObserved"
    BLOWUP_OBSERVED = "BlowupObserved"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.ADAPTIVE_RK45
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_init: float = 1e-4
    dt_min: float = 1e-30
    dt_max: float = 1.0
    t_max: float = 100.0
    collision_eps: float = 1e-9
    sample_every: float = 0.1
    newton_tol: float = 1e-12
    newton_max_iter: int = 30

    def __post_init__(self):
        if not 0.0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.collision_eps <= 0.0 or self.t_max <= 0.0:
            raise ValueError("collision_eps and t_max must be positive")


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    t_star: float | None = None       # collision time estimate
    t_star_error: float | None = None  # error bar (last accepted dt)
    pair: tuple[int, int] | None = None
    t: float | None = None            # time at step-size underflow


@dataclass
class TrajectoryRecord:
    """Cadence samples plus a short tail of the final accepted steps.

    ``samples`` follow the configured cadence (plus initial and terminal
    states); ``tail`` keeps (t, min_gap) for the last accepted steps so the
    terminal gap trend is observable even when collisions outrun the cadence.
    """

    samples: list = field(default_factory=list)  # (t, ParticleState, Diagnostics)
    tail: list = field(default_factory=list)     # (t, min_gap)
    step_count: int = 0
    rejected_steps: int = 0

    def min_gaps(self) -> np.ndarray:
        return np.array([d.min_gap for _, _, d in self.samples])


_TAIL_LEN = 16


def _in_cone(x: np.ndarray) -> bool:
    y = np.diff(x)
    return bool(np.all(y >= model.GAP_UNDERFLOW)) and bool(np.all(np.isfinite(x)))


def _rhs(x: np.ndarray, p: Params) -> np.ndarray | None:
    if not _in_cone(x):
        return None
    v = model._velocity(x, p)
    if not np.all(np.isfinite(v)):
        return None
    return v


def _collision_pair(x: np.ndarray, eps: float) -> tuple[int, int] | None:
    y = np.diff(x)
    i = int(np.argmin(y))
    if y[i] <= eps:
        return (i, i + 1)
    return None


def _extrapolate_t_star(tail: list, t: float, dt: float) -> tuple[float, float]:
    """Vanishing-time estimate assuming gap ~ sqrt(t* - t) near collision."""
    if len(tail) >= 2:
        (t1, y1), (t2, y2) = tail[-2], tail[-1]
        if y1 > y2 > 0.0 and y1 * y1 > y2 * y2:
            denom = y1 * y1 - y2 * y2
            t_star = (t2 * y1 * y1 - t1 * y2 * y2) / denom
            if t_star >= t:
                return t_star, dt
    return t, dt


def step_implicit_euler(state: ParticleState, p: Params, dt: float,
                        cfg: IntegratorConfig) -> ParticleState:
    """One implicit Euler step X+ = X + dt * velocity(X+), by damped Newton.

    The accepted step must stay in the cone and must not increase the
    variational objective G + |X+ - X|^2 / (2 k dt) beyond the Newton
    tolerance (k the mobility of the flow).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x0 = state.x
    k = p.mobility
    z = x0 + dt * model._velocity(x0, p)  # explicit predictor
    if not _in_cone(z):
        z = x0.copy()
    ident = np.eye(x0.size)
    converged = False
    for _ in range(cfg.newton_max_iter):
        v = _rhs(z, p)
        if v is None:
            raise NumericalFailure("implicit step left the admissible cone", best=z)
        res = z - x0 - dt * v
        rnorm = float(np.linalg.norm(res))
        if rnorm < cfg.newton_tol * max(1.0, float(np.linalg.norm(z))):
            converged = True
            break
        jac = ident + dt * k * model.hessian_g(ParticleState(z, t=state.t), p)
        step = np.linalg.solve(jac, -res)
        alpha = 1.0
        for _ in range(40):
            trial = z + alpha * step
            tv = _rhs(trial, p)
            if tv is not None:
                tres = trial - x0 - dt * tv
                if float(np.linalg.norm(tres)) < rnorm:
                    z = trial
                    break
            alpha *= 0.5
        else:
            raise NumericalFailure("implicit-step Newton stalled", best=z)
    if not converged:
        raise NumericalFailure("implicit-step Newton did not converge", best=z)
    g0 = model.energy_g(state, p)
    g1 = model.energy_g(ParticleState(z, t=state.t + dt), p)
    movement = float(np.sum((z - x0) ** 2)) / (2.0 * k * dt)
    if g1 + movement > g0 + 100.0 * cfg.newton_tol * max(1.0, abs(g0)):
        raise NumericalFailure("implicit step violated variational consistency", best=z)
    return ParticleState(z, t=state.t + dt)


def _rk45_step(x: np.ndarray, f0: np.ndarray, dt: float, p: Params):
    """One Dormand-Prince trial step; returns (x5, err_vec, f_new) or None."""
    stages = [f0]
    for s in range(1, 7):
        xs = x + dt * sum(a * k for a, k in zip(_DP_A[s], stages))
        fs = _rhs(xs, p)
        if fs is None:
            return None
        stages.append(fs)
    x5 = x + dt * sum(b * k for b, k in zip(_DP_B5, stages))
    if not _in_cone(x5):
        return None
    err = dt * sum(e * k for e, k in zip(_DP_E, stages))
    return x5, err, stages[6]  # FSAL: stage 7 is f(x5)


def simulate(state0: ParticleState, p: Params,
             cfg: IntegratorConfig) -> tuple[TrajectoryRecord, Outcome]:
    """Integrate the gradient flow from ``state0`` until t_max, collision,
    or step-size underflow; record cadence samples and diagnostics."""
    record = TrajectoryRecord()
    x = state0.x.copy()
    t = float(state0.t)
    t_end = t + cfg.t_max

    def sample(tt, xx):
        st = ParticleState(xx, t=tt)
        record.samples.append((tt, st, model.diagnostics(st, p)))

    sample(t, x)
    record.tail.append((t, float(np.min(np.diff(x)))))
    next_sample = t + cfg.sample_every

    pair = _collision_pair(x, cfg.collision_eps)
    if pair is not None:
        return record, Outcome(OutcomeKind.COLLISION, t_star=t, t_star_error=0.0, pair=pair)

    g_prev = model.energy_g(ParticleState(x, t=t), p)
    g_tol = lambda g: 10.0 * (cfg.rtol * abs(g) + cfg.atol)

    dt = cfg.dt_init
    err_prev = 1.0
    implicit = cfg.method is Method.IMPLICIT_EULER
    f0 = None if implicit else _rhs(x, p)
    if f0 is None and not implicit:
        return record, Outcome(OutcomeKind.STEP_UNDERFLOW, t=t)

    while True:
        if t >= t_end:
            if record.samples[-1][0] < t:
                sample(t, x)
            return record, Outcome(OutcomeKind.REACHED_TMAX)
        dt = min(dt, t_end - t) if t_end - t > 0 else dt

        if implicit:
            try:
                new = step_implicit_euler(ParticleState(x, t=t), p, dt, cfg)
            except NumericalFailure:
                record.rejected_steps += 1
                dt *= 0.5
                if dt < cfg.dt_min:
                    sample(t, x)
                    return record, Outcome(OutcomeKind.STEP_UNDERFLOW, t=t)
                continue
            x_new, t_new, dt_next = new.x, new.t, min(dt * 2.0, cfg.dt_max)
        else:
            trial = _rk45_step(x, f0, dt, p)
            if trial is None:
                record.rejected_steps += 1
                dt *= 0.5
                if dt < cfg.dt_min:
                    sample(t, x)
                    return record, Outcome(OutcomeKind.STEP_UNDERFLOW, t=t)
                continue
            x5, err_vec, f_new = trial
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x5))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            if err > 1.0:
                record.rejected_steps += 1
                factor = max(0.2, 0.9 * err ** -0.2)
                dt *= factor
                if dt < cfg.dt_min:
                    sample(t, x)
                    return record, Outcome(OutcomeKind.STEP_UNDERFLOW, t=t)
                continue
            # PI controller
            factor = 0.9 * err ** -0.14 * err_prev ** 0.08 if err > 0 else 5.0
            dt_next = min(dt * min(5.0, max(0.2, factor)), cfg.dt_max)
            err_prev = max(err, 1e-10)
            x_new, t_new, f0 = x5, t + dt, f_new

        # accepted step
        record.step_count += 1
        g_new = model.energy_g(ParticleState(x_new, t=t_new), p)
        if g_new > g_prev + g_tol(g_prev):
            raise NumericalFailure(
                f"energy increased across an accepted step at t = {t_new}",
                best=ParticleState(x_new, t=t_new))
        g_prev = g_new
        x, t = x_new, t_new
        record.tail.append((t, float(np.min(np.diff(x)))))
        if len(record.tail) > _TAIL_LEN:
            record.tail.pop(0)

        pair = _collision_pair(x, cfg.collision_eps)
        if pair is not None:
            sample(t, x)
            t_star, t_err = _extrapolate_t_star(record.tail, t, dt)
            return record, Outcome(OutcomeKind.COLLISION, t_star=t_star,
                                   t_star_error=t_err, pair=pair)

        if next_sample <= t:
            sample(t, x)
            while next_sample <= t:
                next_sample += cfg.sample_every
        dt = dt_next


def classify_run(record: TrajectoryRecord, outcome: Outcome, p: Params,
                 cfg: IntegratorConfig | None = None) -> RunClass:
    """Terminal classification of a finished run.

    Blow-up requires a collision outcome with a monotone-decreasing gap over
    the final accepted steps; a global run must reach t_max with the minimum
    gap bounded well away from the collision threshold near the end.
    """
    eps = cfg.collision_eps if cfg is not None else 1e-9
    if outcome.kind is OutcomeKind.COLLISION:
        gaps = [g for _, g in record.tail[-5:]]
        if len(gaps) >= 5 and all(a > b for a, b in zip(gaps, gaps[1:])):
            return RunClass.BLOWUP_OBSERVED
        return RunClass.UNDETERMINED
    if outcome.kind is OutcomeKind.REACHED_TMAX:
        gaps = record.min_gaps()
        k = max(1, gaps.size // 10)
        if np.all(gaps[-k:] >= 10.0 * eps):
            return RunClass.GLOBAL_OBSERVED
        return RunClass.UNDETERMINED
    return RunClass.UNDETERMINED
