"""Critical points, the N = 3 phase plane, and the dissipation-identity diagnostics.

The three-particle system with zero center of mass reduces to the gap
coordinates (u, v) = (X2 - X1, X3 - X2).  This module locates the critical
points of the discrete energy, traces the level curves of every
certification predicate in the (u, v) plane, computes the invariant curve
through the critical point that separates the global-existence basin from
the blow-up basin, and classifies a whole (u, v) window by direct
simulation.

The reduced flow is always obtained from the full three-particle ODE (the
coordinate change is not an isometry, so the reduced flow is not the
Euclidean gradient flow of the reduced energy).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import criteria, dynamics, model
from .dynamics import IntegratorConfig, RunClass
from .model import NumericalFailure, Params, ParticleState

_EIG_TOL = 1e-9


class CriticalKind(enum.Enum):
    SADDLE = "Saddle"
    MAX = "Max"
    MIN = "Min"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class ReducedPoint:
    """Gap coordinates of the zero-mean three-particle configuration."""

    u: float
    v: float

    def __post_init__(self):
        if self.u <= 0.0 or self.v <= 0.0:
            raise ValueError("gap coordinates must be positive")

    def state(self) -> ParticleState:
        x1 = -(2.0 * self.u + self.v) / 3.0
        return ParticleState(np.array([x1, x1 + self.u, x1 + self.u + self.v]))


def reduced_point(state: ParticleState) -> ReducedPoint:
    if state.n != 3:
        raise ValueError("reduced coordinates are defined for 3 particles")
    y = np.diff(state.x)
    return ReducedPoint(float(y[0]), float(y[1]))


@dataclass(frozen=True)
class CriticalPoint:
    state: ParticleState
    grad_norm: float
    hessian_eigs: np.ndarray  # of the energy, restricted to the zero-mean hyperplane
    kind: CriticalKind


@dataclass(frozen=True)
class PhasePortrait:
    u_grid: np.ndarray
    v_grid: np.ndarray
    grid: np.ndarray          # RunClass values, shape (len(u), len(v))
    curves: dict              # name -> (k, 2) polyline in (u, v)


def _hyperplane_basis(n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the zero-mean hyperplane."""
    a = np.eye(n) - np.full((n, n), 1.0 / n)
    q, _ = np.linalg.qr(a[:, : n - 1])
    return q[:, : n - 1]


def _classify_eigs(eigs: np.ndarray) -> CriticalKind:
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.any(np.abs(eigs) <= _EIG_TOL * scale):
        return CriticalKind.DEGENERATE
    if np.all(eigs > 0.0):
        return CriticalKind.MIN
    if np.all(eigs < 0.0):
        return CriticalKind.MAX
    return CriticalKind.SADDLE


def _make_critical_point(x: np.ndarray, p: Params) -> CriticalPoint:
    state = ParticleState(x - np.mean(x))
    q = _hyperplane_basis(p.n)
    hess = q.T @ model.hessian_g(state, p) @ q
    eigs = np.linalg.eigvalsh(hess)
    grad = -model.velocity(state, p) / p.mobility
    return CriticalPoint(state, float(np.linalg.norm(q.T @ grad)), eigs,
                         _classify_eigs(eigs))


def symmetric_critical_point(p: Params) -> CriticalPoint:
    """The equal-gap critical state of the three-particle energy, closed form."""
    if p.n != 3:
        raise ValueError("closed-form critical point is for 3 particles")
    if not 0.0 < p.gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    s = (p.h * (1.0 + 2.0 ** (-1.0 - p.gamma))) ** (1.0 / p.gamma)
    return _make_critical_point(np.array([-s, 0.0, s]), p)


def newton_critical_point(init: ParticleState, p: Params,
                          tol: float = 1e-12, max_iter: int = 100) -> CriticalPoint:
    """Damped Newton on the zero-mean-projected gradient of the energy."""
    if abs(model.center_of_mass(init)) > criteria.ZERO_MEAN_TOL:
        raise model.PreconditionError("initial guess must have zero center of mass")
    q = _hyperplane_basis(p.n)
    x = init.x.copy()

    def _grad(xx):
        return -model._velocity(xx, p) / p.mobility

    g = q.T @ _grad(x)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return _make_critical_point(x, p)
        hess = q.T @ model.hessian_g(ParticleState(x), p) @ q
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            raise NumericalFailure("singular projected Hessian", best=ParticleState(x))
        alpha = 1.0
        for _ in range(60):
            trial = x + alpha * (q @ step)
            if np.all(np.diff(trial) > 0.0):
                tg = q.T @ _grad(trial)
                if float(np.linalg.norm(tg)) < gnorm:
                    x, g = trial, tg
                    break
            alpha *= 0.5
        else:
            raise NumericalFailure("critical-point Newton stalled", best=ParticleState(x))
    raise NumericalFailure("critical-point Newton did not converge", best=ParticleState(x))


def _trace_level(fun, u_samples: np.ndarray, v_lo: float, v_hi: float,
                 xtol: float = 1e-12) -> np.ndarray:
    """Sample the level set fun(u, v) = 0 by per-u bisection in v.

    Scans a coarse log grid in v for a sign change, then refines by brentq;
    u samples without a bracket are skipped.
    """
    points = []
    v_scan = np.geomspace(v_lo, v_hi, 32)
    for u in u_samples:
        vals = np.array([fun(u, v) for v in v_scan])
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        if idx.size == 0:
            continue
        i = idx[0]
        v = brentq(lambda vv: fun(u, vv), v_scan[i], v_scan[i + 1], xtol=xtol)
        points.append((u, v))
    return np.array(points) if points else np.empty((0, 2))


def critical_curve_n3(p: Params, sample_count: int = 512,
                      window: tuple = (1e-3, 10.0)) -> np.ndarray:
    """Level set gamma * W(u, v) = h (N - 1): the dilation-stationary curve."""
    if p.n != 3:
        raise ValueError("phase-plane curves are for 3 particles")
    h, g = p.h, p.gamma
    target = 2.0 / h

    def fun(u, v):
        return u**-g + v**-g + (u + v) ** -g - target

    u = np.geomspace(window[0], window[1], sample_count)
    return _trace_level(fun, u, window[0], window[1])


def _i2_uv(u: float, v: float) -> float:
    """|X|^2 of the zero-mean state with gaps (u, v)."""
    return 2.0 / 3.0 * (u * u + u * v + v * v)


def ge_curve_n3(p: Params, sample_count: int = 512,
                window: tuple = (1e-3, 10.0)) -> np.ndarray:
    """Equality locus of the global-existence smallness condition."""
    thr = criteria.ge_threshold(3)
    h, g = p.h, p.gamma

    def fun(u, v):
        return g * (h / g) * (u**-g + v**-g) - thr

    u = np.geomspace(window[0], window[1], sample_count)
    return _trace_level(fun, u, window[0], window[1])


def bu_w_curve_n3(p: Params, sample_count: int = 512,
                  window: tuple = (1e-3, 10.0)) -> np.ndarray:
    """Equality locus of the interaction-energy blow-up criterion."""
    thr = criteria.blowup_w_threshold(p)

    def fun(u, v):
        return _i2_uv(u, v) - thr

    u = np.geomspace(window[0], window[1], sample_count)
    return _trace_level(fun, u, window[0], window[1])


def bu_c_curve_n3(p: Params, cn: float | None = None, sample_count: int = 512,
                  window: tuple = (1e-3, 10.0)) -> np.ndarray:
    """Equality locus of the continuum entropy criterion at C(N)."""
    if cn is None:
        cn = criteria.c_of_n(3)

    def fun(u, v):
        state = ReducedPoint(u, v).state()
        return _i2_uv(u, v) - criteria._entropy_family_threshold(state, p, cn)

    u = np.geomspace(window[0], window[1], sample_count)
    return _trace_level(fun, u, window[0], window[1])


def reduced_velocity(point: ReducedPoint, p: Params) -> np.ndarray:
    """(du/dt, dv/dt) from the full three-particle right-hand side."""
    v = model.velocity(point.state(), p)
    return np.array([v[1] - v[0], v[2] - v[1]])


def reduced_jacobian(point: ReducedPoint, p: Params) -> np.ndarray:
    """Exact Jacobian of the reduced flow via the energy Hessian."""
    state = point.state()
    jac_full = -p.mobility * model.hessian_g(state, p)
    # x(u, v) is affine; columns are the partial derivatives of x
    dx = np.array([[-2.0, -1.0], [1.0, -1.0], [1.0, 2.0]]) / 3.0
    rows = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
    return rows @ jac_full @ dx


def separatrix_n3(p: Params, window: tuple = (0.02, 0.8),
                  anchors: int = 20, cfg: IntegratorConfig | None = None,
                  bisect_tol: float = 3e-5, rel_offset: float = 1e-6,
                  max_steps: int = 20000) -> np.ndarray:
    """Basin boundary of the three-particle flow through the critical point.

    When the reduced spectrum is a saddle the boundary is the invariant
    manifold of the negative eigendirection, traced by reverse-time
    integration from +-eps along it.  The symmetric critical point is in
    fact an energy maximum (both reduced eigenvalues positive, a repelling
    node); there the boundary leaves the critical point tangent to the slow
    eigendirection and is not isolated by the linearization alone, so it is
    located empirically: for each anchor gap u the transition between the
    numerically observed blow-up and global basins is bisected in v, and the
    curve is completed by the exact u <-> v symmetry of the flow.
    """
    cp = symmetric_critical_point(p)
    pt0 = reduced_point(cp.state)
    jac = reduced_jacobian(pt0, p)
    eigvals = np.real(np.linalg.eigvals(jac))
    if np.min(eigvals) < 0.0 < np.max(eigvals):
        return _separatrix_saddle(p, pt0, jac, window, rel_offset, max_steps)
    if np.all(eigvals > 0.0):
        return _separatrix_node(p, pt0, window, anchors, cfg, bisect_tol)
    raise NumericalFailure(
        f"reduced critical point is neither a saddle nor repelling; spectrum {eigvals}")


def _separatrix_node(p: Params, pt0: ReducedPoint, window: tuple,
                     anchors: int, cfg: IntegratorConfig | None,
                     bisect_tol: float) -> np.ndarray:
    if cfg is None:
        cfg = IntegratorConfig(t_max=8.0, rtol=1e-5, atol=1e-7,
                               dt_init=1e-3, sample_every=1.0)
    lo, hi = window

    def is_global(u, v):
        return classify_cell(u, v, p, cfg) is RunClass.GLOBAL_OBSERVED

    u_anchors = np.unique(np.append(np.geomspace(lo, hi, anchors), pt0.u))
    points = []
    prev_boundary = None
    for u in u_anchors:
        if is_global(u, lo):
            continue  # no basin transition along this vertical line
        # the boundary v(u) is decreasing, so the previous anchor's value
        # bounds the bracket from above (validated before trusting it)
        v_hi = hi
        if prev_boundary is not None:
            cap = prev_boundary + 4.0 * bisect_tol
            if cap < hi and is_global(u, cap):
                v_hi = cap
        if v_hi == hi and not is_global(u, hi):
            continue
        v_lo = lo
        while v_hi - v_lo > bisect_tol:
            mid = 0.5 * (v_lo + v_hi)
            if is_global(u, mid):
                v_hi = mid
            else:
                v_lo = mid
        prev_boundary = 0.5 * (v_lo + v_hi)
        points.append((u, prev_boundary))
    if not points:
        raise NumericalFailure("no basin transition found inside the window")
    mirrored = [(v, u) for u, v in points]  # the flow is symmetric in u <-> v
    allpts = {(round(a, 12), round(b, 12)) for a, b in points + mirrored}
    allpts.add((round(pt0.u, 12), round(pt0.v, 12)))
    arr = np.array(sorted(allpts))
    return arr[np.argsort(arr[:, 0])]


def _separatrix_saddle(p: Params, pt0: ReducedPoint, jac: np.ndarray,
                       window: tuple, rel_offset: float,
                       max_steps: int) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eig(jac)
    eigvals = np.real(eigvals)
    direction = np.real(eigvecs[:, int(np.argmin(eigvals))])
    direction /= np.linalg.norm(direction)
    eps = rel_offset * pt0.u

    def reverse_rhs(z):
        return -reduced_velocity(ReducedPoint(z[0], z[1]), p)

    def trace(sign: float):
        z = np.array([pt0.u, pt0.v]) + sign * eps * direction
        pts = [z.copy()]
        dt = 1e-8
        for _ in range(max_steps):
            # two half steps vs one full step of RK4 for step control
            full = _rk4(reverse_rhs, z, dt)
            half = _rk4(reverse_rhs, _rk4(reverse_rhs, z, dt / 2), dt / 2)
            if full is None or half is None:
                dt *= 0.5
                if dt < 1e-16:
                    break
                continue
            err = float(np.max(np.abs(full - half)))
            tol = 1e-10 + 1e-8 * float(np.max(np.abs(z)))
            if err > tol:
                dt *= 0.5
                continue
            z = half
            pts.append(z.copy())
            if err < tol / 32.0:
                dt *= 2.0
            if not (window[0] <= z[0] <= window[1] and window[0] <= z[1] <= window[1]):
                break
        return pts

    branch_plus = trace(+1.0)
    branch_minus = trace(-1.0)
    pts = list(reversed(branch_minus)) + [np.array([pt0.u, pt0.v])] + branch_plus
    return np.array(pts)


def _rk4(f, z, dt):
    try:
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
    except (ValueError, model.DomainError):
        return None
    out = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)) or np.any(out <= 0.0):
        return None
    return out


def classify_cell(u: float, v: float, p: Params, cfg: IntegratorConfig) -> RunClass:
    try:
        record, outcome = dynamics.simulate(ReducedPoint(u, v).state(), p, cfg)
        return dynamics.classify_run(record, outcome, p, cfg)
    except (model.DomainError, NumericalFailure, ValueError):
        return RunClass.UNDETERMINED


def phase_plane_sweep(p: Params, window: tuple = (0.02, 0.8),
                      resolution: int = 64,
                      cfg: IntegratorConfig | None = None,
                      jobs: int = 1) -> PhasePortrait:
    """Classify a log-spaced (u, v) grid by simulation and overlay the
    certification curves and the separatrix.  Cells are independent; results
    are merged by index so the output does not depend on the worker count."""
    if p.n != 3:
        raise ValueError("the phase-plane sweep is for 3 particles")
    if cfg is None:
        cfg = IntegratorConfig(t_max=15.0, rtol=1e-7, atol=1e-9, sample_every=0.5)
    u_grid = np.geomspace(window[0], window[1], resolution)
    v_grid = np.geomspace(window[0], window[1], resolution)
    cells = [(i, j) for i in range(resolution) for j in range(resolution)]
    grid = np.empty((resolution, resolution), dtype=object)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(
                _sweep_cell_worker,
                ((u_grid[i], v_grid[j], p, cfg) for i, j in cells),
                chunksize=max(1, len(cells) // (8 * jobs)))
            for (i, j), cls in zip(cells, results):
                grid[i, j] = cls
    else:
        for i, j in cells:
            grid[i, j] = classify_cell(u_grid[i], v_grid[j], p, cfg)
    curve_window = (window[0] / 2.0, window[1] * 2.0)
    curves = {
        "critical_curve": critical_curve_n3(p, window=curve_window),
        "bu_w_curve": bu_w_curve_n3(p, window=curve_window),
        "bu_c_curve": bu_c_curve_n3(p, window=curve_window),
        "ge_curve": ge_curve_n3(p, window=curve_window),
        "separatrix": separatrix_n3(p, window=curve_window),
    }
    return PhasePortrait(u_grid, v_grid, grid, curves)


def _sweep_cell_worker(args):
    u, v, p, cfg = args
    return classify_cell(u, v, p, cfg)


def phi_rate_decomposition(state: ParticleState, p: Params) -> dict:
    """Split d/dt phi along the flow into its dissipation and interaction parts.

    Returns the individual terms and ``lhs`` (the chain-rule derivative);
    the exact identity is lhs = (gamma * phi - 1) * i_term + j2 - h^2 * r_tilde.
    """
    if not 0.0 < p.gamma < 1.0:
        raise ValueError("the decomposition is defined for gamma in (0, 1)")
    x = state.x
    n, h, g = p.n, p.h, p.gamma
    y = np.diff(x)
    if np.any(y < model.GAP_UNDERFLOW):
        raise model.DomainError("coincident particles")
    # padded reciprocal gaps: ghost gaps at +inf contribute zero
    inv = np.zeros(n + 1)
    invg = np.zeros(n + 1)  # 1 / y^(gamma+1)
    inv[1:n] = 1.0 / y
    invg[1:n] = y ** -(g + 1.0)

    d_inv = inv[1:] - inv[:-1]      # index i = 1..N -> positions 0..N-1
    d_invg = invg[1:] - invg[:-1]
    i_term = h * float(np.sum(d_inv * d_invg))
    j1 = h * h * float(np.sum(d_invg**2))

    r = x[None, :] - x[:, None]
    np.fill_diagonal(r, 1.0)
    kern = np.sign(r) * np.abs(r) ** -(g + 1.0)
    np.fill_diagonal(kern, 0.0)
    mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) >= 2
    j2 = h * h * float(np.sum((kern * mask).sum(axis=1) * d_invg))

    r1 = 0.0
    for j in range(1, n - 1):  # gaps y_j, y_{j+1} both interior
        yj, yj1 = y[j - 1], y[j]
        r1 += (1.0 / (yj * yj1)) * (yj1 ** -(g + 1.0) - yj ** -(g + 1.0)) \
            * (yj ** (1.0 - g) - yj1 ** (1.0 - g))
    r2 = 0.0
    for j in range(1, n):
        w = y[j - 1] ** -g
        for i in range(0, n):
            if i in (j - 1, j):
                continue
            r2 += w * (inv[i + 1] - inv[i]) * (invg[i + 1] - invg[i])
    r_tilde = r1 + r2

    phi_val = model.phi(state, p)
    grad_phi = h * (invg[1:] - invg[:-1])
    lhs = float(np.dot(grad_phi, model.velocity(state, p)))
    return {
        "i_term": i_term,
        "j1": j1,
        "j2": j2,
        "r_tilde": r_tilde,
        "lhs": lhs,
        "residual": abs(lhs - ((g * phi_val - 1.0) * i_term + j2 - h * h * r_tilde)),
    }


def lemma51_checks(x: np.ndarray, tol: float = 1e-12) -> dict:
    """Verify the zero-mean quadratic identities and the inverse-matrix bounds."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if abs(float(np.mean(x))) > criteria.ZERO_MEAN_TOL * max(1.0, float(np.max(np.abs(x)))):
        raise model.PreconditionError("vector must have zero mean")
    i, j = np.triu_indices(n, k=1)
    pair_sq = float(np.sum((x[j] - x[i]) ** 2))
    i2 = float(np.dot(x, x))
    identity1_residual = abs(n * i2 - pair_sq)

    a = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    a[idx, idx] = -1.0
    a[idx, idx + 1] = 1.0
    minv = np.linalg.inv(a @ a.T)
    y = np.diff(x)
    identity2_residual = abs(i2 - float(y @ minv @ y))

    # inequality: |X|^2 >= (2/N) sum_{i<=j} Y_i Y_j (sharp iff N = 3)
    ydoub = float(sum(y[ii] * y[jj] for ii in range(n - 1) for jj in range(ii, n - 1)))
    inequality3_slack = i2 - 2.0 / n * ydoub

    off = minv[~np.eye(n - 1, dtype=bool)] if n > 2 else np.array([])
    diag = np.diag(minv)
    return {
        "identity1_residual": identity1_residual,
        "identity2_residual": identity2_residual,
        "inequality3_slack": inequality3_slack,
        "inequality3_ok": inequality3_slack >= -tol * max(1.0, i2),
        "matrix_offdiag_ok": bool(off.size == 0 or np.min(off) >= 1.0 / n - tol),
        "matrix_diag_ok": bool(np.min(diag) >= 2.0 / n - tol),
    }
