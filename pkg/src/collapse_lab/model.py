"""Core types and algebra of the one-dimensional N-particle collapse model.

Everything here is a pure function of its arguments.  The model is a
gradient flow of the discrete free energy G = U - W on the open cone of
strictly increasing configurations:

* ``entropy_u``      -- diffusion part, -h * sum(log(gap/h))
* ``interaction_w``  -- attractive part, h^2-weighted pairwise kernel sum
* ``velocity``       -- the ODE right-hand side (the negative scaled gradient)
* ``virial_rhs``     -- exact d/dt |X|^2 obtained from the dilation identity

The kernel family is gamma in (0, 1) with kernel |x|^(-gamma)/gamma; the
limit gamma = 0 switches every energy and force evaluation to the
logarithmic kernel -log|x|.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

GAP_UNDERFLOW = 1e-300


class DomainError(ValueError):
    """Configuration left the admissible cone (coincident or unordered particles)."""


class PreconditionError(ValueError):
    """A stated hypothesis of the operation is violated (e.g. nonzero center of mass)."""


class NumericalFailure(RuntimeError):
    """An iterative method failed to converge.  ``best`` carries the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TimeScaling(enum.Enum):
    """Prefactor convention of the flow.

    PAPER uses dX/dt = -(1/h) grad G for gamma > 0 and dX/dt = -grad G for
    the logarithmic kernel; UNIFORM applies the 1/h prefactor to both.
    """

    PAPER = "paper"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Params:
    """Problem constants.  ``h`` is the mass carried by each particle, M/(N+1)."""

    gamma: float
    mass: float
    n: int
    time_scaling: TimeScaling = TimeScaling.PAPER

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.n < 3:
            raise ValueError(f"need at least 3 particles, got {self.n}")

    @property
    def h(self) -> float:
        return self.mass / (self.n + 1)

    @property
    def mobility(self) -> float:
        """k in dX/dt = -k grad G."""
        if self.gamma == 0.0 and self.time_scaling is TimeScaling.PAPER:
            return 1.0
        return 1.0 / self.h


@dataclass(frozen=True)
class ParticleState:
    """Strictly increasing position vector with a timestamp."""

    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1:
            raise DomainError("positions must be a 1-d vector")
        if not np.all(np.isfinite(x)):
            raise DomainError("positions must be finite")
        if np.any(np.diff(x) <= 0.0):
            raise DomainError("positions must be strictly increasing")

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class Gaps:
    """Consecutive differences y[i] = x[i+1] - x[i]; ghost gaps at +inf are implicit."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if np.any(y <= 0.0):
            raise DomainError("gaps must be strictly positive")


@dataclass(frozen=True)
class Diagnostics:
    u: float
    w: float
    g: float
    phi: float
    i2: float
    com: float
    min_gap: float
    virial_residual: float


def _gaps(x: np.ndarray) -> np.ndarray:
    y = np.diff(x)
    if np.any(y < GAP_UNDERFLOW):
        raise DomainError("positions must be strictly increasing (gap underflow)")
    return y


def gaps(state: ParticleState) -> Gaps:
    return Gaps(_gaps(state.x))


def entropy_u(state: ParticleState, p: Params) -> float:
    """Discrete entropy U[X] = -h sum(log(gap/h))."""
    y = _gaps(state.x)
    return -p.h * float(np.sum(np.log(y / p.h)))


def _pair_dists(x: np.ndarray) -> np.ndarray:
    """Upper-triangle pairwise distances x[j] - x[i] for i < j, fixed order."""
    n = x.size
    i, j = np.triu_indices(n, k=1)
    return x[j] - x[i]


def interaction_w(state: ParticleState, p: Params) -> float:
    """Interaction energy W[X]: h^2-weighted once-per-pair kernel sum."""
    r = _pair_dists(state.x)
    if np.any(r < GAP_UNDERFLOW):
        raise DomainError("coincident particles")
    if p.gamma == 0.0:
        return -p.h**2 * float(np.sum(np.log(r)))
    return p.h**2 / p.gamma * float(np.sum(r**-p.gamma))


def energy_g(state: ParticleState, p: Params) -> float:
    return entropy_u(state, p) - interaction_w(state, p)


def phi(state: ParticleState, p: Params) -> float:
    """Collision-sensing functional; diverges as any gap vanishes."""
    y = _gaps(state.x)
    if p.gamma == 0.0:
        return -p.h * float(np.sum(np.log(y)))
    return p.h / p.gamma * float(np.sum(y**-p.gamma))


def _velocity(x: np.ndarray, p: Params) -> np.ndarray:
    """Right-hand side on a raw position array (must already be increasing)."""
    y = np.diff(x)
    if y.size and y.min() < GAP_UNDERFLOW:
        raise DomainError("coincident particles")
    inv = 1.0 / y
    v = np.zeros_like(x)
    v[:-1] -= inv          # -1/(x_{i+1} - x_i)
    v[1:] += inv           # +1/(x_i - x_{i-1}); ghost terms are omitted
    r = x[None, :] - x[:, None]
    np.fill_diagonal(r, 1.0)
    if p.gamma == 0.0:
        kern = 1.0 / r
    else:
        kern = np.sign(r) * np.abs(r) ** -(p.gamma + 1.0)
    np.fill_diagonal(kern, 0.0)
    v += p.h * kern.sum(axis=1)
    if p.gamma == 0.0 and p.time_scaling is TimeScaling.PAPER:
        v *= p.h
    return v


def velocity(state: ParticleState, p: Params) -> np.ndarray:
    """dX/dt of the gradient flow; ghost particles at +-inf contribute nothing."""
    return _velocity(state.x, p)


def hessian_g(state: ParticleState, p: Params) -> np.ndarray:
    """Hessian of the discrete energy G (dense, symmetric)."""
    x = state.x
    n = x.size
    y = _gaps(x)
    hess = np.zeros((n, n))
    d2 = p.h / y**2
    for i in range(n - 1):  # entropy part: h * A^T diag(1/y^2) A
        hess[i, i] += d2[i]
        hess[i + 1, i + 1] += d2[i]
        hess[i, i + 1] -= d2[i]
        hess[i + 1, i] -= d2[i]
    iu, ju = np.triu_indices(n, k=1)
    r = x[ju] - x[iu]
    if p.gamma == 0.0:
        c = -p.h**2 / r**2
    else:
        c = -p.h**2 * (p.gamma + 1.0) * r ** -(p.gamma + 2.0)
    for i, j, cij in zip(iu, ju, c):  # -W part: each pair contributes c*(e_j - e_i)(e_j - e_i)^T
        hess[i, i] += cij
        hess[j, j] += cij
        hess[i, j] -= cij
        hess[j, i] -= cij
    return hess


def virial_rhs(state: ParticleState, p: Params) -> float:
    """Exact value of d/dt |X|^2 along the flow, from the dilation identity."""
    n, h = p.n, p.h
    if p.gamma == 0.0:
        return 2.0 * p.mobility * h * (n - 1) * (1.0 - h * n / 2.0)
    return (2.0 / h) * (h * (n - 1) - p.gamma * interaction_w(state, p))


def second_moment(state: ParticleState) -> float:
    return float(np.dot(state.x, state.x))


def center_of_mass(state: ParticleState) -> float:
    return float(np.mean(state.x))


def rescale(state: ParticleState, p: Params, lam: float) -> tuple[ParticleState, Params]:
    """Apply the invariance (h, X(t)) -> (lam^gamma h, lam X(t / lam^2))."""
    if lam <= 0.0:
        raise ValueError(f"scaling factor must be positive, got {lam}")
    factor = lam**p.gamma
    return (
        ParticleState(lam * state.x, t=state.t / lam**2),
        replace(p, mass=factor * p.mass),
    )


def diagnostics(state: ParticleState, p: Params) -> Diagnostics:
    u = entropy_u(state, p)
    w = interaction_w(state, p)
    v = velocity(state, p)
    ddt_i2 = 2.0 * float(np.dot(state.x, v))
    rhs = virial_rhs(state, p)
    return Diagnostics(
        u=u,
        w=w,
        g=u - w,
        phi=phi(state, p),
        i2=second_moment(state),
        com=center_of_mass(state),
        min_gap=float(np.min(_gaps(state.x))),
        virial_residual=abs(ddt_i2 - rhs),
    )
