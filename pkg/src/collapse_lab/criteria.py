"""Certification predicates for the particle system.

Three families of sufficient conditions are implemented:

* a smallness condition on the collision functional phi that certifies
  global existence (gamma in (0, 1)),
* three second-moment blow-up criteria (via the interaction energy, via
  the entropy, and a continuum of entropy criteria parametrized by a
  positive weight vector mu),
* the exact mass threshold of the logarithmic kernel (gamma = 0).

The entropy-criterion constant C(N) = sup C(mu) is computed by solving the
scale-fixed stationarity system with a damped Newton method, bracketed by
the Gaussian-weight lower bound and the smallest-eigenvalue upper bound.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import model
from .density import _std_normal_pdf, std_normal_quantile
from .model import NumericalFailure, Params, ParticleState, PreconditionError

ZERO_MEAN_TOL = 1e-12


class Verdict(enum.Enum):
    GLOBAL_CERTIFIED = "GlobalCertified"
    BLOWUP_CERTIFIED = "BlowupCertified"
    UNCERTIFIED = "Uncertified"


class CriterionTag(enum.Enum):
    GE_4_8 = "GE_4_8"            # smallness of gamma*phi
    BU_W_5_2 = "BU_W_5_2"        # interaction-energy criterion
    BU_U_5_7 = "BU_U_5_7"        # entropy criterion
    BU_C_5_10 = "BU_C_5_10"      # continuum entropy criterion at C(N)
    GAMMA0_MASS = "Gamma0_Mass"  # logarithmic-kernel mass threshold


class Gamma0Class(enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


@dataclass(frozen=True)
class Certificate:
    verdict: Verdict
    triggered: frozenset
    thresholds: dict  # tag -> (threshold, measured)


@dataclass(frozen=True)
class MuVector:
    """Positive weight vector of length N-1; mu_0 = mu_N = 0 are implicit."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        if np.any(mu <= 0.0):
            raise ValueError("all weight entries must be positive")


def _require_zero_mean(state: ParticleState):
    if abs(model.center_of_mass(state)) > ZERO_MEAN_TOL:
        raise PreconditionError(
            "state must have zero center of mass (recenter the positions first)")


def recenter(state: ParticleState) -> ParticleState:
    return ParticleState(state.x - np.mean(state.x), t=state.t)


def ge_threshold(n: int) -> float:
    """Threshold for gamma*phi below which the trajectory is global.

    N = 3 admits threshold 1 (the remainder in the dissipation identity is
    signed); N > 3 uses the constant of the general differential inequality.
    """
    if n < 3:
        raise ValueError("need at least 3 particles")
    if n == 3:
        return 1.0
    return 1.0 / (1.0 + 2.0 * (n - 2) ** 2)


def global_existence_check(state0: ParticleState, p: Params) -> tuple[bool, float]:
    """Smallness condition gamma * phi(X(0)) < T(N)."""
    if p.gamma == 0.0:
        raise PreconditionError("use gamma0_check for the logarithmic kernel")
    threshold = ge_threshold(p.n)
    return p.gamma * model.phi(state0, p) < threshold, threshold


def blowup_w_threshold(p: Params) -> float:
    n, h, m, g = p.n, p.h, p.mass, p.gamma
    return (1.0 / h) * (m / 2.0) ** (2.0 / g + 1.0) * n ** (2.0 / g) * (n - 1) \
        / (n + 1) ** (2.0 / g + 1.0)


def blowup_w_check(state0: ParticleState, p: Params) -> tuple[bool, float]:
    """Interaction-energy blow-up criterion on the initial second moment."""
    _require_zero_mean(state0)
    threshold = blowup_w_threshold(p)
    return model.second_moment(state0) < threshold, threshold


def _entropy_family_threshold(state0: ParticleState, p: Params, cn: float) -> float:
    g0 = model.energy_g(state0, p)
    n, h = p.n, p.h
    return h**2 * (n - 1) ** 2 * cn * math.exp(-2.0 / p.gamma) \
        * math.exp(-2.0 * g0 / (h * (n - 1)))


def blowup_u_check(state0: ParticleState, p: Params) -> tuple[bool, float]:
    """Entropy blow-up criterion (the continuum criterion at C(mu) = 1/(N-1))."""
    _require_zero_mean(state0)
    threshold = _entropy_family_threshold(state0, p, 1.0 / (p.n - 1))
    return model.second_moment(state0) < threshold, threshold


def blowup_c_check(state0: ParticleState, p: Params, cn: float) -> tuple[bool, float]:
    """Continuum entropy criterion; ``cn`` is C(N) or any feasible C(mu)."""
    if cn <= 0.0:
        raise ValueError("the entropy constant must be positive")
    _require_zero_mean(state0)
    threshold = _entropy_family_threshold(state0, p, cn)
    return model.second_moment(state0) < threshold, threshold


def c_of_mu(mu: MuVector, n: int) -> float:
    """C(mu) = exp((2/(N-1)) sum log mu) / sum (mu_i - mu_{i-1})^2, endpoints zero."""
    m = mu.mu
    if m.size != n - 1:
        raise ValueError(f"expected {n - 1} weights for N = {n}, got {m.size}")
    denom = m[0] ** 2 + float(np.sum(np.diff(m) ** 2)) + m[-1] ** 2
    return math.exp(2.0 / (n - 1) * float(np.sum(np.log(m)))) / denom


def lambda_min(n: int) -> float:
    """Smallest eigenvalue of A A^T (A the forward-difference matrix), closed form."""
    if n < 2:
        raise ValueError("need n >= 2")
    return 4.0 * math.sin(math.pi / (2 * n)) ** 2


def lambda_min_eig(n: int) -> float:
    """Verification path: eigensolve of the assembled A A^T."""
    a = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    a[idx, idx] = -1.0
    a[idx, idx + 1] = 1.0
    return float(np.linalg.eigvalsh(a @ a.T)[0])


def gaussian_mu(n: int) -> MuVector:
    """Gaussian-weight witness mu_i = pdf(quantile(i/N)), a near-optimal C(mu)."""
    return MuVector(np.array([_std_normal_pdf(std_normal_quantile(i / n))
                              for i in range(1, n - 1 + 1)]))


def _laplacian_banded(n: int) -> np.ndarray:
    """A A^T for the (N-1) weights, in solveh_banded upper form."""
    ab = np.zeros((2, n - 1))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    return ab


def _apply_laplacian(mu: np.ndarray) -> np.ndarray:
    out = 2.0 * mu
    out[:-1] -= mu[1:]
    out[1:] -= mu[:-1]
    return out


def _projected_grad_norm(mu: np.ndarray, n: int) -> float:
    """Norm of the gradient of log C on the unit sphere at mu/|mu|."""
    mu = mu / np.linalg.norm(mu)
    lmu = _apply_laplacian(mu)
    grad = 2.0 / (n - 1) / mu - 2.0 * lmu / float(mu @ lmu)
    grad -= (grad @ mu) * mu
    return float(np.linalg.norm(grad))


def _newton_stationary(mu0: np.ndarray, n: int, tol: float, max_iter: int = 200):
    """Damped Newton on the scale-fixed stationarity system L mu = 1/mu.

    Critical points of C(mu) satisfy (A A^T) mu proportional to 1/mu; fixing
    the scale by mu^T L mu = N - 1 turns this into L mu = 1/mu, whose
    Jacobian L + diag(1/mu^2) is positive definite.
    """
    mu = mu0.copy()
    lmu = _apply_laplacian(mu)
    scale = math.sqrt((n - 1) / float(mu @ lmu))
    mu *= scale
    ab = _laplacian_banded(n)
    for _ in range(max_iter):
        res = _apply_laplacian(mu) - 1.0 / mu
        rnorm = float(np.linalg.norm(res))
        if _projected_grad_norm(mu, n) < tol:
            return mu
        jac = ab.copy()
        jac[1, :] += 1.0 / mu**2
        step = -linalg.solveh_banded(jac, res)
        alpha = 1.0
        for _ in range(60):
            trial = mu + alpha * step
            if np.all(trial > 0.0):
                tres = _apply_laplacian(trial) - 1.0 / trial
                if float(np.linalg.norm(tres)) < rnorm:
                    mu = trial
                    break
            alpha *= 0.5
        else:
            return None
    return None


def c_of_n(n: int, tol: float = 1e-10, n_random_starts: int = 8, seed: int = 0) -> float:
    """Sharp entropy constant C(N) = sup C(mu), multi-started and bracketed.

    Starts from the uniform weights, the Gaussian weights and, optionally,
    random positive vectors; every converged stationary point is certified
    to projected-gradient norm < tol, and the best value is checked against
    the eigenvalue upper bound before being returned.
    """
    if n < 3:
        raise ValueError("need at least 3 particles")
    rng = np.random.default_rng(seed)
    starts = [np.ones(n - 1), gaussian_mu(n).mu]
    starts += [np.exp(rng.normal(size=n - 1)) for _ in range(n_random_starts)]
    best_val, best_mu = -np.inf, None
    for mu0 in starts:
        mu = _newton_stationary(np.asarray(mu0, dtype=float), n, tol)
        if mu is None:
            continue
        val = c_of_mu(MuVector(mu), n)
        if val > best_val:
            best_val, best_mu = val, mu
    if best_mu is None:
        raise NumericalFailure("C(N) optimizer did not converge", best=None)
    upper = 1.0 / (lambda_min(n) * (n - 1))
    if not 0.0 < best_val <= upper * (1.0 + 1e-9):
        raise NumericalFailure(
            f"C({n}) = {best_val} violates the eigenvalue bracket {upper}", best=best_mu)
    return best_val


@functools.lru_cache(maxsize=None)
def _cached_cn(n: int) -> float:
    return c_of_n(n)


def gamma0_mass_threshold(n: int) -> float:
    """Critical mass of the logarithmic kernel, 2(N+1)/N."""
    return 2.0 * (n + 1) / n


def gamma0_check(p: Params) -> Gamma0Class:
    threshold = gamma0_mass_threshold(p.n)
    if p.mass > threshold:
        return Gamma0Class.SUPERCRITICAL
    if p.mass < threshold:
        return Gamma0Class.SUBCRITICAL
    return Gamma0Class.CRITICAL


def classify_initial(state0: ParticleState, p: Params) -> Certificate:
    """Evaluate every applicable predicate and aggregate the verdict.

    The second-moment criteria require a zero center of mass; the state is
    recentered internally for those (all inputs they consume are translation
    invariant or evaluated on the recentered copy).
    """
    thresholds: dict = {}
    triggered = set()

    if p.gamma == 0.0:
        threshold = gamma0_mass_threshold(p.n)
        thresholds[CriterionTag.GAMMA0_MASS] = (threshold, p.mass)
        kind = gamma0_check(p)
        if kind is Gamma0Class.SUPERCRITICAL:
            triggered.add(CriterionTag.GAMMA0_MASS)
            verdict = Verdict.BLOWUP_CERTIFIED
        elif kind is Gamma0Class.SUBCRITICAL:
            verdict = Verdict.GLOBAL_CERTIFIED
        else:
            verdict = Verdict.UNCERTIFIED
        return Certificate(verdict, frozenset(triggered), thresholds)

    centered = recenter(state0)
    ge_ok, ge_thr = global_existence_check(state0, p)
    thresholds[CriterionTag.GE_4_8] = (ge_thr, p.gamma * model.phi(state0, p))
    if ge_ok:
        triggered.add(CriterionTag.GE_4_8)

    i2 = model.second_moment(centered)
    w_ok, w_thr = blowup_w_check(centered, p)
    thresholds[CriterionTag.BU_W_5_2] = (w_thr, i2)
    if w_ok:
        triggered.add(CriterionTag.BU_W_5_2)

    u_ok, u_thr = blowup_u_check(centered, p)
    thresholds[CriterionTag.BU_U_5_7] = (u_thr, i2)
    if u_ok:
        triggered.add(CriterionTag.BU_U_5_7)

    c_ok, c_thr = blowup_c_check(centered, p, _cached_cn(p.n))
    thresholds[CriterionTag.BU_C_5_10] = (c_thr, i2)
    if c_ok:
        triggered.add(CriterionTag.BU_C_5_10)

    blowup_tags = {CriterionTag.BU_W_5_2, CriterionTag.BU_U_5_7, CriterionTag.BU_C_5_10}
    if CriterionTag.GE_4_8 in triggered and triggered & blowup_tags:
        raise NumericalFailure(
            "incompatible certificates triggered together; this contradicts "
            f"the mutual-exclusion guarantee: {sorted(t.value for t in triggered)}")
    if triggered & blowup_tags:
        verdict = Verdict.BLOWUP_CERTIFIED
    elif CriterionTag.GE_4_8 in triggered:
        verdict = Verdict.GLOBAL_CERTIFIED
    else:
        verdict = Verdict.UNCERTIFIED
    return Certificate(verdict, frozenset(triggered), thresholds)
