"""Bridge between the continuous drift-diffusion problem and the particle scheme.

Supports two closed-form initial densities (Gaussian and Uniform), the
quantile-grid initialization of a particle state, evaluation of the
continuous blow-up criteria on the initial density, and tabulated
discrete-to-continuous convergence reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import model
from .model import Params, ParticleState, TimeScaling

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _std_normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


# Acklam's rational approximation of the standard normal quantile,
# refined below by one Newton step on the CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def std_normal_quantile(q: float) -> float:
    """Inverse standard normal CDF, accurate to well below 1e-10 on (0, 1)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile argument must lie in (0, 1), got {q}")
    if q > 0.5:
        # reflect to the lower tail: 1 - q is exact for q >= 0.5, and the
        # erfc-based Newton correction stays cancellation-free there
        return -std_normal_quantile(1.0 - q)
    p_low = 0.02425
    if q < p_low:
        z = math.sqrt(-2.0 * math.log(q))
        x = ((((( _C[0]*z + _C[1])*z + _C[2])*z + _C[3])*z + _C[4])*z + _C[5]) / \
            ((((_D[0]*z + _D[1])*z + _D[2])*z + _D[3])*z + 1.0)
    elif q <= 1.0 - p_low:
        z = q - 0.5
        r = z * z
        x = ((((( _A[0]*r + _A[1])*r + _A[2])*r + _A[3])*r + _A[4])*r + _A[5]) * z / \
            (((((_B[0]*r + _B[1])*r + _B[2])*r + _B[3])*r + _B[4])*r + 1.0)
    else:
        z = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -((((( _C[0]*z + _C[1])*z + _C[2])*z + _C[3])*z + _C[4])*z + _C[5]) / \
            ((((_D[0]*z + _D[1])*z + _D[2])*z + _D[3])*z + 1.0)
    # one Newton step on the CDF
    pdf = _std_normal_pdf(x)
    if pdf > 0.0:
        x -= (_std_normal_cdf(x) - q) / pdf
    return x


@dataclass(frozen=True)
class GaussianDensity:
    """Gaussian density of total mass ``mass`` (integrates to M, not 1)."""

    mean: float = 0.0
    sigma: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")

    def quantile(self, q: float) -> float:
        return self.mean + self.sigma * std_normal_quantile(q)

    def entropy(self) -> float:
        """Closed form of the internal energy, integral of rho log rho."""
        return self.mass * math.log(self.mass / (self.sigma * math.sqrt(2.0 * math.pi * math.e)))

    def second_moment(self) -> float:
        return self.mass * (self.sigma**2 + self.mean**2)


@dataclass(frozen=True)
class UniformDensity:
    """Uniform density on [a, b] of total mass ``mass``."""

    a: float
    b: float
    mass: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile argument must lie in (0, 1), got {q}")
        return self.a + q * (self.b - self.a)

    def entropy(self) -> float:
        return self.mass * math.log(self.mass / (self.b - self.a))

    def second_moment(self) -> float:
        a, b = self.a, self.b
        return self.mass * (a * a + a * b + b * b) / 3.0


DensitySpec = GaussianDensity | UniformDensity


def quantile_init(spec: DensitySpec, n: int, gamma: float,
                  time_scaling: TimeScaling = TimeScaling.PAPER) -> tuple[ParticleState, Params]:
    """Particle state X_i = F^{-1}(i h) on the regular mass grid, h = M/(N+1)."""
    if n < 3:
        raise ValueError("need at least 3 particles")
    x = np.array([spec.quantile(i / (n + 1)) for i in range(1, n + 1)])
    return ParticleState(x), Params(gamma=gamma, mass=spec.mass, n=n, time_scaling=time_scaling)


def _interaction_gaussian(spec: GaussianDensity, gamma: float) -> float:
    """Double integral of rho K_gamma rho; the difference of two samples of
    rho/M is Gaussian with variance 2 sigma^2, so this is an expectation of
    |z|^-gamma against that law.  The z^-gamma endpoint singularity on (0, 1)
    is removed by the substitution z = w^(1/(1-gamma))."""
    s = spec.sigma * math.sqrt(2.0)

    def pdf(z):
        return math.exp(-0.5 * (z / s) ** 2) / (s * _SQRT2PI)

    alpha = 1.0 / (1.0 - gamma)
    near, err1 = integrate.quad(lambda w: 2.0 * pdf(w**alpha) * alpha, 0.0, 1.0,
                                epsrel=1e-10, limit=200)
    far, err2 = integrate.quad(lambda z: 2.0 * pdf(z) * z**-gamma, 1.0, np.inf,
                               epsrel=1e-10, limit=200)
    value = spec.mass**2 / gamma * (near + far)
    if not math.isfinite(value):
        raise model.NumericalFailure("interaction quadrature did not converge")
    return value


def _interaction_uniform(spec: UniformDensity, gamma: float) -> float:
    # exact antiderivative of the inner integral in the z = x - y variable
    length = spec.b - spec.a
    return (2.0 * spec.mass**2 / gamma) * length**-gamma / ((1.0 - gamma) * (2.0 - gamma))


@dataclass(frozen=True)
class ContinuousReport:
    second_moment: float
    entropy: float
    interaction: float
    energy: float
    criterion_second_moment: bool   # (small second moment vs (M/2)^(2/gamma+1))
    criterion_energy: bool          # (second moment vs energy-based threshold)
    threshold_second_moment: float
    threshold_energy: float


def continuous_blowup_thresholds(mass: float, gamma: float, energy: float) -> tuple[float, float]:
    """The two second-moment thresholds certifying finite-time blow-up."""
    t1 = (mass / 2.0) ** (2.0 / gamma + 1.0)
    t2 = mass**3 / (2.0 * math.pi * math.exp(2.0 / gamma + 1.0)) * math.exp(-2.0 * energy / mass)
    return t1, t2


def continuous_report(spec: DensitySpec, gamma: float) -> ContinuousReport:
    """Functionals of the initial density and the two continuous blow-up predicates."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    i0 = spec.second_moment()
    entropy = spec.entropy()
    if isinstance(spec, GaussianDensity):
        interaction = _interaction_gaussian(spec, gamma)
    else:
        interaction = _interaction_uniform(spec, gamma)
    energy = entropy - 0.5 * interaction
    t1, t2 = continuous_blowup_thresholds(spec.mass, gamma, energy)
    return ContinuousReport(
        second_moment=i0,
        entropy=entropy,
        interaction=interaction,
        energy=energy,
        criterion_second_moment=i0 < t1,
        criterion_energy=i0 < t2,
        threshold_second_moment=t1,
        threshold_energy=t2,
    )


def convergence_report(spec: DensitySpec, gamma: float, n_list) -> list[dict]:
    """Tabulate discrete quantities of the quantile state against their
    continuous counterparts for each N in ``n_list``."""
    from . import criteria  # deferred: criteria imports this module

    cont = continuous_report(spec, gamma)
    rows = []
    for n in n_list:
        state, p = quantile_init(spec, n, gamma)
        xc = state.x - np.mean(state.x)
        centered = ParticleState(xc)
        i2 = p.h * float(np.dot(xc, xc))
        _, thr_w = criteria.blowup_w_check(centered, p)
        cn = criteria.c_of_n(n, n_random_starts=0)
        _, thr_c = criteria.blowup_c_check(centered, p, cn)
        u = model.entropy_u(state, p)
        w = model.interaction_w(state, p)
        rows.append({
            "n": n,
            "h": p.h,
            "discrete_i2": i2,
            "continuous_i": cont.second_moment,
            "i2_ratio": i2 / cont.second_moment,
            "bu_w_threshold_scaled": p.h * thr_w,
            "continuous_threshold_i": cont.threshold_second_moment,
            "bu_w_ratio": p.h * thr_w / cont.threshold_second_moment,
            "bu_c_threshold_scaled": p.h * thr_c,
            "continuous_threshold_e": cont.threshold_energy,
            "bu_c_ratio": p.h * thr_c / cont.threshold_energy,
            "discrete_u": u,
            "continuous_u": cont.entropy,
            "discrete_w": w,
            "continuous_w": cont.interaction / 2.0,
        })
    return rows
