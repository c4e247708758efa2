import math

import numpy as np
import pytest

from collapse_lab import model
from collapse_lab.model import (DomainError, Params, ParticleState,
                                TimeScaling)
from conftest import random_state

P_HALF = Params(gamma=0.5, mass=1.0, n=3)   # h = 0.25
P_LOG = Params(gamma=0.0, mass=1.0, n=3)
X012 = ParticleState(np.array([0.0, 1.0, 2.0]))


def test_params_h():
    assert P_HALF.h == 0.25
    p = Params(gamma=0.3, mass=2.5, n=9)
    assert p.h * (p.n + 1) == pytest.approx(p.mass, rel=1e-15)


def test_state_requires_increasing_finite():
    with pytest.raises(DomainError):
        ParticleState(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(DomainError):
        ParticleState(np.array([1.0, 0.0, 2.0]))
    with pytest.raises(DomainError):
        ParticleState(np.array([0.0, 1.0, np.inf]))


def test_entropy_hand_value():
    # -h * sum log(gap / h) with unit gaps and h = 1/4
    assert model.entropy_u(X012, P_HALF) == pytest.approx(-0.5 * math.log(4.0),
                                                          rel=1e-12)


def test_entropy_zero_at_grid_spacing():
    x = np.arange(3) * P_HALF.h
    assert model.entropy_u(ParticleState(x), P_HALF) == 0.0


def test_entropy_translation_invariant():
    shifted = ParticleState(X012.x - 1.0)
    assert model.entropy_u(shifted, P_HALF) == model.entropy_u(X012, P_HALF)


def test_interaction_hand_values():
    expected = 0.125 * (1.0 + 1.0 + 2.0 ** -0.5)
    assert model.interaction_w(X012, P_HALF) == pytest.approx(expected, rel=1e-12)
    assert model.interaction_w(X012, P_LOG) == pytest.approx(
        -0.0625 * math.log(2.0), rel=1e-12)


def test_energy_is_entropy_minus_interaction():
    assert model.energy_g(X012, P_HALF) == pytest.approx(
        -0.6931472 - 0.3383883, abs=1e-6)
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = random_state(rng, 5)
        p = Params(gamma=0.4, mass=1.5, n=5)
        assert model.energy_g(s, p) == model.entropy_u(s, p) - \
            model.interaction_w(s, p)


def test_energy_scaling_laws():
    rng = np.random.default_rng(2)
    for lam in (0.5, 2.0, 3.7):
        s = random_state(rng, 4)
        p = Params(gamma=0.6, mass=1.2, n=4)
        scaled = ParticleState(lam * s.x)
        expected = (-p.h * (p.n - 1) * math.log(lam)
                    + model.entropy_u(s, p)
                    - lam ** -p.gamma * model.interaction_w(s, p))
        assert model.energy_g(scaled, p) == pytest.approx(expected, rel=1e-12)
        p0 = Params(gamma=0.0, mass=1.2, n=4)
        diff = model.energy_g(ParticleState(lam * s.x), p0) - model.energy_g(s, p0)
        slope = (-p0.h * (p0.n - 1) + p0.h ** 2 * p0.n * (p0.n - 1) / 2.0)
        assert diff == pytest.approx(slope * math.log(lam), rel=1e-12, abs=1e-14)


def test_phi_hand_value_and_sandwich():
    assert model.phi(X012, P_HALF) == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(3, 8))
        p = Params(gamma=float(rng.uniform(0.1, 0.9)), mass=1.0, n=n)
        s = random_state(rng, n)
        w = model.interaction_w(s, p)
        f = model.phi(s, p)
        assert p.h * f < w < (p.h * p.n / 2.0) * f


def test_velocity_hand_value():
    v = model.velocity(X012, P_HALF)
    expected = -1.0 + 0.25 * (1.0 + 2.0 ** -1.5)
    assert v[0] == pytest.approx(expected, rel=1e-12)
    assert v[1] == 0.0
    assert v[2] == pytest.approx(-expected, rel=1e-12)


def test_velocity_momentum_conserved():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        n = int(rng.integers(3, 9))
        p = Params(gamma=float(rng.uniform(0.05, 0.95)), mass=2.0, n=n)
        v = model.velocity(random_state(rng, n), p)
        assert abs(np.sum(v)) < 1e-12 * np.max(np.abs(v))


def test_velocity_gamma0_conventions():
    v_paper = model.velocity(X012, P_LOG)
    p_uniform = Params(gamma=0.0, mass=1.0, n=3,
                       time_scaling=TimeScaling.UNIFORM)
    v_uniform = model.velocity(X012, p_uniform)
    np.testing.assert_allclose(v_uniform, v_paper / P_LOG.h, rtol=1e-14)


def test_virial_rhs_matches_inner_product():
    # oracle: the dissipation identity 2 <X, velocity(X)> on the zero-mean
    # representative; the closed form evaluates to (2/h)(h(N-1) - gamma W)
    xc = ParticleState(X012.x - 1.0)
    lhs = 2.0 * float(np.dot(xc.x, model.velocity(xc, P_HALF)))
    assert lhs == pytest.approx(2.6464466, abs=1e-7)
    assert model.virial_rhs(X012, P_HALF) == pytest.approx(lhs, rel=1e-12)


def test_virial_gamma0_constant():
    assert model.virial_rhs(X012, P_LOG) == pytest.approx(0.625, rel=1e-15)
    other = ParticleState(np.array([-3.0, 0.1, 5.0]))
    assert model.virial_rhs(other, P_LOG) == pytest.approx(0.625, rel=1e-15)
    # h = 2/N balances drift exactly
    p_crit = Params(gamma=0.0, mass=8.0 / 3.0, n=3)
    assert model.virial_rhs(X012, p_crit) == pytest.approx(0.0, abs=1e-15)


def test_rescale_identity_and_phi_invariance():
    s, p = model.rescale(X012, P_HALF, 1.0)
    np.testing.assert_array_equal(s.x, X012.x)
    assert p.h == P_HALF.h
    rng = np.random.default_rng(5)
    for lam in (0.5, 2.0, 10.0):
        orig = random_state(rng, 5)
        p0 = Params(gamma=0.7, mass=1.0, n=5)
        scaled, ps = model.rescale(orig, p0, lam)
        assert model.phi(scaled, ps) == pytest.approx(model.phi(orig, p0),
                                                      rel=1e-12)


def test_gradient_consistency_spot():
    rng = np.random.default_rng(6)
    p = Params(gamma=0.5, mass=1.0, n=4)
    s = random_state(rng, 4)
    v = model.velocity(s, p)
    step = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = step
        fd = (model.energy_g(ParticleState(s.x + e), p)
              - model.energy_g(ParticleState(s.x - e), p)) / (2.0 * step)
        assert v[i] == pytest.approx(-fd / p.h, rel=1e-6, abs=1e-8)


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(7)
    for p in (Params(gamma=0.5, mass=1.0, n=4), Params(gamma=0.0, mass=1.0, n=4)):
        s = random_state(rng, 4, log_lo=-0.5, log_hi=0.5)
        hess = model.hessian_g(s, p)
        step = 1e-5
        for i in range(4):
            for j in range(4):
                ei = np.zeros(4); ei[i] = step
                ej = np.zeros(4); ej[j] = step
                fd = (model.energy_g(ParticleState(s.x + ei + ej), p)
                      - model.energy_g(ParticleState(s.x + ei - ej), p)
                      - model.energy_g(ParticleState(s.x - ei + ej), p)
                      + model.energy_g(ParticleState(s.x - ei - ej), p)) \
                    / (4.0 * step * step)
                assert hess[i, j] == pytest.approx(fd, rel=5e-4, abs=1e-6)
        np.testing.assert_allclose(hess, hess.T, atol=1e-12)


def test_diagnostics_fields():
    d = model.diagnostics(X012, P_HALF)
    assert d.g == pytest.approx(d.u - d.w, abs=1e-15)
    assert d.virial_residual < 1e-12
    assert d.min_gap == 1.0
    assert d.com == 1.0
    assert d.i2 == pytest.approx(5.0)
    s = ParticleState(np.array([-1.0, 0.0, 1.0]))
    assert model.second_moment(s) == 2.0
    assert model.center_of_mass(s) == 0.0
    np.testing.assert_array_equal(model.gaps(X012).y, [1.0, 1.0])


def test_translation_invariance():
    rng = np.random.default_rng(8)
    p = Params(gamma=0.35, mass=1.0, n=5)
    s = random_state(rng, 5)
    shifted = ParticleState(s.x + 3.25)
    for fn in (model.entropy_u, model.interaction_w, model.energy_g, model.phi):
        assert fn(shifted, p) == pytest.approx(fn(s, p), rel=1e-12)
    np.testing.assert_allclose(model.velocity(shifted, p),
                               model.velocity(s, p), rtol=1e-10, atol=1e-12)
