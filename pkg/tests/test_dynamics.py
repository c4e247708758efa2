import numpy as np
import pytest

from collapse_lab import analysis, dynamics, model
from collapse_lab.dynamics import (IntegratorConfig, Method, Outcome,
                                   OutcomeKind, RunClass, TrajectoryRecord)
from collapse_lab.model import Params, ParticleState
from conftest import random_state

P_HALF = Params(gamma=0.5, mass=1.0, n=3)
SPREAD = ParticleState(np.array([-1.0, 0.0, 1.0]))
TIGHT = ParticleState(np.array([-0.05, 0.0, 0.05]))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt_min=1.0, dt_init=0.1)
    with pytest.raises(ValueError):
        IntegratorConfig(collision_eps=0.0)


def test_gamma0_affine_second_moment():
    p = Params(gamma=0.0, mass=1.0, n=3)
    cfg = IntegratorConfig(rtol=1e-10, atol=1e-12, t_max=5.0, sample_every=0.1)
    record, outcome = dynamics.simulate(SPREAD, p, cfg)
    assert outcome.kind is OutcomeKind.REACHED_TMAX
    t = np.array([s[0] for s in record.samples])
    i2 = np.array([s[2].i2 for s in record.samples])
    slope = np.polyfit(t, i2, 1)[0]
    assert slope == pytest.approx(0.625, rel=1e-6)


def test_global_run_reaches_tmax():
    cfg = IntegratorConfig(t_max=20.0, sample_every=0.5)
    record, outcome = dynamics.simulate(SPREAD, P_HALF, cfg)
    assert outcome.kind is OutcomeKind.REACHED_TMAX
    assert np.all(record.min_gaps() > 10.0 * cfg.collision_eps)
    phis = np.array([s[2].phi for s in record.samples])
    assert np.all(np.diff(phis) <= 1e-9)
    assert dynamics.classify_run(record, outcome, P_HALF, cfg) is \
        RunClass.GLOBAL_OBSERVED


def test_blowup_run_reaches_collision():
    cfg = IntegratorConfig(t_max=50.0, sample_every=0.01)
    record, outcome = dynamics.simulate(TIGHT, P_HALF, cfg)
    assert outcome.kind is OutcomeKind.COLLISION
    assert outcome.t_star is not None and outcome.t_star > 0.0
    assert outcome.pair is not None
    assert dynamics.classify_run(record, outcome, P_HALF, cfg) is \
        RunClass.BLOWUP_OBSERVED


def test_samples_increasing_and_com_conserved():
    cfg = IntegratorConfig(t_max=10.0, sample_every=0.2)
    record, _ = dynamics.simulate(SPREAD, P_HALF, cfg)
    t = np.array([s[0] for s in record.samples])
    assert np.all(np.diff(t) > 0.0)
    coms = np.array([s[2].com for s in record.samples])
    assert np.max(np.abs(coms - coms[0])) < 1e-9
    # the virial identity is algebraic, independent of integration error
    assert max(s[2].virial_residual for s in record.samples) < 1e-10


def test_energy_dissipates_along_samples():
    cfg = IntegratorConfig(t_max=10.0, sample_every=0.2)
    record, _ = dynamics.simulate(SPREAD, P_HALF, cfg)
    g = np.array([s[2].g for s in record.samples])
    tol = 10.0 * (cfg.rtol * np.max(np.abs(g)) + cfg.atol)
    assert np.all(np.diff(g) <= tol)


def test_implicit_euler_richardson_order():
    rng = np.random.default_rng(20)
    s = random_state(rng, 4, log_lo=-0.5, log_hi=0.5)
    p = Params(gamma=0.5, mass=1.0, n=4)
    cfg = IntegratorConfig(method=Method.IMPLICIT_EULER)
    errs = []
    for dt in (1e-3, 5e-4):
        out = dynamics.step_implicit_euler(s, p, dt, cfg)
        explicit = s.x + dt * model.velocity(s, p)
        errs.append(np.linalg.norm(out.x - explicit))
    # halving dt shrinks the defect by about 4 (second order)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_implicit_euler_fixed_point_at_equilibrium():
    cp = analysis.symmetric_critical_point(P_HALF)
    cfg = IntegratorConfig(method=Method.IMPLICIT_EULER)
    out = dynamics.step_implicit_euler(cp.state, P_HALF, 1e-3, cfg)
    np.testing.assert_allclose(out.x, cp.state.x, atol=1e-11)


def test_implicit_euler_energy_never_increases():
    rng = np.random.default_rng(21)
    cfg = IntegratorConfig(method=Method.IMPLICIT_EULER)
    for _ in range(100):
        n = int(rng.integers(3, 6))
        p = Params(gamma=float(rng.uniform(0.2, 0.8)), mass=1.0, n=n)
        s = random_state(rng, n, log_lo=-1.0, log_hi=0.5)
        out = dynamics.step_implicit_euler(s, p, 1e-3, cfg)
        assert model.energy_g(out, p) <= model.energy_g(s, p) + 1e-10


def test_implicit_driver_matches_rk45_classification():
    cfg = IntegratorConfig(method=Method.IMPLICIT_EULER, t_max=5.0,
                           dt_init=1e-3, sample_every=0.5)
    record, outcome = dynamics.simulate(TIGHT, P_HALF, cfg)
    assert outcome.kind is OutcomeKind.COLLISION


def test_classify_underflow_far_from_collision():
    state = SPREAD
    d = model.diagnostics(state, P_HALF)
    record = TrajectoryRecord(samples=[(0.0, state, d)],
                              tail=[(0.0, d.min_gap)], step_count=1)
    outcome = Outcome(kind=OutcomeKind.STEP_UNDERFLOW, t=0.0)
    cfg = IntegratorConfig()
    assert dynamics.classify_run(record, outcome, P_HALF, cfg) is \
        RunClass.UNDETERMINED
