import math

import numpy as np
import pytest

from activescalar import EquationParams, SimConfig, simulate, step, velocity_from_theta
from activescalar.errors import BlowUpError, ValidationError
from activescalar.fields import ScalarField
from activescalar.solver import energy, gradient_max, linear_symbol, random_band_limited, rough_field, run, single_mode

SQG = EquationParams("sqg", 0.25)


def test_linear_decay_is_exact():
    eq = EquationParams("burgers", 0.999999, epsilon=0.0)
    theta = random_band_limited(64, 1, 10, 1.0, np.random.default_rng(0))
    dt = 0.05
    new = step(theta, eq, dt, nonlinear=False)
    expect = theta.spectrum * np.exp(linear_symbol(eq, 64) * dt)
    assert np.max(np.abs(new.spectrum - expect)) < 1e-10 * np.max(np.abs(theta.spectrum))


def test_heat_step_matches_exact_factor():
    eq = EquationParams("modified_sqg", 0.5, gamma=0.75, epsilon=0.5)
    theta = ScalarField.from_function(lambda X, Y: np.cos(2 * X + Y), 32, 2)
    new = step(theta, eq, 0.1, nonlinear=False)
    k2 = 5.0
    factor = math.exp(-(k2**0.5 + 0.5 * k2) * 0.1)
    np.testing.assert_allclose(new.values, factor * theta.values, atol=1e-14)


def test_sqg_single_mode_velocity():
    theta = single_mode(32, d=2)
    u = velocity_from_theta(theta, SQG)
    X, _ = theta.coordinates()
    np.testing.assert_allclose(u.components[0], 0.0, atol=1e-14)
    np.testing.assert_allclose(u.components[1], -np.sin(X), atol=1e-14)


def test_constant_field_has_no_velocity():
    u = velocity_from_theta(ScalarField(np.full((16, 16), 3.0)), SQG)
    assert u.max_speed == 0.0


@pytest.mark.parametrize("eq", [SQG, EquationParams("modified_sqg", 0.2, gamma=0.75)])
def test_velocity_is_divergence_free_and_mean_free(eq):
    theta = rough_field(64, 2, 0.3, 1.0, np.random.default_rng(1))
    u = velocity_from_theta(theta, eq)
    assert u.spectral_divergence() <= 1e-12 * u.max_speed
    for c in u.components:
        assert abs(c.mean()) < 1e-14


def test_burgers_velocity_is_theta():
    theta = single_mode(32)
    u = velocity_from_theta(theta, EquationParams("burgers", 0.3))
    np.testing.assert_array_equal(u.components[0], theta.values)


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        step(single_mode(16), SQG, 0.1)


def test_transform_round_trip():
    theta = rough_field(128, 2, 0.1, 1.0, np.random.default_rng(2))
    back = ScalarField.from_spectrum(theta.spectrum, 128, 2)
    assert np.max(np.abs(back.values - theta.values)) <= 1e-12 * theta.sup_norm


def _runs(eq, theta0, **kw):
    cfg = SimConfig(eq, theta0.N, kw.pop("dt", 1e-2), kw.pop("t_end", 1.0), record_every=kw.pop("record_every", 5),
                    **kw)
    return simulate(theta0, cfg)


def test_mean_conservation():
    theta0 = ScalarField(random_band_limited(64, 2, 8, 1.0, np.random.default_rng(3)).values + 0.7)
    recs, last = _runs(SQG, theta0, t_end=0.5)
    assert abs(last.mean - theta0.mean) < 1e-12


@pytest.mark.parametrize("eq,d", [(EquationParams("burgers", 0.25, epsilon=1e-3), 1), (SQG, 2)])
def test_sup_norm_and_energy_are_nonincreasing(eq, d):
    N = 256 if d == 1 else 64
    theta0 = random_band_limited(N, d, 6, 1.0, np.random.default_rng(4))
    recs, _ = _runs(eq, theta0, t_end=1.0, dt=5e-3, record_every=10)
    sup = np.array([r.sup_norm for r in recs])
    en = np.array([r.energy for r in recs])
    assert np.all(np.diff(sup) <= 1e-6)
    assert np.all(np.diff(en) <= 1e-8 * np.diff([r.t for r in recs]) + 1e-14)


def _final(integrator, dt, t_end=0.5):
    eq = EquationParams("burgers", 0.4, epsilon=0.05)
    theta0 = single_mode(64, amplitude=0.5)
    cfg = SimConfig(eq, 64, dt, t_end, integrator=integrator, record_every=10**6, cfl=1.0)
    return simulate(theta0, cfg)[1].values


@pytest.mark.parametrize("integrator,order", [("ifrk4", 3.5), ("imex", 1.8)])
def test_time_step_convergence(integrator, order):
    ref = _final("ifrk4", 1e-4)
    errs = [np.sqrt(np.mean((_final(integrator, dt) - ref) ** 2)) for dt in (0.02, 0.01)]
    assert math.log2(errs[0] / errs[1]) >= order


def test_records_and_config():
    eq = EquationParams("burgers", 0.3)
    cfg = SimConfig(eq, 64, 0.01, 0.1, record_every=3)
    recs = list(run(single_mode(64), cfg))
    t = [r.t for r, _ in recs]
    assert t[0] == 0.0 and t[-1] == pytest.approx(0.1) and np.all(np.diff(t) > 0)
    assert SimConfig.from_json(cfg.to_json()) == cfg
    for bad in (dict(N=48), dict(dt=0.0), dict(integrator="euler"), dict(cfl=2.0)):
        with pytest.raises(ValidationError):
            SimConfig(**({"eq": eq, "N": 64, "dt": 0.01, "t_end": 1.0} | bad))
    with pytest.raises(ValidationError):
        list(run(single_mode(32), cfg))


def test_cfl_limits_the_step():
    eq = EquationParams("burgers", 0.3)
    theta0 = single_mode(64, amplitude=50.0)
    cfg = SimConfig(eq, 64, 0.1, 0.1, record_every=1, cfl=0.5)
    recs, _ = simulate(theta0, cfg)
    dts = np.diff([r.t for r in recs])
    speed = np.array([r.sup_norm for r in recs[:-1]])
    assert np.all(dts <= 0.5 * (2 * math.pi / 64) / speed * (1 + 1e-9))
    assert dts.max() < 0.1


@pytest.mark.filterwarnings("ignore:overflow")
def test_blow_up_is_reported():
    eq = EquationParams("burgers", 0.3)
    theta0 = ScalarField(1e200 * np.sin(np.arange(16)))
    with pytest.raises(BlowUpError) as info:
        simulate(theta0, SimConfig(eq, 16, 0.1, 1.0, cfl=1.0))
    assert info.value.t > 0


def test_initial_data_generators():
    rng = np.random.default_rng(5)
    for f in (random_band_limited(64, 1, 5, 0.3, rng), rough_field(32, 2, 0.1, 0.3, rng)):
        assert f.sup_norm == pytest.approx(0.3) and abs(f.mean) < 1e-15
    assert single_mode(8, d=2).values[0, 3] == 1.0
    assert gradient_max(single_mode(64, k=3, amplitude=2)) == pytest.approx(6.0, rel=1e-12)
    assert energy(single_mode(64)) == pytest.approx(0.5 * math.pi, rel=1e-12)


@pytest.mark.slow
def test_supercritical_burgers_steepens():
    eq = EquationParams("burgers", 0.25)
    theta0 = single_mode(4096, amplitude=2.0)
    recs, _ = simulate(theta0, SimConfig(eq, 4096, 1e-3, 1.5, record_every=50))
    g = np.array([r.max_gradient for r in recs])
    assert g.max() >= 10 * g[0]


@pytest.mark.slow
def test_viscous_burgers_completes():
    eq = EquationParams("burgers", 0.25, epsilon=1e-3)
    recs, last = simulate(single_mode(4096, amplitude=2.0), SimConfig(eq, 4096, 1e-3, 5.0, record_every=500))
    assert last.t == pytest.approx(5.0) and np.isfinite(last.values).all()


@pytest.mark.slow
def test_subcritical_burgers_stays_smooth():
    eq = EquationParams("burgers", 0.6)
    recs, _ = simulate(single_mode(1024), SimConfig(eq, 1024, 2e-3, 10.0, record_every=250))
    g = np.array([r.max_gradient for r in recs])
    assert g.max() <= 1.5 * g[0]
