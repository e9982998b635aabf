import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eso_levy.levy import (DomainError, LevyModel, UnsupportedModelError, characteristic_exponent, levy_density,
                           levy_mass, model_from_dict, risk_neutral_drift, small_jump_variance, variance_rate)
from eso_levy.oracles import levy_increments

from conftest import Q, R

ALL = ("gbm", "merton", "kou", "vg", "cgmy")


def test_gbm_exponent_examples():
    m = LevyModel.gbm(0.2, drift=-0.01)
    assert characteristic_exponent(m, 0.0) == 0
    assert abs(characteristic_exponent(m, -1j) - 0.01) < 1e-15


def test_kou_risk_neutral_martingale():
    m = LevyModel.kou(0.2, 3.0, 0.5, 50.0, 25.0).risk_neutral(R, Q)
    assert abs(characteristic_exponent(m, -1j) - (R - Q)) < 1e-12


def test_gbm_drift_value():
    assert risk_neutral_drift(LevyModel.gbm(0.2), R, Q) == pytest.approx(-0.01, abs=1e-15)


def test_merton_drift_value():
    m = LevyModel.merton(0.2, 3.0, 0.02, 0.045)
    expect = 0.01 - 0.02 - 3.0 * (math.exp(0.02 + 0.045**2 / 2) - 1.0)
    assert risk_neutral_drift(m, R, Q) == pytest.approx(expect, abs=1e-14)


@pytest.mark.parametrize("name", ALL)
def test_martingale_residual_table3(models, name):
    m = models[name].risk_neutral(R, Q)
    assert abs(characteristic_exponent(m, -1j) - (R - Q)) < 1e-12


@pytest.mark.parametrize("name", ALL)
def test_zero_carry(models, name):
    m = models[name].risk_neutral(0.03, 0.03)
    assert abs(characteristic_exponent(m, -1j)) < 1e-12


@pytest.mark.parametrize("name", ALL)
@given(w=st.floats(-200, 200, allow_nan=False))
def test_exponent_properties(models, name, w):
    m = models[name].risk_neutral(R, Q)
    psi = characteristic_exponent(m, w)
    assert psi.real <= 1e-12
    assert abs(characteristic_exponent(m, -w) - np.conj(psi)) <= 1e-10 * max(1.0, abs(psi))
    assert characteristic_exponent(m, 0.0) == 0


def test_domain_error_outside_strip():
    m = LevyModel.kou(0.2, 3.0, 0.5, 50.0, 25.0)
    with pytest.raises(DomainError):
        characteristic_exponent(m, -50j)
    with pytest.raises(DomainError):
        characteristic_exponent(m, 25j)


def test_risk_neutral_needs_exponential_moment():
    with pytest.raises(ValueError):
        LevyModel.kou(0.2, 3.0, 0.5, 1.0, 25.0)
    with pytest.raises(ValueError):
        LevyModel.cgmy(1.0, 5.0, 1.0, 0.5)


def test_kou_density_value():
    m = LevyModel.kou(0.2, 3.0, 0.5, 50.0, 25.0)
    assert levy_density(m, 0.02) == pytest.approx(3 * 0.5 * 50 * math.exp(-1), rel=1e-14)


def test_cgmy_density_value():
    m = LevyModel.cgmy(1.1, 10.0, 10.0, 0.6)
    assert levy_density(m, 0.1) == pytest.approx(1.1 * math.exp(-1) / 0.1**1.6, rel=1e-14)


def test_merton_density_tails(models):
    assert levy_density(models["merton"], np.array([-50.0, 50.0])).max() == 0.0


def test_gbm_has_no_density(models):
    with pytest.raises(UnsupportedModelError):
        levy_density(models["gbm"], 0.1)


@pytest.mark.parametrize("name", ("merton", "kou"))
def test_finite_activity_mass(models, name):
    from scipy.integrate import quad

    m = models[name]
    f = lambda y: float(levy_density(m, y))  # noqa: E731
    total = quad(f, -np.inf, -1e-12, limit=200)[0] + quad(f, 1e-12, np.inf, limit=200)[0]
    assert total == pytest.approx(3.0, rel=1e-8)
    mass = levy_mass(m, np.array([-np.inf, 0.0]), np.array([0.0, np.inf])).sum()
    assert mass == pytest.approx(3.0, rel=1e-10)


@pytest.mark.parametrize("name", ("vg", "cgmy"))
def test_small_jump_variance_quadrature(models, name):
    from scipy.integrate import quad

    m = models[name]
    eps = 1e-2
    f = lambda y: y * y * float(levy_density(m, y))  # noqa: E731
    num = quad(f, -eps, 0, limit=200)[0] + quad(f, 0, eps, limit=200)[0]
    assert small_jump_variance(m, eps) == pytest.approx(num, rel=1e-7)


@pytest.mark.parametrize("name", ("gbm", "merton", "kou"))
def test_variance_rate_matches_moments(models, name):
    m = models[name]
    v = m.sigma**2
    if name == "merton":
        jp = m.jump_params
        v += jp["alpha"] * (jp["mu_tilde"] ** 2 + jp["sigma_tilde"] ** 2)
    if name == "kou":
        jp = m.jump_params
        v += jp["alpha"] * 2 * (jp["p"] / jp["eta_plus"] ** 2 + (1 - jp["p"]) / jp["eta_minus"] ** 2)
    assert variance_rate(m) == pytest.approx(v, rel=1e-6)


@pytest.mark.parametrize("name", ("gbm", "merton", "kou"))
def test_characteristic_function_by_simulation(models, name):
    m = models[name].risk_neutral(R, Q)
    rng = np.random.default_rng(11)
    x = np.concatenate([levy_increments(m, np.ones(100_000), rng) for _ in range(10)])
    for w in (1.0, 5.0, 10.0):
        z = np.exp(1j * w * x)
        se = math.sqrt((z.real.var() + z.imag.var()) / x.size)
        assert abs(z.mean() - np.exp(characteristic_exponent(m, w))) < 3 * se + 1e-12


def test_model_from_dict_roundtrip():
    m = model_from_dict({"kind": "merton", "sigma": 0.2, "alpha": 3, "mu_tilde": 0.02, "sigma_tilde": 0.045})
    assert m == LevyModel.merton(0.2, 3, 0.02, 0.045)
    with pytest.raises(ValueError):
        model_from_dict({"kind": "gbm", "sigma": 0.2, "alpha": 1})


def test_parameter_validation():
    with pytest.raises(ValueError):
        LevyModel.kou(0.2, 3.0, 1.5, 50.0, 25.0)
    with pytest.raises(ValueError):
        LevyModel.gbm(0.0)
    with pytest.raises(ValueError):
        LevyModel("merton", 0.2, {"alpha": 1.0})
