import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from eso_levy import oracles
from eso_levy.contract import ContractSpec, ExerciseBoundary, IntensitySpec
from eso_levy.levy import LevyModel, characteristic_exponent
from eso_levy.oracles import KouSeriesSpec, McSpec, closed_form_exceed, hh, hh_recurrence, kou_tail

V = 10 / 252
MU = 0.08

# [DERIVED] Gil-Pelaez inversion of the characteristic function, agreement ~1e-11
FROZEN = {
    "gbm": (0.1194607386644907, 0.7974862387985714),
    "merton": (0.14359733860861346, 0.7992563140855653),
    "kou": (0.12323178065366579, 0.7845376911109772),
}


def gil_pelaez(model, v, a):
    f = lambda w: (np.exp(v * characteristic_exponent(model, w) - 1j * w * a) / (1j * w)).real
    return 0.5 + integrate.quad(f, 0, np.inf, limit=2000, epsabs=1e-13)[0] / math.pi


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_closed_form_frozen(models, name):
    pm = models[name].historical(MU)
    up, down = FROZEN[name]
    assert closed_form_exceed(pm, V, 0.0, 0.05, lam_pre=0.1) == pytest.approx(up, abs=1e-9)
    assert closed_form_exceed(pm, V, 0.0, -0.03) == pytest.approx(down, abs=1e-9)


@pytest.mark.parametrize("a", (-0.2, -0.05, 0.0, 0.02, 0.15))
def test_kou_tail_vs_inversion(models, a):
    pm = models["kou"].historical(MU)
    assert kou_tail(pm, 0.5, a) == pytest.approx(gil_pelaez(pm, 0.5, a), abs=1e-8)


def test_kou_series_truncation(models):
    pm = models["kou"].historical(MU)
    for a in (-0.1, 0.04):
        assert abs(kou_tail(pm, 1.0, a, KouSeriesSpec(n_max=20)) - kou_tail(pm, 1.0, a, KouSeriesSpec(n_max=40))) < 1e-8


def test_kou_asymmetric_jumps():
    m = LevyModel.kou(0.15, 5.0, 0.3, 10.0, 4.0, drift=0.02)
    for a in (-0.3, 0.1):
        assert kou_tail(m, 0.7, a) == pytest.approx(gil_pelaez(m, 0.7, a), abs=1e-8)


def test_closed_form_infinite_level_and_unsupported(models):
    pm = models["gbm"].historical(MU)
    assert closed_form_exceed(pm, V, 0.0, math.inf) == 0.0
    assert closed_form_exceed(pm, V, 0.0, -math.inf, lam_pre=0.1) == pytest.approx(math.exp(-0.1 * V))
    with pytest.raises(ValueError):
        closed_form_exceed(models["vg"].historical(MU), V, 0.0, 0.0)


def hh_quad(n, x):
    return integrate.quad(lambda t: (t - x) ** n * math.exp(-t * t / 2), x, np.inf, epsabs=1e-15)[0] / math.factorial(n)


@pytest.mark.parametrize("n", (0, 1, 3, 6))
@pytest.mark.parametrize("x", (-3.0, -0.5, 0.0, 1.7, 2.5, 5.0))
def test_hh_matches_quadrature(n, x):
    ref = hh_quad(n, x)
    assert float(hh(n, x)) == pytest.approx(ref, rel=1e-8, abs=1e-300)


def test_hh_branch_continuity():
    for n in (0, 2, 5, 9):
        lo = hh_recurrence(n, 2.0)[-1]
        d, _ = __import__("scipy").special.pbdv(-n - 1.0, 2.0)
        assert float(lo) == pytest.approx(math.exp(-1.0) * d, rel=1e-9)


def test_hh_minus_one_and_validation():
    assert float(hh(-1, 1.3)) == pytest.approx(math.exp(-0.5 * 1.69))
    with pytest.raises(ValueError):
        hh(-2, 0.0)


@given(st.integers(0, 8), st.floats(-4, 8))
def test_hh_positive_decreasing(n, x):
    a, b = float(hh(n, x)), float(hh(n, x + 0.1))
    assert a > 0 and b < a


# -- Monte Carlo -------------------------------------------------------------------


def contract(lam=0.2, lam_pre=0.1, q=0.04):
    return ContractSpec(10.0, 10.0, 0.05, q, 2.0, 0.5, IntensitySpec.constant(lam, lam_pre))


NEVER = ExerciseBoundary(np.array([0.0, 2.0]), np.array([np.inf, np.inf]), 10.0)


def test_mc_reproducible_per_seed(models):
    pm = models["merton"].historical(MU)
    mc = McSpec(n_paths=20_000, n_steps=50, seed=7, batch=6_000)
    a = oracles.mc_probability(pm, contract(), NEVER, "exceed2", 0.5, 1.5, 0.0, lambda s: 0.05, mc)
    b = oracles.mc_probability(pm, contract(), NEVER, "exceed2", 0.5, 1.5, 0.0, lambda s: 0.05, mc)
    assert a == b
    c = oracles.mc_probability(pm, contract(), NEVER, "exceed2", 0.5, 1.5, 0.0, lambda s: 0.05,
                               McSpec(n_paths=20_000, n_steps=50, seed=8, batch=6_000))
    assert c.mean != a.mean


def test_mc_seed_stability(models):
    pm = models["kou"].historical(MU)
    ref = closed_form_exceed(pm, 0.25, 0.0, 0.02, lam_pre=0.1)
    z = []
    for seed in range(20):
        e = oracles.mc_probability(pm, contract(), None, "exceed1", 0.0, 0.25, 0.0, lambda s: 0.02,
                                   McSpec(n_paths=5_000, seed=seed))
        z.append((e.mean - ref) / e.se)
    assert max(abs(v) for v in z) < 4.0
    assert abs(np.mean(z)) < 4.0 / math.sqrt(20)


@pytest.mark.parametrize("name", ("gbm", "merton", "kou"))
def test_mc_exceed1_vs_closed_form(models, name):
    pm = models[name].historical(MU)
    ref = closed_form_exceed(pm, V, 0.0, 0.03, lam_pre=0.1)
    e = oracles.mc_probability(pm, contract(), None, "exceed1", 0.0, V, 0.0, lambda s: 0.03, McSpec(n_paths=200_000))
    assert e.within(ref, 3.0)


def test_mc_term1_formula(models):
    e = oracles.mc_probability(models["gbm"].historical(MU), contract(lam_pre=0.3), None, "term1", 0.0, 0.5,
                               mc=McSpec(n_paths=200_000))
    assert e.within(-math.expm1(-0.15), 3.0)


def test_mc_heavy_termination_and_deterministic(models):
    pm = models["gbm"].historical(MU)
    e = oracles.mc_probability(pm, contract(lam_pre=50.0), None, "exceed1", 0.0, 0.5, 0.0, lambda s: -1.0,
                               McSpec(n_paths=20_000))
    assert e.mean < 1e-9
    calm = LevyModel.gbm(1e-9, drift=0.1)
    hit = oracles.mc_probability(calm, contract(lam_pre=0.0), None, "exceed1", 0.0, 1.0, 0.0, lambda s: 0.099,
                                 McSpec(n_paths=1_000))
    miss = oracles.mc_probability(calm, contract(lam_pre=0.0), None, "exceed1", 0.0, 1.0, 0.0, lambda s: 0.101,
                                  McSpec(n_paths=1_000))
    assert hit.mean == 1.0 and miss.mean == 0.0


def test_mc_term2_never_exercise_is_termination_only(models):
    pm = models["merton"].historical(MU)
    e = oracles.mc_probability(pm, contract(lam=0.4), NEVER, "term2", 0.5, 1.5, mc=McSpec(n_paths=100_000, n_steps=100))
    assert e.within(-math.expm1(-0.4), 3.0)


def test_mc_antithetic_halves_units(models):
    pm = models["gbm"].historical(MU)
    e = oracles.mc_probability(pm, contract(), None, "exceed1", 0.0, 0.5, 0.0, lambda s: 0.0,
                               McSpec(n_paths=40_000, antithetic=True))
    ref = closed_form_exceed(pm, 0.5, 0.0, 0.0, lam_pre=0.1)
    assert e.within(ref, 3.0)


def test_mc_european_price(models):
    from eso_levy.fst import price_eso
    from eso_levy.spectral import GridSpec

    c = ContractSpec(10.0, 10.0, 0.05, 0.04, 2.0, 0.0, IntensitySpec.constant(0.2, 0.1))
    ref = price_eso(models["kou"], c, GridSpec(6.0, 4096, 256), american=False).value
    e = oracles.mc_price(models["kou"], c, None, McSpec(n_paths=200_000))
    assert e.within(ref, 3.0)


def test_mc_rejects_bad_inputs(models):
    with pytest.raises(ValueError):
        oracles.mc_probability(models["vg"].historical(MU), contract(), None, "term1", 0.0, 1.0)
    with pytest.raises(ValueError):
        oracles.mc_probability(models["gbm"].risk_neutral(0.05, 0.04), contract(), None, "term1", 0.0, 1.0)
    with pytest.raises(ValueError):
        oracles.mc_probability(models["gbm"].historical(MU), contract(), None, "nope", 0.0, 1.0)


def test_levy_increments_merton_moments(models, rng):
    m = models["merton"]
    x = oracles.levy_increments(m, np.full(400_000, 0.5), rng)
    jp = m.jump_params
    mean = 0.5 * (m.drift + jp["alpha"] * jp["mu_tilde"])
    var = 0.5 * (m.sigma**2 + jp["alpha"] * (jp["sigma_tilde"] ** 2 + jp["mu_tilde"] ** 2))
    assert x.mean() == pytest.approx(mean, abs=4 * math.sqrt(var / x.size))
    assert x.var() == pytest.approx(var, rel=0.02)
