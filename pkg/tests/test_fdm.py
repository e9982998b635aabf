import math

import numpy as np
import pytest

from eso_levy.fdm import FdmGrid, jump_stencil, price_fdm
from eso_levy.fst import price_eso
from eso_levy.levy import levy_mass
from eso_levy.spectral import GridSpec

from conftest import Q, R, table3_contract

FD = FdmGrid(N_fd=2000, M_fd=500)


def test_grid_validation():
    with pytest.raises(ValueError):
        FdmGrid(A=-1.0)
    with pytest.raises(ValueError):
        FdmGrid(jump_split="lumped")
    with pytest.raises(ValueError):
        FdmGrid(eps=0.0)


def test_terminal_slice_is_payoff(models):
    c = table3_contract()
    out = price_fdm(models["kou"], c, FD)
    assert np.array_equal(out["vested"].values[-1], c.payoff(FD.x))


def test_maximum_principle(models):
    out = price_fdm(models["merton"], table3_contract(t_v=2.0), FD)
    assert out["vested"].values.min() >= -1e-12
    assert out["unvested"].values.min() >= -1e-12


@pytest.mark.parametrize("name", ("merton", "kou"))
def test_stencil_discrete_martingale(models, name):
    st = jump_stencil(models[name].risk_neutral(R, Q), R, Q, FD)
    assert st.drift + 0.5 * st.sigma2 + st.beta == pytest.approx(R - Q, abs=1e-14)
    full = float(levy_mass(models[name], np.array([-np.inf, 0.0]), np.array([0.0, np.inf])).sum())
    h = 0.5 * FD.dx  # the central cell is left out of the jump sum
    central = float(levy_mass(models[name], np.array([-h, 0.0]), np.array([0.0, h])).sum())
    assert abs(full - central - st.alpha) < 1e-7


@pytest.mark.parametrize("name", ("gbm", "merton", "kou"))
def test_agrees_with_fst(models, name):
    c = table3_contract(t_v=2.0)
    fst = price_eso(models[name], c, GridSpec(6.0, 8192, 512)).value
    fd = price_fdm(models[name], c, FdmGrid(N_fd=4000, M_fd=1000))["value"]
    assert fd == pytest.approx(fst, rel=5e-3)


def test_boundary_monotone(models):
    b = price_fdm(models["kou"], table3_contract(), FD)["boundary"]
    assert np.all(np.diff(b.s_star) <= 0)
    assert np.all(b.s_star[:-1] > 10.0)


def test_vg_eps_convergence(models):
    c = table3_contract(T=2.0)
    g = FdmGrid(N_fd=4000, M_fd=500, eps=1e-3)
    v1 = price_fdm(models["vg"], c, g)["value"]
    v2 = price_fdm(models["vg"], c, FdmGrid(N_fd=4000, M_fd=500, eps=5e-4))["value"]
    assert abs(v1 - v2) < 1e-3


def test_explicit_jump_split_is_the_more_accurate(models):
    c = table3_contract(T=2.0)
    ref = price_eso(models["kou"], c, GridSpec(6.0, 8192, 1024)).value
    implicit = price_fdm(models["kou"], c, FdmGrid(N_fd=2000, M_fd=500, jump_split="implicit"))["value"]
    expl = price_fdm(models["kou"], c, FdmGrid(N_fd=2000, M_fd=500, jump_split="explicit"))["value"]
    assert abs(expl - ref) < abs(implicit - ref)
    assert implicit == pytest.approx(ref, rel=1e-2) and expl == pytest.approx(ref, rel=1e-3)


def test_metadata_records_closure(models):
    meta = price_fdm(models["cgmy"], table3_contract(T=1.0), FdmGrid(N_fd=1000, M_fd=100))["meta"]
    assert meta["closure"] == "call-forward" and meta["A"] == 6.0 and meta["eps"] >= 1e-3
