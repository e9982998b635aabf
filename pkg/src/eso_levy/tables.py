"""Reproduction drivers for the published tables and figure data series.

Every driver returns a list of flat row dicts; ``write_rows`` turns them into
CSV. Reference values are the published numbers, kept here for comparison.
"""

from __future__ import annotations

import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import oracles, perpetual, risk
from .contract import ContractSpec, IntensitySpec, fmt
from .fdm import FdmGrid, price_fdm
from .fst import price_barrier, price_eso
from .levy import TABLE3_MODELS, LevyModel
from .spectral import GridSpec

WORKERS_ENV = "ESO_LEVY_WORKERS"

TV = (0.0, 2.0, 4.0)

REFERENCE_T3 = {
    "gbm": {"FST": (1.3736, 1.3822, 1.2365), "FDM": (1.3730, 1.3816, 1.2360)},
    "merton": {"FST": (1.4820, 1.4899, 1.3313), "FDM": (1.4803, 1.4887, 1.3306)},
    "kou": {"FST": (1.4566, 1.4648, 1.3091), "FDM": (1.4558, 1.4646, 1.3104)},
    "vg": {"FST": (1.5584, 1.5816, 1.4131), "FDM": (1.5595, 1.5811, 1.4139)},
    "cgmy": {"FST": (1.8409, 1.8532, 1.6484), "FDM": (1.8411, 1.8535, 1.6490)},
}

REFERENCE_T5 = {
    "gbm": {"FSTA": (1.3732, 1.1368, 0.8429), "FSTG": (1.3733, 1.1369, 0.8428), "FDM": (1.3729, 1.1364, 0.8429)},
    "merton": {"FSTA": (1.4817, 1.2261, 0.9085), "FSTG": (1.4814, 1.2259, 0.9083), "FDM": (1.4800, 1.2260, 0.9082)},
    "kou": {"FSTA": (1.4565, 1.2054, 0.8934), "FSTG": (1.4562, 1.2052, 0.8933), "FDM": (1.4556, 1.2064, 0.8942)},
    "vg": {"FSTA": (1.5670, 1.3073, 0.9765), "FSTG": (1.5669, 1.3069, 0.9754), "FDM": (1.5680, 1.3068, 0.9758)},
    "cgmy": {"FSTA": (1.8402, 1.5249, 1.1299), "FSTG": (1.8398, 1.5247, 1.1297), "FDM": (1.8402, 1.5245, 1.1296)},
}

# (q, L0) -> barrier value; European and American values per q.
REFERENCE_T4 = {
    "barrier": {(0.0, 125.0): 22.7792, (0.0, 150.0): 26.8375, (0.0, 9999.0): 37.5450,
                (0.04, 125.0): 15.4209, (0.04, 150.0): 17.4808, (0.04, 9999.0): 16.5751},
    "european": {0.0: 37.5435, 0.04: 16.5753},
    "american": {0.0: 37.5435, 0.04: 18.2484},
}

# model -> multiple -> (closed form, FST, damped FFT)
REFERENCE_T6 = {
    "gbm": {1.1: (0.2534, 0.2532, 0.2535), 1.2: (0.0868, 0.0869, 0.0869)},
    "merton": {1.1: (0.2607, 0.2608, 0.2607), 1.2: (0.0943, 0.0942, 0.0943)},
    "kou": {1.1: (0.2431, 0.2430, 0.2431), 1.2: (0.0799, 0.0797, 0.0798)},
}

COLUMNS = ("table", "model", "case", "method", "value", "reference")


@dataclass(frozen=True)
class Setting:
    """Common inputs of a table or figure run."""

    models: tuple = ("gbm", "merton", "kou", "vg", "cgmy")
    t_v: tuple = TV
    grid: GridSpec = field(default_factory=GridSpec)
    fdm: FdmGrid = field(default_factory=FdmGrid)
    methods: tuple = ()
    mu: float = risk.DEFAULT_MU
    model_overrides: dict = field(default_factory=dict)

    def model(self, name: str) -> LevyModel:
        return self.model_overrides.get(name, TABLE3_MODELS[name])


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def fan_out(fn: Callable, jobs: Sequence, n_workers: Optional[int] = None) -> list:
    """``[fn(*job) for job in jobs]``, in order, optionally over worker processes."""
    n = workers() if n_workers is None else n_workers
    if n <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _row(table, model, case, method, value, reference=None) -> dict:
    return {"table": table, "model": model, "case": case, "method": method, "value": value,
            "reference": math.nan if reference is None else reference}


def write_rows(rows: Iterable[dict], path=None, columns=COLUMNS) -> None:
    if path not in (None, "-"):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    finally:
        if fh is not sys.stdout:
            fh.close()


# -- single solves (module level so worker processes can import them) -------------------

def table3_contract(t_v: float) -> ContractSpec:
    return ContractSpec(10.0, 10.0, 0.05, 0.04, 8.0, t_v, IntensitySpec.constant(0.2, 0.1))


def table5_contract(t_v: float) -> ContractSpec:
    return ContractSpec(10.0, 10.0, 0.05, 0.04, 8.0, t_v, IntensitySpec.affine(-0.02, 0.2, -0.02, 0.2))


def _solve(model: LevyModel, contract: ContractSpec, method: str, grid: GridSpec, fdm: FdmGrid) -> float:
    if method in ("FST", "FSTA"):
        return price_eso(model, contract, grid).value
    if method == "FSTG":
        return price_eso(model, contract, grid, scheme="general").value
    if method == "FDM":
        return price_fdm(model, contract, fdm)["value"]
    raise ValueError(f"unknown method {method!r}")


def table3(s: Setting) -> list:
    methods = s.methods or ("FST", "FDM")
    jobs = [(s.model(m), table3_contract(tv), meth, s.grid, s.fdm)
            for m in s.models for tv in s.t_v for meth in methods]
    vals = fan_out(_solve, jobs)
    rows, k = [], 0
    for m in s.models:
        for tv in s.t_v:
            for meth in methods:
                ref = _ref_tv(REFERENCE_T3, m, meth, tv)
                rows.append(_row(3, m, f"tv={fmt(tv)}", meth, vals[k], ref))
                k += 1
    return rows


def table5(s: Setting) -> list:
    methods = s.methods or ("FSTA", "FSTG", "FDM")
    jobs = [(s.model(m), table5_contract(tv), meth, s.grid, s.fdm)
            for m in s.models for tv in s.t_v for meth in methods]
    vals = fan_out(_solve, jobs)
    rows, k = [], 0
    for m in s.models:
        for tv in s.t_v:
            for meth in methods:
                rows.append(_row(5, m, f"tv={fmt(tv)}", meth, vals[k], _ref_tv(REFERENCE_T5, m, meth, tv)))
                k += 1
    return rows


def _ref_tv(table, model, method, tv):
    try:
        return table[model][method][TV.index(tv)]
    except (KeyError, ValueError):
        return None


def table4_contract(q: float) -> ContractSpec:
    return ContractSpec(100.0, 100.0, 0.05, q, 10.0, 3.0, IntensitySpec.constant(0.04, 0.04))


def _t4_solve(kind: str, q: float, L0: float, grid: GridSpec) -> float:
    m = LevyModel.gbm(0.2)
    c = table4_contract(q)
    if kind == "barrier":
        return price_barrier(m, c, grid, L0, -0.02).value
    return price_eso(m, c, grid, american=(kind == "american")).value


def table4(s: Setting) -> list:
    jobs = []
    for q in (0.0, 0.04):
        for L0 in (125.0, 150.0, 9999.0):
            jobs.append(("barrier", q, L0, s.grid))
        jobs.append(("european", q, 0.0, s.grid))
        jobs.append(("american", q, 0.0, s.grid))
    vals = fan_out(_t4_solve, jobs)
    rows = []
    for (kind, q, L0, _), v in zip(jobs, vals):
        if kind == "barrier":
            rows.append(_row(4, "gbm", f"q={fmt(q)};L={fmt(L0)}", "Barrier", v, REFERENCE_T4["barrier"][(q, L0)]))
        else:
            rows.append(_row(4, "gbm", f"q={fmt(q)}", kind.capitalize(), v, REFERENCE_T4[kind][q]))
    return rows


def table6_contract() -> ContractSpec:
    return ContractSpec(10.0, 10.0, 0.05, 0.04, 8.0, 2.0, IntensitySpec.constant(0.2, 0.1))


T6_HORIZON = 10.0 / 252.0


def _t6_model(model: LevyModel, grid: GridSpec, mu: float) -> list:
    c = table6_contract()
    cost = price_eso(model, c, grid, unvested_times=[0.0, T6_HORIZON]).unvested
    out = []
    for mult in (1.1, 1.2):
        q = risk.RiskQuery(0.0, T6_HORIZON, level_multiple=mult, mu=mu)
        ps = risk.exceed_case1(model, c, q, grid, cost=cost)
        xbar = ps.meta["xbar"]
        closed = oracles.closed_form_exceed(model.historical(mu), T6_HORIZON, 0.0, xbar,
                                            lam_pre=c.intensity.lam_pre)
        fst = ps.value(0.0, 0.0)
        damped = float(risk.exceed_case1_damped(model, c, q, grid, cost=cost))
        out.append((mult, closed, fst, damped, xbar))
    return out


def table6(s: Setting) -> list:
    models = [m for m in s.models if m in REFERENCE_T6]
    res = fan_out(_t6_model, [(s.model(m), s.grid, s.mu) for m in models])
    rows = []
    for m, per in zip(models, res):
        for mult, closed, fst, damped, _ in per:
            ref = REFERENCE_T6[m][mult]
            case = f"level={fmt(mult)}C0"
            rows.append(_row(6, m, case, "Closed", closed, ref[0]))
            rows.append(_row(6, m, case, "FST-FST", fst, ref[1]))
            rows.append(_row(6, m, case, "FFT-FST", damped, ref[2]))
    return rows


TABLES = {3: table3, 4: table4, 5: table5, 6: table6}


# -- figure data series --------------------------------------------------------------------

SERIES_COLUMNS = ("figure", "series", "x", "y")


def _srow(fig, series, x, y):
    return {"figure": fig, "series": series, "x": float(x), "y": float(y)}


def kou_contract(lam: float, t_v: float = 0.0, lam_pre: float = 0.1) -> ContractSpec:
    return ContractSpec(10.0, 10.0, 0.05, 0.04, 8.0, t_v, IntensitySpec.constant(lam, lam_pre))


def _boundary_series(model, contract, grid):
    b = price_eso(model, contract, grid).boundary
    return b.times, b.s_star


def figure3(s: Setting, lams=(0.1, 0.2, 0.3), alphas=(1.0, 3.0, 5.0)) -> list:
    """Kou exercise boundaries against the termination rate and the jump intensity."""
    base = s.model("kou")
    jobs = [(base, kou_contract(lam), s.grid) for lam in lams]
    jobs += [(LevyModel.kou(base.sigma, a, base.jump_params["p"], base.jump_params["eta_plus"],
                            base.jump_params["eta_minus"]), kou_contract(0.2), s.grid) for a in alphas]
    out = fan_out(_boundary_series, jobs)
    labels = [f"lambda={fmt(v)}" for v in lams] + [f"alpha={fmt(v)}" for v in alphas]
    rows = []
    for lab, (t, ss) in zip(labels, out):
        rows.extend(_srow(3, lab, ti, si) for ti, si in zip(t, ss))
    return rows


FIG4_TIMES = (4.25, 4.5, 4.75, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0)


def figure4_level(grid: GridSpec, model: LevyModel, multiple: float = 1.2) -> float:
    """Fixed cost level shared by all rates: ``multiple`` times the baseline value at ``(4, 0)``."""
    res = price_eso(model, kou_contract(0.2, t_v=2.0), grid, store=grid.M + 1)
    return multiple * res.vested.value(4.0, 0.0)


def _fig4_curve(model, lam, level, grid, mu, horizons):
    c = kou_contract(lam, t_v=2.0)
    res = price_eso(model, c, grid, store=grid.M + 1)
    out = []
    for Tt in horizons:
        q = risk.RiskQuery(4.0, Tt, level=level, mu=mu)
        out.append(risk.exceed_case2(model, c, q, grid, res.vested, res.boundary).value(4.0, 0.0))
    return out


def figure4(s: Setting, lams=(0.1, 0.2, 0.3), horizons=FIG4_TIMES) -> list:
    """Case-2 exceedance at ``t = 4`` against the horizon, Kou model."""
    model = s.model("kou")
    level = figure4_level(s.grid, model)
    curves = fan_out(_fig4_curve, [(model, lam, level, s.grid, s.mu, horizons) for lam in lams])
    rows = []
    for lam, ys in zip(lams, curves):
        rows.extend(_srow(4, f"lambda={fmt(lam)}", Tt, y) for Tt, y in zip(horizons, ys))
    return rows


def figure5(s: Setting, lams=(0.0, 0.2, 1.0), prices=None) -> list:
    """Perpetual vested cost and threshold for several termination rates."""
    prices = np.linspace(0.5, 30.0, 60) if prices is None else prices
    rows = []
    for lam in lams:
        sol = perpetual.solve_perpetual_vested(10.0, 0.05, 0.04, 0.2, lam)
        vals = perpetual.eval_perpetual_vested(sol, prices)
        rows.extend(_srow(5, f"lambda={fmt(lam)}", p, v) for p, v in zip(prices, vals))
        rows.append(_srow(5, f"s_star;lambda={fmt(lam)}", lam, sol.s_star))
    return rows


def figure6(s: Setting, lams=(0.0, 0.2, 1.0), vestings=tuple(np.linspace(0.0, 5.0, 11)), prices=None) -> list:
    """Perpetual unvested cost against the vesting length and the termination rate."""
    prices = np.linspace(1.0, 30.0, 30) if prices is None else prices
    rows = []
    for lam in lams:
        sol = perpetual.solve_perpetual_vested(10.0, 0.05, 0.04, 0.2, lam)
        for tv in vestings:
            rows.append(_srow(6, f"vesting;lambda={fmt(lam)}", tv, perpetual.eval_perpetual_unvested(sol, 0.0, tv, 10.0)))
        rows.extend(_srow(6, f"price;lambda={fmt(lam)}", p, perpetual.eval_perpetual_vested(sol, p)) for p in prices)
    return rows


FIG7_PRICES = (6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0)
FIG7_LAMS = tuple(round(0.05 * k, 2) for k in range(1, 11))


def fig7_contract(lam: float) -> ContractSpec:
    return ContractSpec(10.0, 9.0, 0.05, 0.04, 8.0, 2.0, IntensitySpec.constant(lam, 0.1))


def _fig7(model, lam, grid, mu, prices):
    c = fig7_contract(lam)
    res = price_eso(model, c, grid)
    hv = risk.voluntary_exercise_prob(model, c, grid, res.boundary, 6.0, 7.0, mu)
    h = risk.term_case2(model, c, grid, res.boundary, 6.0, 7.0, mu)
    xs = np.log(np.asarray(prices) / c.S0)
    return [hv.value(6.0, x) for x in xs], [h.value(6.0, x) for x in xs]


def figure7(s: Setting, lams=FIG7_LAMS, prices=FIG7_PRICES, lam_price: float = 0.2) -> list:
    """GBM termination ``h`` and voluntary exercise ``h^v`` at ``t = 6``, horizon 7.

    Left panel: against the termination rate at ``S = 10``. Right panel:
    against the stock price at ``lam_price``.
    """
    model = s.model("gbm")
    out = fan_out(_fig7, [(model, lam, s.grid, s.mu, (10.0,)) for lam in lams]
                  + [(model, lam_price, s.grid, s.mu, prices)])
    rows = []
    for lam, (hv, h) in zip(lams, out):
        rows.append(_srow(7, "voluntary;S=10", lam, hv[0]))
        rows.append(_srow(7, "termination;S=10", lam, h[0]))
    hv, h = out[-1]
    tag = f"lambda={fmt(lam_price)}"
    rows.extend(_srow(7, f"voluntary;{tag}", p, y) for p, y in zip(prices, hv))
    rows.extend(_srow(7, f"termination;{tag}", p, y) for p, y in zip(prices, h))
    return rows


def vesting_cost(s: Setting, lams=(0.1, 0.2, 0.3), vestings=(0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)) -> list:
    """Kou cost against the vesting length: ``lam_pre = lam`` per rate, plus ``lam=0.2, lam_pre=0.1``."""
    model = s.model("kou")
    jobs = [(model, kou_contract(lam, tv, lam), "FST", s.grid, s.fdm) for lam in lams for tv in vestings]
    jobs += [(model, kou_contract(0.2, tv, 0.1), "FST", s.grid, s.fdm) for tv in vestings]
    vals = fan_out(_solve, jobs)
    labels = [f"lambda={fmt(lam)}" for lam in lams] + ["lambda=0.2;lambda_pre=0.1"]
    rows, k = [], 0
    for lab in labels:
        for tv in vestings:
            rows.append(_srow("vesting", lab, tv, vals[k]))
            k += 1
    return rows


FIGURES = {3: figure3, 4: figure4, 5: figure5, 6: figure6, 7: figure7, "vesting": vesting_cost}
