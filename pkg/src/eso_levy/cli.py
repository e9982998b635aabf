"""Batch front end.

    eso-levy <command> [--config FILE] [--key value ...]

Exit status: 0 success, 2 configuration error, 3 numerical guard failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import config as cf
from . import oracles, perpetual, risk, tables
from .contract import ValueSurface, fmt
from .fdm import price_fdm
from .fst import BoundaryMonotonicityError, GridTooCoarseError, price_barrier, price_eso
from .levy import DomainError, ModelKind
from .spectral import SpectralResidueError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NUMERIC_ERRORS = (GridTooCoarseError, BoundaryMonotonicityError, SpectralResidueError,
                  risk.ProbabilityRangeError, FloatingPointError)


def _pairs(rest: Sequence[str]) -> list[tuple[str, str]]:
    out = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise cf.ConfigError(f"unexpected argument {tok!r}")
        name = tok[2:]
        if "=" in name:
            name, val = name.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise cf.ConfigError(f"--{name} needs a value")
            val = rest[i + 1]
            i += 2
        out.append((name, val))
    return out


def _aliases(command: str, pairs):
    out = []
    for name, val in pairs:
        if name == "model":
            name = "tables.models" if command == "tables" else "model.kind"
        out.append((name, val))
    return out


def load(argv: Sequence[str]) -> cf.RunConfig:
    ap = argparse.ArgumentParser(prog="eso-levy", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=cf.COMMANDS)
    ap.add_argument("--config", help="key=value file with [section] headers")
    ns, rest = ap.parse_known_args(argv)
    values = cf.parse_file(ns.config) if ns.config else {}
    values = cf.apply_overrides(values, _aliases(ns.command, _pairs(rest)))
    return cf.make_config(ns.command, values)


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = load(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    except cf.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[cfg.command](cfg)
    except cf.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as e:
        print(f"numerical guard: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError) as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot write output: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(run())


# -- helpers -----------------------------------------------------------------------

def _combined(unvested: ValueSurface, vested: Optional[ValueSurface]) -> ValueSurface:
    if vested is None:
        return unvested
    keep = unvested.times < vested.times[0] - 1e-12
    times = np.concatenate([unvested.times[keep], vested.times])
    vals = np.vstack([unvested.values[keep], vested.values])
    return ValueSurface(unvested.grid, times, vals, unvested.S0, boundary=vested.boundary, x=vested.x)


def _solve(cfg: cf.RunConfig):
    """(value, unvested, vested, boundary) for the configured pricer."""
    model, contract = cf.build_model(cfg), cf.build_contract(cfg)
    american = cfg.get("run", "american", True)
    store = cfg.get("run", "store", 65)
    if cfg.has("barrier"):
        b = cfg.section("barrier")
        if "L0" not in b:
            raise cf.ConfigError("[barrier] L0 is required")
        res = price_barrier(model, contract, cf.build_grid(cfg), b["L0"], b.get("a_bar", 0.0),
                            barrier_clock=b.get("clock", "vesting"), monitoring=b.get("monitoring", "continuous"),
                            store=store)
        return res.value, res.unvested, res.vested, None
    if cfg.get("run", "method", "fst") == "fdm":
        out = price_fdm(model, contract, cf.build_fdm_grid(cfg), american=american, store=store)
        return out["value"], out["unvested"], out["vested"], out["boundary"]
    res = price_eso(model, contract, cf.build_grid(cfg), scheme=cfg.get("run", "scheme", "auto"),
                    n_inner=cfg.get("run", "n_inner", 8), american=american, store=store)
    return res.value, res.unvested, res.vested, res.boundary


def _say(key: str, value) -> None:
    print(f"{key} = {fmt(value) if isinstance(value, float) else value}")


# -- commands ----------------------------------------------------------------------

def cmd_price(cfg: cf.RunConfig) -> None:
    value, unv, vested, boundary = _solve(cfg)
    _say("value", float(value))
    path = cf.output_path(cfg, "surface.csv")
    if path:
        surf = _combined(unv, vested)
        # periodic edges of the spectral grid carry wrap-around error; export the central half
        half = 0.5 * float(np.max(np.abs(surf.x)))
        surf.to_csv(path, x_lo=cfg.get("run", "x_lo", -half), x_hi=cfg.get("run", "x_hi", half))
    bpath = cfg.get("run", "boundary_output")
    if bpath and boundary is not None:
        boundary.to_csv(bpath)


def cmd_boundary(cfg: cf.RunConfig) -> None:
    value, _, vested, boundary = _solve(cfg)
    if boundary is None:
        raise cf.ConfigError("no exercise boundary for this configuration (barrier or European run)")
    _say("value", float(value))
    _say("s_star_first", float(boundary.s_star[0]))
    _say("s_star_last", float(boundary.s_star[-1]))
    boundary.to_csv(cf.output_path(cfg, "boundary.csv"))


def cmd_perpetual(cfg: cf.RunConfig) -> None:
    model = cf.build_model(cfg)
    if model.kind is not ModelKind.GBM:
        raise cf.ConfigError("perpetual solution is available for GBM only")
    c = cfg.section("contract")
    inten = cf.build_intensity(cfg)
    sol = perpetual.solve_perpetual_vested(c.get("K", 10.0), c.get("r", 0.05), c.get("q", 0.04), model.sigma,
                                           inten.lam)
    for k, v in sol.as_dict().items():
        _say(k, float(v))
    _say("never_exercise", str(sol.never_exercise).lower())
    path = cfg.get("run", "output")
    if path:
        p = cfg.section("perpetual")
        svals = p.get("s_values") or tuple(np.linspace(1.0, 30.0, 30))
        t, t_v = p.get("t", 0.0), c.get("t_v", 0.0)
        conv = p.get("drift_convention", "risk_neutral")
        rows = [{"s": float(s), "vested": float(perpetual.eval_perpetual_vested(sol, s)),
                 "unvested": perpetual.eval_perpetual_unvested(sol, t, t_v, s, drift=conv, lam_pre=inten.lam_pre)}
                for s in svals]
        tables.write_rows(rows, path, ("s", "vested", "unvested"))


def _write_prob(cfg, surf: risk.ProbSurface) -> None:
    path = cf.output_path(cfg, "probability.csv")
    if not path:
        return
    surf.to_csv(path, x_lo=cfg.get("risk", "x_lo", -1.0),
                x_hi=cfg.get("risk", "x_hi", 1.0))


def _post_vesting_solve(cfg):
    model, contract, grid = cf.build_model(cfg), cf.build_contract(cfg), cf.build_grid(cfg)
    if contract.intensity.variant != "constant":
        raise cf.ConfigError("probabilities need constant intensities")
    res = price_eso(model, contract, grid, store=grid.M + 1)
    if res.boundary is None:
        raise cf.ConfigError("probability after vesting needs T > t_v")
    return model, contract, grid, res


def cmd_prob_exceed(cfg: cf.RunConfig) -> None:
    model, contract = cf.build_model(cfg), cf.build_contract(cfg)
    grid = cf.build_grid(cfg)
    q = cf.build_query(cfg, contract)
    method = cfg.get("risk", "prob_method", "fst")
    if q.T_tilde <= contract.t_v + 1e-12:
        cost = price_eso(model, contract, grid, unvested_times=[0.0, q.t, q.T_tilde]).unvested
        surf = risk.exceed_case1(model, contract, q, grid, cost=cost)
        _say("case", 1)
        _say("xbar", float(surf.meta["xbar"]))
        if method == "damped":
            _say("probability", float(risk.exceed_case1_damped(model, contract, q, grid, cost=cost)))
        elif method == "closed_form":
            v = q.T_tilde - q.t
            _say("probability", float(oracles.closed_form_exceed(model.historical(q.mu), v, 0.0, surf.meta["xbar"],
                                                                 contract.intensity.lam_pre)))
        elif method == "fst":
            _say("probability", surf.value(q.t, 0.0))
        else:
            raise cf.ConfigError(f"unknown prob_method {method!r}")
        _write_prob(cfg, surf)
        return
    if method != "fst":
        raise cf.ConfigError("damped and closed-form methods apply to case 1 only")
    model, contract, grid, res = _post_vesting_solve(cfg)
    today = res.value
    if q.t >= contract.t_v - 1e-12:
        surf = risk.exceed_case2(model, contract, q, grid, res.vested, res.boundary, today=today)
        _say("case", 2)
        _say("probability", surf.value(q.t, 0.0))
    else:
        q2 = risk.RiskQuery(contract.t_v, q.T_tilde, level=q.level, level_multiple=q.level_multiple, mu=q.mu)
        p2 = risk.exceed_case2(model, contract, q2, grid, res.vested, res.boundary, today=today)
        surf = risk.exceed_case3(model, contract, q, grid, p2.slice_at(contract.t_v))
        _say("case", 3)
        _say("probability", surf.value(q.t, 0.0))
    _write_prob(cfg, surf)


def cmd_prob_term(cfg: cf.RunConfig) -> None:
    contract = cf.build_contract(cfg)
    q = cf.build_query(cfg, contract)
    event = cfg.get("risk", "event", "total")
    if event not in ("total", "voluntary"):
        raise cf.ConfigError(f"[risk] event must be total or voluntary, got {event!r}")
    grid = cf.build_grid(cfg)
    if q.T_tilde <= contract.t_v + 1e-12:
        if event == "voluntary":
            raise cf.ConfigError("no voluntary exercise inside the vesting period")
        p = risk.term_case1(contract.intensity.lam_pre, q.t, q.T_tilde)
        _say("case", 1)
        _say("probability", p)
        surf = risk.ProbSurface(grid, [q.t], np.full((1, grid.N), p), "Term1", contract.S0)
        _write_prob(cfg, surf)
        return
    model, contract, grid, res = _post_vesting_solve(cfg)
    if q.t >= contract.t_v - 1e-12:
        fn = risk.voluntary_exercise_prob if event == "voluntary" else risk.term_case2
        surf = fn(model, contract, grid, res.boundary, q.t, q.T_tilde, q.mu)
        _say("case", 2)
    else:
        if event == "voluntary":
            raise cf.ConfigError("voluntary exercise probability is defined after vesting only")
        h = risk.term_case2(model, contract, grid, res.boundary, contract.t_v, q.T_tilde, q.mu)
        surf = risk.term_case3(model, contract, grid, h.slice_at(contract.t_v), q.t, q.mu)
        _say("case", 3)
    _say("probability", surf.value(q.t, 0.0))
    _write_prob(cfg, surf)


def _european_gbm(contract, sigma) -> float:
    T = contract.T
    sd = sigma * math.sqrt(T)
    d1 = (math.log(contract.S0 / contract.K) + (contract.r - contract.q + 0.5 * sigma**2) * T) / sd
    bs = contract.S0 * math.exp(-contract.q * T) * ndtr(d1) - contract.K * math.exp(-contract.r * T) * ndtr(d1 - sd)
    return math.exp(-contract.intensity.lam_pre * T) * float(bs)


def cmd_compare(cfg: cf.RunConfig) -> None:
    model, contract = cf.build_model(cfg), cf.build_contract(cfg)
    american = cfg.get("run", "american", True)
    jobs = [("FST", model, contract, cf.build_grid(cfg), american), ("FDM", model, contract, cf.build_fdm_grid(cfg),
                                                                      american)]
    vals = tables.fan_out(_compare_one, jobs)
    rows = list(zip(("FST", "FDM"), vals))
    if model.kind is ModelKind.GBM and contract.t_v >= contract.T and contract.intensity.variant == "constant":
        rows.append(("closed_form", _european_gbm(contract, model.sigma)))
    ref = rows[0][1]
    print("method\tvalue\tdiff\trel_diff")
    for name, v in rows:
        print(f"{name}\t{fmt(v)}\t{fmt(v - ref)}\t{fmt((v - ref) / ref if ref else math.nan)}")


def _compare_one(kind, model, contract, grid, american):
    if kind == "FST":
        return price_eso(model, contract, grid, american=american).value
    return price_fdm(model, contract, grid, american=american)["value"]


def cmd_tables(cfg: cf.RunConfig) -> None:
    t = cfg.section("tables")
    setting = tables.Setting(
        models=t.get("models", tables.Setting.models),
        t_v=t.get("t_v_list", tables.TV),
        grid=cf.build_grid(cfg),
        fdm=cf.build_fdm_grid(cfg),
        methods=tuple(m.upper() for m in t.get("methods", ())),
        mu=cfg.get("risk", "mu", risk.DEFAULT_MU),
    )
    unknown = [m for m in setting.models if m not in tables.TABLE3_MODELS]
    if unknown:
        raise cf.ConfigError(f"unknown models {unknown}")
    path = cf.output_path(cfg, None)
    if "figure" in t:
        fn = tables.FIGURES.get(t["figure"])
        if fn is None:
            raise cf.ConfigError(f"no figure {t['figure']!r}; choose from {list(tables.FIGURES)}")
        tables.write_rows(fn(setting), path, tables.SERIES_COLUMNS)
        return
    fn = tables.TABLES.get(t.get("table"))
    if fn is None:
        raise cf.ConfigError(f"choose --table from {list(tables.TABLES)} or --figure")
    tables.write_rows(fn(setting), path)


COMMANDS = {
    "price": cmd_price,
    "boundary": cmd_boundary,
    "perpetual": cmd_perpetual,
    "prob-exceed": cmd_prob_exceed,
    "prob-term": cmd_prob_term,
    "compare": cmd_compare,
    "tables": cmd_tables,
}

if __name__ == "__main__":
    main()
