"""Independent reference values: closed-form exceedance probabilities and Monte Carlo.

The closed forms give ``P(X_{t+v} > xbar | X_t = x)`` times the pre-vesting
survival factor for GBM, Merton and Kou. The Monte Carlo simulator handles
the full ESO life cycle for the same three models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.special import ndtr

from .contract import ContractSpec, ExerciseBoundary
from .levy import LevyModel, ModelKind, variance_rate

BGK_BETA = 0.5826

# -- Hh functions -----------------------------------------------------------------


def hh(n: int, x) -> np.ndarray:
    """``Hh_n(x) = (1/n!) int_x^inf (t-x)^n exp(-t^2/2) dt`` for ``n >= -1``.

    Upward recurrence ``n Hh_n = Hh_{n-2} - x Hh_{n-1}`` where it is stable
    (``x <= 2``); parabolic-cylinder form ``exp(-x^2/4) D_{-n-1}(x)`` beyond.
    """
    x = np.asarray(x, dtype=float)
    if n < -1:
        raise ValueError("Hh_n is defined for n >= -1")
    out = np.empty_like(x)
    low = x <= 2.0
    if np.any(low):
        out[low] = hh_recurrence(n, x[low])[-1]
    if np.any(~low):
        xh = x[~low]
        d, _ = special.pbdv(-n - 1.0, xh)
        out[~low] = np.exp(-0.25 * xh * xh) * d
    return out[()] if out.ndim == 0 else out


def hh_recurrence(n: int, x) -> list:
    """``[Hh_{-1}, Hh_0, ..., Hh_n]`` by the upward three-term recurrence."""
    x = np.asarray(x, dtype=float)
    seq = [np.exp(-0.5 * x * x), math.sqrt(2 * math.pi) * ndtr(-x)]
    for k in range(1, n + 1):
        seq.append((seq[-2] - x * seq[-1]) / k)
    return seq[: n + 2]


def kou_I(n: int, c: float, d: float, b: float, delta: float) -> float:
    """``I_n(c; d, b, delta) = int_c^inf exp(d y) Hh_n(b y - delta) dy``."""
    s = sum((b / d) ** (n - i) * float(hh(i, b * c - delta)) for i in range(n + 1))
    head = -math.exp(d * c) / d * s
    expo = d * delta / b + d * d / (2 * b * b)
    if b > 0 and d != 0:
        tail = (b / d) ** (n + 1) * math.sqrt(2 * math.pi) / b * math.exp(expo) * float(ndtr(-b * c + delta + d / b))
    elif b < 0 and d < 0:
        tail = -(b / d) ** (n + 1) * math.sqrt(2 * math.pi) / b * math.exp(expo) * float(ndtr(b * c - delta - d / b))
    else:
        raise ValueError("I_n needs b > 0, d != 0 or b < 0, d < 0")
    return head + tail


@dataclass(frozen=True)
class KouSeriesSpec:
    n_max: Optional[int] = None
    tail: float = 1e-10


def _kou_pq(n: int, p: float, ep: float, em: float):
    a, b = ep / (ep + em), em / (ep + em)
    q = 1.0 - p
    P = np.zeros(n + 1)
    Q = np.zeros(n + 1)
    for k in range(1, n):
        for i in range(k, n):
            c = special.comb(n - k - 1, i - k) * special.comb(n, i)
            P[k] += c * a ** (i - k) * b ** (n - i) * p**i * q ** (n - i)
            Q[k] += c * a ** (n - i) * b ** (i - k) * p ** (n - i) * q**i
    P[n] = p**n
    Q[n] = q**n
    return P, Q


def kou_tail(model: LevyModel, v: float, a: float, spec: KouSeriesSpec = KouSeriesSpec()) -> float:
    """``P(X_v >= a)`` for Kou with ``X_0 = 0`` (series in the number of jumps)."""
    jp = model.jump_params
    sig, mu = model.sigma, model.drift
    lam, p, ep, em = jp["alpha"], jp["p"], jp["eta_plus"], jp["eta_minus"]
    sv = sig * math.sqrt(v)
    n_max = spec.n_max
    if n_max is None:
        n_max = 0
        while special.pdtrc(n_max, lam * v) > spec.tail:
            n_max += 1
        n_max = max(n_max, 2)
    c = a - mu * v
    pi = [math.exp(-lam * v) * (lam * v) ** n / math.factorial(n) for n in range(n_max + 1)]
    up = down = 0.0
    for n in range(1, n_max + 1):
        P, Q = _kou_pq(n, p, ep, em)
        for k in range(1, n + 1):
            up += pi[n] * P[k] * (sv * ep) ** k * kou_I(k - 1, c, -ep, -1.0 / sv, -sig * ep * math.sqrt(v))
            down += pi[n] * Q[k] * (sv * em) ** k * kou_I(k - 1, c, em, 1.0 / sv, -sig * em * math.sqrt(v))
    pre_up = math.exp((sig * ep) ** 2 * v / 2) / (sv * math.sqrt(2 * math.pi))
    pre_dn = math.exp((sig * em) ** 2 * v / 2) / (sv * math.sqrt(2 * math.pi))
    return pre_up * up + pre_dn * down + pi[0] * float(ndtr(-c / sv))


def merton_tail(model: LevyModel, v: float, a: float, tail: float = 1e-12) -> float:
    jp = model.jump_params
    lam = jp["alpha"] * v
    total, n = 0.0, 0
    while True:
        w = math.exp(-lam) * lam**n / math.factorial(n)
        sd = math.sqrt(model.sigma**2 * v + n * jp["sigma_tilde"] ** 2)
        total += w * float(ndtr((model.drift * v + n * jp["mu_tilde"] - a) / sd))
        if special.pdtrc(n, lam) < tail:
            return total
        n += 1
        if n > 10_000:
            raise RuntimeError("Merton series did not converge")


def closed_form_exceed(model: LevyModel, v: float, x, xbar: float, lam_pre: float = 0.0,
                       kou_spec: KouSeriesSpec = KouSeriesSpec()):
    """``exp(-lam_pre v) P(X_v > xbar - x)`` under the (historical) ``model``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if math.isinf(xbar):
        base = np.full(xs.shape, 1.0 if xbar < 0 else 0.0)
    elif model.kind is ModelKind.GBM:
        base = ndtr((xs - xbar + model.drift * v) / (model.sigma * math.sqrt(v)))
    elif model.kind is ModelKind.MERTON:
        base = np.array([merton_tail(model, v, xbar - xi) for xi in xs])
    elif model.kind is ModelKind.KOU:
        base = np.array([kou_tail(model, v, xbar - xi, kou_spec) for xi in xs])
    else:
        raise ValueError(f"no closed form for {model.kind.value}")
    out = math.exp(-lam_pre * v) * base
    return float(out[0]) if np.ndim(x) == 0 else out


# -- Monte Carlo ---------------------------------------------------------------------


@dataclass(frozen=True)
class McSpec:
    n_paths: int = 1_000_000
    n_steps: int = 252
    seed: int = 20240601
    antithetic: bool = False
    batch: int = 200_000
    continuity_correction: bool = False


@dataclass(frozen=True)
class McEstimate:
    mean: float
    se: float
    n: int

    def within(self, ref: float, k: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.mean - ref) <= max(k * self.se, floor)


def _check_simulable(model: LevyModel):
    if model.kind not in (ModelKind.GBM, ModelKind.MERTON, ModelKind.KOU):
        raise ValueError("Monte Carlo supports GBM, Merton and Kou")


def levy_increments(model: LevyModel, h, rng: np.random.Generator, z: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact increments of ``X`` over horizons ``h`` (array, one per path)."""
    h = np.asarray(h, dtype=float)
    if z is None:
        z = rng.standard_normal(h.shape)
    out = model.drift * h + model.sigma * np.sqrt(h) * z
    jp = model.jump_params
    if model.kind is ModelKind.MERTON:
        N = rng.poisson(jp["alpha"] * h)
        out += N * jp["mu_tilde"] + jp["sigma_tilde"] * np.sqrt(N) * rng.standard_normal(h.shape)
    elif model.kind is ModelKind.KOU:
        N = rng.poisson(jp["alpha"] * h)
        n_up = rng.binomial(N, jp["p"])
        n_dn = N - n_up
        out += rng.gamma(n_up, 1.0 / jp["eta_plus"]) - rng.gamma(n_dn, 1.0 / jp["eta_minus"])
    return out


def _substreams(seed: int, n_paths: int, batch: int):
    n_batches = max(1, math.ceil(n_paths / batch))
    seqs = np.random.SeedSequence(seed).spawn(n_batches)
    for i, ss in enumerate(seqs):
        yield np.random.default_rng(ss), min(batch, n_paths - i * batch)


def _normals(rng: np.random.Generator, n: int, antithetic: bool) -> np.ndarray:
    """Standard normals; with ``antithetic`` path ``i + n/2`` mirrors path ``i``."""
    if not antithetic:
        return rng.standard_normal(n)
    half = rng.standard_normal(n - n // 2)
    return np.concatenate([half, -half[: n // 2]])


def _pair_stats(vals: np.ndarray, antithetic: bool) -> tuple[float, float, int]:
    """Sum, sum of squares and count of the i.i.d. units (pair means if antithetic)."""
    if antithetic:
        h = vals.size // 2
        units = np.concatenate([0.5 * (vals[:h] + vals[h:2 * h]), vals[2 * h:]])
    else:
        units = vals
    return float(units.sum()), float((units * units).sum()), units.size


def _finish(tot, tot2, units, n_all) -> McEstimate:
    mean = tot / units
    var = max(tot2 / units - mean * mean, 0.0)
    return McEstimate(mean, math.sqrt(var / units), n_all)


def _walk_post_vesting(model, contract, rng, x, t_start, T_end, n_steps, lam, x_star_fn, shift_coef=0.0,
                       antithetic=False):
    """Advance paths from ``t_start`` to ``T_end``; returns per-path stop time, state and reason.

    Reasons: 0 reached ``T_end``, 1 forced (termination clock), 2 voluntary exercise.
    ``x_star_fn(t)`` is the log exercise boundary (``inf`` = never). The boundary
    is lowered by ``shift_coef * sqrt(dt)`` to mimic continuous monitoring. At
    the contract maturity exercise and expiry coincide, so the last check is
    skipped there.
    """
    n = x.size
    t_start, T_end = float(t_start), float(T_end)
    span = T_end - t_start
    k_steps = max(1, int(round(span * n_steps)))
    dt = span / k_steps
    shift = shift_coef * math.sqrt(dt)
    check_last = T_end < float(contract.T) - 1e-12
    tau = t_start + rng.exponential(1.0 / lam, n) if lam > 0 else np.full(n, np.inf)
    alive = np.ones(n, bool)
    t_stop = np.full(n, T_end)
    reason = np.zeros(n, np.int8)
    x = x.copy()
    for k in range(k_steps):
        t0 = t_start + k * dt
        t1 = t0 + dt
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        hit = tau[idx] < t1
        if np.any(hit):
            j = idx[hit]
            x[j] += levy_increments(model, tau[j] - t0, rng, _normals(rng, n, antithetic)[j])
            t_stop[j] = tau[j]
            reason[j] = 1
            alive[j] = False
            idx = idx[~hit]
        z = _normals(rng, n, antithetic)[idx]
        x[idx] += levy_increments(model, np.full(idx.size, dt), rng, z)
        xs = x_star_fn(t1) - shift if (k < k_steps - 1 or check_last) else np.inf
        if np.isfinite(xs):
            ex = idx[x[idx] >= xs]
            t_stop[ex] = t1
            reason[ex] = 2
            alive[ex] = False
    return t_stop, x, reason


def mc_price(model: LevyModel, contract: ContractSpec, boundary: Optional[ExerciseBoundary], mc: McSpec = McSpec()
             ) -> McEstimate:
    """Risk-neutral ESO value at ``(0, x=0)`` exercising at the supplied boundary.

    Pre-vesting termination forfeits the option; after vesting the holder
    exercises when ``S >= s*(t)`` at the monitoring dates, or is forced to
    exercise at the termination time, or exercises at ``T``.
    """
    _check_simulable(model)
    if contract.intensity.variant != "constant":
        raise ValueError("Monte Carlo oracle supports constant intensities")
    rn = model.risk_neutral(contract.r, contract.q)
    c = contract
    tot = tot2 = 0.0
    units = n_all = 0
    anti = mc.antithetic
    xfn = (lambda t: float(boundary.x_star_at(t))) if boundary is not None else (lambda t: math.inf)
    for rng, n in _substreams(mc.seed, mc.n_paths, mc.batch):
        x = np.zeros(n)
        survive = np.ones(n, bool)
        if c.t_v > 0:
            if c.intensity.lam_pre > 0:
                survive = rng.exponential(1.0 / c.intensity.lam_pre, n) >= c.t_v
            x = levy_increments(rn, np.full(n, c.t_v), rng, _normals(rng, n, anti))
        if c.T > c.t_v:
            t_stop, xT, _ = _walk_post_vesting(rn, c, rng, x, c.t_v, c.T, mc.n_steps, c.intensity.lam, xfn,
                                               _shift_coef(rn, mc), anti)
        else:
            t_stop, xT = np.full(n, c.T), x
        pay = np.maximum(c.S0 * np.exp(xT) - c.K, 0.0) * np.exp(-c.r * t_stop) * survive
        s1, s2, u = _pair_stats(pay, anti)
        tot, tot2, units, n_all = tot + s1, tot2 + s2, units + u, n_all + n
    return _finish(tot, tot2, units, n_all)


EVENTS = ("exceed1", "exceed2", "exceed3", "term1", "term2", "term3", "voluntary")


def mc_probability(model: LevyModel, contract: ContractSpec, boundary: Optional[ExerciseBoundary], event: str,
                   t: float, T_tilde: float, x0: float = 0.0, xbar: Optional[Callable] = None,
                   mc: McSpec = McSpec()) -> McEstimate:
    """Frequency of ``event`` for paths started at ``(t, x0)`` under the historical ``model``.

    ``xbar(t)`` is the critical log-price curve for the exceedance events.
    """
    _check_simulable(model)
    if event not in EVENTS:
        raise ValueError(f"unknown event {event!r}")
    if model.measure.value != "historical":
        raise ValueError("probabilities are simulated under the historical measure")
    c = contract
    lam, lam_pre = c.intensity.lam, c.intensity.lam_pre
    xfn = (lambda s: float(boundary.x_star_at(s))) if boundary is not None else (lambda s: math.inf)
    tot = tot2 = 0.0
    units = n_all = 0
    anti = mc.antithetic
    for rng, n in _substreams(mc.seed, mc.n_paths, mc.batch):
        x = np.full(n, float(x0))
        if event in ("exceed1", "term1"):
            tau = rng.exponential(1.0 / lam_pre, n) if lam_pre > 0 else np.full(n, np.inf)
            if event == "term1":
                ok = tau < (T_tilde - t)
            else:
                xe = x + levy_increments(model, np.full(n, T_tilde - t), rng, _normals(rng, n, anti))
                ok = (tau >= (T_tilde - t)) & (xe > xbar(T_tilde))
        else:
            start = t
            survive = np.ones(n, bool)
            if event in ("exceed3", "term3"):
                tau = rng.exponential(1.0 / lam_pre, n) if lam_pre > 0 else np.full(n, np.inf)
                survive = tau >= (c.t_v - t)
                x = x + levy_increments(model, np.full(n, c.t_v - t), rng, _normals(rng, n, anti))
                start = c.t_v
            t_stop, xs, reason = _walk_post_vesting(model, c, rng, x, start, T_tilde, _steps_per_year(mcs=mc),
                                                    lam, xfn, _shift_coef(model, mc), anti)
            if event in ("exceed2", "exceed3"):
                # voluntary exercise at the boundary or a stop at the horizon both compare C with the level
                ok = survive & (xs >= np.array([xbar(s) for s in t_stop]))
            elif event in ("term2", "term3"):
                ok = survive & (reason > 0)
                if event == "term3":
                    ok = ok | ~survive
            else:
                ok = reason == 2
        s1, s2, u = _pair_stats(ok.astype(float), anti)
        tot, tot2, units, n_all = tot + s1, tot2 + s2, units + u, n_all + n
    return _finish(tot, tot2, units, n_all)


def _steps_per_year(mcs: McSpec) -> int:
    return mcs.n_steps


def _shift_coef(model: LevyModel, mc: McSpec) -> float:
    return BGK_BETA * math.sqrt(variance_rate(model)) if mc.continuity_correction else 0.0
