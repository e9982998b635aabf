"""Cost-exceedance and contract-termination probabilities under the historical measure.

Termination intensities are the same under both measures. Every iteration
reuses the spectral grid of the pricing solve; the probability PIDEs only
differ from the cost PIDE by the kill rate, the source term and the region
overwrites.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .contract import ContractSpec, ExerciseBoundary, ValueSurface, fmt
from .levy import DomainError, LevyModel
from .spectral import GridSpec, apply_multiplier, exp_filter, frequency_nodes, nyquist_symmetric, phi1

CLIP_TOL = 1e-6
DEFAULT_MU = 0.08


class ProbabilityRangeError(RuntimeError):
    """A probability left ``[0, 1]`` by more than the clipping tolerance."""


@dataclass(frozen=True)
class RiskQuery:
    """Evaluation time ``t``, horizon ``T_tilde`` and cost level.

    Give either ``level`` (currency) or ``level_multiple`` (of today's cost
    ``C(0, 0)``). ``mu`` is the historical log-price drift, ``damping`` the
    exponent ``a`` of the damped tail transform.
    """

    t: float
    T_tilde: float
    level: Optional[float] = None
    level_multiple: Optional[float] = None
    mu: float = DEFAULT_MU
    damping: float = 1.75

    def __post_init__(self):
        if (self.level is None) == (self.level_multiple is None):
            raise ValueError("give exactly one of level and level_multiple")
        if not self.T_tilde > self.t:
            raise ValueError("need t < T_tilde")
        lv = self.level if self.level is not None else self.level_multiple
        if not lv > 0:
            raise ValueError("cost level must be positive")
        if not self.damping > 0:
            raise ValueError("damping must be positive")

    def resolve_level(self, today: float) -> float:
        return self.level if self.level is not None else self.level_multiple * today


@dataclass
class ProbSurface:
    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    case: str
    S0: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    def slice_at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        return self.values[j]

    def value(self, t: Optional[float] = None, x: float = 0.0) -> float:
        sl = self.values[0] if t is None else self.slice_at(t)
        return float(np.interp(x, self.grid.x, sl))

    def to_csv(self, path, x_lo: float = -math.inf, x_hi: float = math.inf) -> None:
        x = self.grid.x
        keep = (x >= x_lo) & (x <= x_hi)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "probability"])
            for t, row in zip(self.times, self.values):
                ft = fmt(t)
                for xi, v in zip(x[keep], row[keep]):
                    w.writerow([ft, fmt(xi), fmt(v)])


def _clip(values: np.ndarray, label: str) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if lo < -CLIP_TOL or hi > 1.0 + CLIP_TOL:
        raise ProbabilityRangeError(f"{label}: probability range [{lo:.3e}, {hi:.3e}] exceeds clipping tolerance")
    return np.clip(values, 0.0, 1.0)


def hist_model(model: LevyModel, mu: float) -> LevyModel:
    return model.historical(mu)


# -- critical log-price -------------------------------------------------------------

def critical_log_price_slice(x: np.ndarray, values: np.ndarray, level: float, trust: float = 0.5) -> float:
    """Solve ``C(x) = level`` on a value slice by bisection on the nodes and linear interpolation.

    Only the central ``trust`` fraction of the grid is searched; the periodic
    edges of a Fourier solution are not meaningful.
    """
    x = np.asarray(x, float)
    half = trust * 0.5 * (x[-1] - x[0])
    mid = 0.5 * (x[-1] + x[0])
    inside = np.abs(x - mid) <= half
    xi = x[inside]
    v = np.maximum.accumulate(np.asarray(values, float)[inside])
    if level <= v[0]:
        return -math.inf
    if level > v[-1]:
        return math.inf
    j = int(np.searchsorted(v, level, side="left"))
    if v[j] == level:
        return float(xi[j])
    v0, v1 = v[j - 1], v[j]
    return float(xi[j - 1] + (level - v0) / (v1 - v0) * (xi[j] - xi[j - 1]))


def critical_log_price(surface: ValueSurface, level: float, t: float) -> float:
    return critical_log_price_slice(surface.x, surface.slice_at(t), level)


def smooth_indicator(x: np.ndarray, xbar: float) -> np.ndarray:
    """Cell average of ``1{x > xbar}`` over ``[x - dx/2, x + dx/2]``."""
    if math.isinf(xbar):
        return np.full(x.shape, 1.0 if xbar < 0 else 0.0)
    dx = x[1] - x[0]
    return np.clip((x + 0.5 * dx - xbar) / dx, 0.0, 1.0)


# -- case 1: inside the vesting period ----------------------------------------------------

def _symbol(model, grid, kill, h):
    z = model.psi(frequency_nodes(grid)) - kill
    return nyquist_symmetric(np.exp(z * h))


def _cost_today_and_surface(model, contract, grid, times):
    from .fst import price_eso

    res = price_eso(model, contract, grid, unvested_times=times)
    return res


def exceed_case1(model: LevyModel, contract: ContractSpec, query: RiskQuery, grid: GridSpec,
                 cost: Optional[ValueSurface] = None) -> ProbSurface:
    """``exp(-lam_pre (T~ - t)) P(X_T~ > xbar | X_t = x)`` for ``t < T~ <= t_v``."""
    t, Tt = query.t, query.T_tilde
    if not (Tt <= contract.t_v + 1e-12):
        raise ValueError("case 1 needs t < T_tilde <= t_v")
    if cost is None:
        cost = _cost_today_and_surface(model, contract, grid, [0.0, t, Tt, contract.t_v]).unvested
    level = query.resolve_level(cost.value(0.0, 0.0))
    xbar = critical_log_price(cost, level, Tt)
    pm = hist_model(model, query.mu)
    cond = apply_multiplier(smooth_indicator(grid.x, xbar), _symbol(pm, grid, 0.0, Tt - t))
    surv = math.exp(-_lam_pre(contract) * (Tt - t))
    vals = _clip(surv * cond, "case-1 exceedance")
    return ProbSurface(grid, [t], vals[None, :], "Exceed1", contract.S0,
                       meta={"xbar": xbar, "level": level, "survival": surv, "mu": query.mu})


def exceed_case1_convolution(model: LevyModel, grid: GridSpec, v: float, xbar: float, x) -> np.ndarray:
    """Same conditional probability by direct summation against the transition density.

    The density of ``X_v`` is recovered on the grid by inverting ``exp(v Psi)``
    and integrated over ``{y > xbar - x}`` with the trapezoid rule.
    """
    N, dx = grid.N, grid.dx
    k = np.fft.fftfreq(N, d=1.0 / N)
    w = k * grid.d_omega
    phi = np.exp(v * model.psi(w))
    phi[N // 2] = phi[N // 2].real
    # the inverse DFT returns the density reflected: entry j sits at y = -j dx
    dens = np.real(np.fft.ifft(phi)) / dx
    y = -np.fft.fftfreq(N, d=1.0 / N) * dx
    order = np.argsort(y)
    y, dens = y[order], dens[order]
    out = []
    for xi in np.atleast_1d(x):
        g = np.clip((y + xi + 0.5 * dx - xbar) / dx, 0.0, 1.0)
        out.append(float(np.sum(dens * g) * dx))
    return np.array(out)


def tail_prob_damped(model: LevyModel, v: float, z, a: float = 1.75, N: int = 2**15,
                     d_omega: Optional[float] = None) -> np.ndarray:
    """``P(X_v > z)`` from the damped transform of the tail function, by FFT quadrature.

    ``p(z) = exp(-a z)/pi int_0^inf Re[exp(i w z) phi_v(-w - i a) / (a - i w)] dw``
    with Simpson weights on ``N`` frequency nodes. The output grid is shifted
    so that each requested ``z`` is a node.
    """
    lo, hi = model.strip()
    if not (lo < -a < hi):
        raise DomainError(f"damping {a} outside the strip of analyticity")
    zs = np.atleast_1d(np.asarray(z, dtype=float))

    def g(w):
        return np.exp(v * model.psi(-w - 1j * a)) / (a - 1j * w)

    if d_omega is None:
        w_cut = 16.0
        while abs(g(np.array([w_cut]))[0]) > 1e-14 and w_cut < 1e6:
            w_cut *= 1.5
        d_omega = w_cut / N
    w = d_omega * np.arange(N)
    simpson = np.where(np.arange(N) % 2 == 1, 4.0, 2.0)
    simpson[0] = 1.0
    gw = g(w) * simpson * d_omega / 3.0
    dz = 2.0 * np.pi / (N * d_omega)
    half = N // 2
    out = np.empty(zs.shape)
    for i, zi in enumerate(zs):
        z0 = zi - half * dz
        spec = np.fft.ifft(gw * np.exp(1j * w * z0)) * N
        out[i] = np.exp(-a * zi) / np.pi * spec[half].real
    res = _clip(out, "damped tail")
    return res if np.ndim(z) else float(res[0])


def exceed_case1_damped(model: LevyModel, contract: ContractSpec, query: RiskQuery, grid: GridSpec,
                        cost: Optional[ValueSurface] = None, x=0.0) -> float:
    """Case-1 exceedance with the second step done by the damped-transform integral."""
    t, Tt = query.t, query.T_tilde
    if cost is None:
        cost = _cost_today_and_surface(model, contract, grid, [0.0, t, Tt, contract.t_v]).unvested
    level = query.resolve_level(cost.value(0.0, 0.0))
    xbar = critical_log_price(cost, level, Tt)
    pm = hist_model(model, query.mu)
    p = tail_prob_damped(pm, Tt - t, xbar - np.asarray(x, float), a=query.damping)
    return math.exp(-_lam_pre(contract) * (Tt - t)) * p


def _lam_pre(contract: ContractSpec) -> float:
    inten = contract.intensity
    if inten.variant != "constant":
        raise ValueError("probability calculators need constant intensities")
    return inten.lam_pre


def _lam_post(contract: ContractSpec) -> float:
    inten = contract.intensity
    if inten.variant != "constant":
        raise ValueError("probability calculators need constant intensities")
    return inten.lam


# -- backward iterations after vesting ----------------------------------------------------

def _steps(t: float, Tt: float, grid: GridSpec, contract: ContractSpec) -> int:
    span = contract.T - contract.t_v
    dt_ref = span / grid.M if span > 0 else contract.T / grid.M
    return max(1, int(math.ceil((Tt - t) / dt_ref - 1e-9)))


def _iterate(pm: LevyModel, grid: GridSpec, t: float, Tt: float, n: int, kill: float, terminal: np.ndarray,
             source=None, overwrite=None):
    """Backward IMEX iteration of ``(d_t + L) u - kill u + kill*source(t) = 0`` with region overwrite."""
    dt = (Tt - t) / n
    z = pm.psi(frequency_nodes(grid)) - kill
    E = nyquist_symmetric(np.exp(z * dt)) * exp_filter(grid)
    G = nyquist_symmetric(phi1(z, dt))
    u = terminal.copy()
    if overwrite is not None:
        overwrite(Tt, u)
    times = [Tt]
    rows = [u.copy()]
    keep = set(np.unique(np.round(np.linspace(0, n, min(n + 1, 33))).astype(int)).tolist())
    for m in range(n, 0, -1):
        t1 = t + (m - 1) * dt
        V = np.fft.fft(u) * E
        if source is not None and kill > 0:
            V += kill * np.fft.fft(source(t1)) * G
        u = np.real(np.fft.ifft(V))
        if overwrite is not None:
            overwrite(t1, u)
        if (m - 1) in keep:
            times.append(t1)
            rows.append(u.copy())
    return np.array(times[::-1]), np.array(rows[::-1])


def _xbar_curve(vested: ValueSurface, level: float):
    ts = vested.times
    xb = np.array([critical_log_price_slice(vested.x, row, level) for row in vested.values])

    def fn(t):
        if t <= ts[0]:
            return xb[0]
        if t >= ts[-1]:
            return xb[-1]
        j = int(np.searchsorted(ts, t))
        a, b = xb[j - 1], xb[j]
        if math.isinf(a) or math.isinf(b):
            return b if (t - ts[j - 1]) > 0.5 * (ts[j] - ts[j - 1]) else a
        w = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return (1 - w) * a + w * b

    return fn, xb


def exceed_case2(model: LevyModel, contract: ContractSpec, query: RiskQuery, grid: GridSpec,
                 vested: ValueSurface, boundary: ExerciseBoundary, today: Optional[float] = None) -> ProbSurface:
    """``P(C(stop, X_stop) >= level)`` with stop = exercise, forced exercise or ``T~``; ``t_v <= t``."""
    t, Tt = query.t, query.T_tilde
    if not (contract.t_v - 1e-12 <= t < Tt <= contract.T + 1e-12):
        raise ValueError("case 2 needs t_v <= t < T_tilde <= T")
    if query.level is None and today is None:
        raise ValueError("level_multiple needs today's cost")
    level = query.resolve_level(today if today is not None else 1.0)
    x = grid.x
    xbar, _ = _xbar_curve(vested, level)
    lam = _lam_post(contract)
    pm = hist_model(model, query.mu)

    def ind(tt):
        return smooth_indicator(x, xbar(tt))

    def overwrite(tt, u):
        # cell averages: exercised part of each cell pays 1{x >= xbar}, the rest keeps u
        xs = float(boundary.x_star_at(tt))
        if math.isinf(xs):
            return
        w = smooth_indicator(x, xs)
        u[:] = smooth_indicator(x, max(xs, xbar(tt))) + (1.0 - w) * u

    n = _steps(t, Tt, grid, contract)
    terminal = smooth_indicator(x, xbar(Tt))
    times, rows = _iterate(pm, grid, t, Tt, n, lam, terminal, source=ind, overwrite=overwrite)
    return ProbSurface(grid, times, _clip(rows, "case-2 exceedance"), "Exceed2", contract.S0,
                       meta={"level": level, "mu": query.mu, "n_steps": n})


def exceed_case3(model: LevyModel, contract: ContractSpec, query: RiskQuery, grid: GridSpec,
                 p_hat_tv: np.ndarray) -> ProbSurface:
    """Propagate the case-2 slice at ``t_v`` back to ``t <= t_v`` with pre-vesting kill."""
    t = query.t
    if t > contract.t_v + 1e-12:
        raise ValueError("case 3 needs t <= t_v")
    pm = hist_model(model, query.mu)
    h = contract.t_v - t
    vals = p_hat_tv.copy() if h <= 0 else apply_multiplier(p_hat_tv, _symbol(pm, grid, _lam_pre(contract), h))
    return ProbSurface(grid, [t], _clip(vals, "case-3 exceedance")[None, :], "Exceed3", contract.S0,
                       meta={"mu": query.mu})


# -- contract termination ----------------------------------------------------------------

def term_case1(lam_pre: float, t: float, T_tilde: float) -> float:
    if T_tilde < t:
        raise ValueError("need t <= T_tilde")
    return -math.expm1(-lam_pre * (T_tilde - t))


def _boundary_overwrite(boundary, x):
    def overwrite(tt, u):
        xs = float(boundary.x_star_at(tt))
        if not math.isinf(xs):
            w = smooth_indicator(x, xs)
            u[:] = w + (1.0 - w) * u
    return overwrite


def _terminal_exercise(boundary, x, Tt):
    return smooth_indicator(x, float(boundary.x_star_at(Tt)))


def voluntary_exercise_prob(model: LevyModel, contract: ContractSpec, grid: GridSpec, boundary: ExerciseBoundary,
                            t: float, T_tilde: float, mu: float = DEFAULT_MU) -> ProbSurface:
    """``h^v = P(tau* < tau_lam ^ T~)`` after vesting."""
    _post_window(contract, t, T_tilde)
    x = grid.x
    pm = hist_model(model, mu)
    n = _steps(t, T_tilde, grid, contract)
    times, rows = _iterate(pm, grid, t, T_tilde, n, _lam_post(contract), _terminal_exercise(boundary, x, T_tilde),
                           overwrite=_boundary_overwrite(boundary, x))
    return ProbSurface(grid, times, _clip(rows, "voluntary exercise"), "Voluntary", contract.S0, meta={"mu": mu})


def exercise_prob_no_kill(model: LevyModel, contract: ContractSpec, grid: GridSpec, boundary: ExerciseBoundary,
                          t: float, T_tilde: float, mu: float = DEFAULT_MU) -> ProbSurface:
    """``h_hat = P(tau* <= T~)`` ignoring job termination."""
    _post_window(contract, t, T_tilde)
    x = grid.x
    pm = hist_model(model, mu)
    n = _steps(t, T_tilde, grid, contract)
    times, rows = _iterate(pm, grid, t, T_tilde, n, 0.0, _terminal_exercise(boundary, x, T_tilde),
                           overwrite=_boundary_overwrite(boundary, x))
    return ProbSurface(grid, times, _clip(rows, "exercise probability"), "HHat", contract.S0, meta={"mu": mu})


def term_case2(model: LevyModel, contract: ContractSpec, grid: GridSpec, boundary: ExerciseBoundary,
               t: float, T_tilde: float, mu: float = DEFAULT_MU) -> ProbSurface:
    """``h = exp(-lam (T~-t)) h_hat + 1 - exp(-lam (T~-t))``."""
    hh = exercise_prob_no_kill(model, contract, grid, boundary, t, T_tilde, mu)
    lam = _lam_post(contract)
    surv = np.exp(-lam * (T_tilde - hh.times))[:, None]
    vals = surv * hh.values + 1.0 - surv
    return ProbSurface(grid, hh.times, _clip(vals, "termination"), "Term2", contract.S0, meta={"mu": mu})


def term_case3(model: LevyModel, contract: ContractSpec, grid: GridSpec, h_tv: np.ndarray, t: float,
               mu: float = DEFAULT_MU) -> ProbSurface:
    """``1 - exp(-lam_pre (t_v - t)) + h~`` with ``h~`` the killed propagation of ``h(t_v, .)``."""
    if t > contract.t_v + 1e-12:
        raise ValueError("case 3 needs t <= t_v")
    lp = _lam_pre(contract)
    h = contract.t_v - t
    pm = hist_model(model, mu)
    ht = h_tv.copy() if h <= 0 else apply_multiplier(h_tv, _symbol(pm, grid, lp, h))
    vals = -math.expm1(-lp * h) + ht
    return ProbSurface(grid, [t], _clip(vals, "termination case 3")[None, :], "Term3", contract.S0, meta={"mu": mu})


def _post_window(contract, t, Tt):
    if not (contract.t_v - 1e-12 <= t < Tt <= contract.T + 1e-12):
        raise ValueError("needs t_v <= t < T_tilde <= T")
