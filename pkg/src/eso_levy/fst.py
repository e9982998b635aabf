"""Fourier space time-stepping (FST) pricers for vested and unvested ESOs.

Every solver works on the periodic grid of ``GridSpec``: a step multiplies the
spectrum of the current slice by the exact propagator of the generator and
adds the spectral image of the job-termination cash flow, then imposes the
early-exercise floor (vested phase only).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import spectral
from .contract import ContractSpec, ExerciseBoundary, IntensitySpec, ValueSurface
from .levy import LevyModel, Measure, variance_rate
from .spectral import GridSpec, apply_multiplier, exp_filter, frequency_nodes, nyquist_symmetric, phi1

log = logging.getLogger(__name__)


class GridTooCoarseError(RuntimeError):
    """The value at ``x_max`` does not match the exercise payoff."""


class BoundaryMonotonicityError(RuntimeError):
    """Raw exercise boundary increases in time by more than one grid cell."""


SANITY_RTOL = 0.01
BGK_BETA = 0.5826  # -zeta(1/2)/sqrt(2 pi)
DEFAULT_STORE = 65
WIDTH_SD = 4.0  # x_max must cover this many standard deviations of X_T


def pricing_model(model: LevyModel, contract: ContractSpec) -> LevyModel:
    """Risk-neutral copy of ``model`` for the contract's ``r`` and ``q``."""
    return model.risk_neutral(contract.r, contract.q)


def check_width(model: LevyModel, contract: ContractSpec, grid: GridSpec) -> None:
    """Reject grids whose half-width is small against the spread of ``X_T``.

    The value at the spot is polluted by the periodic image of the payoff once
    the horizon spread approaches ``x_max``; the edge check alone cannot see it
    because the exercise floor pins the edge value to the payoff.
    """
    spread = math.sqrt(variance_rate(model) * contract.T)
    if grid.x_max < WIDTH_SD * spread:
        raise GridTooCoarseError(f"x_max={grid.x_max:g} is below {WIDTH_SD:g} standard deviations "
                                 f"of X_T ({spread:.4g}); widen x_max")


def _store_indices(M: int, store) -> np.ndarray:
    if store == "all" or store is None:
        return np.arange(M + 1)
    n = int(store)
    return np.unique(np.round(np.linspace(0, M, min(n, M + 1))).astype(int))


def _sanity(values: np.ndarray, payoff: np.ndarray, label: str) -> None:
    top, pay = values[-1], payoff[-1]
    if pay <= 0 or abs(top - pay) > SANITY_RTOL * pay:
        raise GridTooCoarseError(f"{label}: value at x_max {top:.6g} vs payoff {pay:.6g}; widen x_max")


def _crossing(values, payoff, s, K, tol, x_limit_idx) -> float:
    """Smallest stock price above ``K`` where the slice touches the payoff."""
    diff = values[:x_limit_idx] - payoff[:x_limit_idx]
    itm = s[:x_limit_idx] > K
    hit = np.flatnonzero(itm & (diff <= tol))
    if hit.size == 0:
        return math.inf
    j = int(hit[0])
    if j == 0 or not itm[j - 1]:
        return float(s[j])
    d0, d1 = diff[j - 1] - tol, diff[j] - tol
    w = d0 / (d0 - d1) if d0 != d1 else 1.0
    return float(s[j - 1] + w * (s[j] - s[j - 1]))


class _BoundaryTracker:
    """Collects raw crossings per time step during a backward solve."""

    def __init__(self, grid: GridSpec, contract: ContractSpec, tol: float, trust: float):
        self.s = contract.S0 * np.exp(grid.x)
        self.K = contract.K
        self.tol = tol
        self.limit = int(np.searchsorted(grid.x, grid.x_max - trust, side="right"))
        self.times: list[float] = []
        self.raw: list[float] = []

    def add(self, t, values, payoff):
        self.times.append(t)
        self.raw.append(_crossing(values, payoff, self.s, self.K, self.tol, self.limit))

    def boundary(self, S0: float, dx: float) -> ExerciseBoundary:
        order = np.argsort(self.times)
        times = np.asarray(self.times)[order]
        raw = np.asarray(self.raw)[order]
        return project_boundary(times, raw, S0, dx)


def project_boundary(times, raw, S0: float, dx: float) -> ExerciseBoundary:
    """Running minimum from the first time forward; reject large raw increases."""
    raw = np.asarray(raw, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        xr = np.log(raw / S0)
        jumps = np.diff(xr)
    jumps = jumps[np.isfinite(jumps)]
    if jumps.size and jumps.max() > 1.0 * dx + 1e-12:
        raise BoundaryMonotonicityError(f"raw boundary rises by {jumps.max() / dx:.2f} cells")
    s_star = np.minimum.accumulate(raw)
    return ExerciseBoundary(np.asarray(times, float), s_star, S0, raw_s_star=raw)


@dataclass
class EsoResult:
    vested: Optional[ValueSurface]
    unvested: ValueSurface
    value: float
    boundary: Optional[ExerciseBoundary]


def _time_grid(contract: ContractSpec, grid: GridSpec):
    dt = (contract.T - contract.t_v) / grid.M
    return dt, contract.t_v + dt * np.arange(grid.M + 1)


def _backward(grid, contract, step, *, american, store, tol, trust, label, sanity=True, barrier=None):
    """Shared backward loop; ``step(C, t_from, t_to)`` returns the continuation slice."""
    x = grid.x
    payoff = contract.payoff(x)
    dt, times = _time_grid(contract, grid)
    keep = set(_store_indices(grid.M, store).tolist())
    tracker = _BoundaryTracker(grid, contract, tol, trust) if american else None
    C = payoff.copy()
    slices = {grid.M: C.copy()}
    if tracker is not None:
        tracker.add(times[-1], C, payoff)
    for m in range(grid.M, 0, -1):
        C = step(C, times[m], times[m - 1])
        if american:
            np.maximum(C, payoff, out=C)
        if barrier is not None:
            mask = x >= barrier(times[m - 1])
            C[mask] = payoff[mask]
        if m - 1 in keep:
            slices[m - 1] = C.copy()
        if tracker is not None:
            tracker.add(times[m - 1], C, payoff)
    if sanity and (american or barrier is not None):
        _sanity(C, payoff, label)
    idx = sorted(slices)
    surf = ValueSurface(grid, times[idx], np.array([slices[i] for i in idx]), contract.S0,
                        meta={"method": label, "dt": dt})
    if tracker is not None:
        surf.boundary = tracker.boundary(contract.S0, grid.dx)
    return surf, C


def _constant_multipliers(model, contract, grid, lam, dt):
    omega = frequency_nodes(grid)
    z = model.psi(omega) - contract.r - lam
    E = nyquist_symmetric(np.exp(z * dt)) * exp_filter(grid)
    G = nyquist_symmetric(phi1(z, dt))
    return E, G


def price_vested_constant(model: LevyModel, contract: ContractSpec, grid: GridSpec, *,
                          american: bool = True, store=DEFAULT_STORE, tol: float = 1e-9,
                          trust: Optional[float] = None, sanity: bool = True) -> ValueSurface:
    """Vested ESO on ``[t_v, T]`` under a constant post-vesting intensity.

    With ``american=False`` the exercise floor is dropped, giving the
    European-with-forcing value (no voluntary exercise, forced exercise on
    job termination).
    """
    if contract.intensity.variant != "constant":
        raise ValueError("price_vested_constant needs a constant intensity")
    rn = pricing_model(model, contract)
    lam = contract.intensity.lam
    dt, _ = _time_grid(contract, grid)
    E, G = _constant_multipliers(rn, contract, grid, lam, dt)
    forcing = apply_multiplier(lam * contract.payoff(grid.x), G)

    def step(C, t2, t1):
        return apply_multiplier(C, E) + forcing

    surf, _ = _backward(grid, contract, step, american=american, store=store, tol=tol,
                        trust=grid.x_max / 2 if trust is None else trust,
                        label="fst-constant" if american else "fst-constant-european", sanity=sanity)
    return surf


def price_unvested(model: LevyModel, contract: ContractSpec, grid: GridSpec,
                   vested_slice: np.ndarray, times: Optional[Sequence[float]] = None) -> ValueSurface:
    """Unvested ESO on ``[0, t_v]`` by one-step propagation of the ``t_v`` slice."""
    t_v = contract.t_v
    times = np.array([0.0, t_v] if times is None else times, dtype=float)
    times = np.unique(times)
    if np.any(times > t_v + 1e-12) or np.any(times < 0):
        raise ValueError("unvested times must lie in [0, t_v]")
    inten = contract.intensity
    if inten.variant != "constant":
        raise ValueError("price_unvested handles constant pre-vesting intensity; use the affine/general steppers")
    rn = pricing_model(model, contract)
    z = rn.psi(frequency_nodes(grid)) - contract.r - inten.lam_pre
    V = np.fft.fft(vested_slice)
    rows = []
    for t in times:
        tau = t_v - t
        rows.append(np.asarray(vested_slice, float).copy() if tau <= 0 else
                    spectral._real(np.fft.ifft(V * nyquist_symmetric(np.exp(z * tau))), 1e-8))
    return ValueSurface(grid, times, np.array(rows), contract.S0, meta={"method": "fst-unvested"})


# -- affine intensity ----------------------------------------------------------

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (8, 16, 32)}


def shifted_exponent_integral(model: LevyModel, omega: np.ndarray, a: float, h: float, c: float,
                              n_gl: int = 16) -> np.ndarray:
    """``int_0^h (Psi(w - i a s) - c) ds`` by Gauss-Legendre in ``s``."""
    xi, wts = _GL[n_gl]
    s = 0.5 * h * (xi + 1.0)
    vals = model.psi(omega[None, :] - 1j * a * s[:, None]) - c
    return 0.5 * h * np.tensordot(wts, vals, axes=1)


def _affine_check(a: float, b: float, x: np.ndarray, name: str):
    if a == 0:
        raise ValueError(f"{name}: a = 0 is the constant-intensity case; use price_vested_constant")
    if np.any(a * x + b <= 0):
        raise ValueError(f"{name}: intensity a*x+b must be positive on the grid")


def price_vested_affine(model: LevyModel, contract: ContractSpec, grid: GridSpec, n_inner: int = 8, *,
                        store=DEFAULT_STORE, tol: float = 1e-9, trust: Optional[float] = None,
                        sanity: bool = True) -> ValueSurface:
    """Vested ESO under the affine intensity ``a*x + b`` (characteristics in frequency)."""
    inten = contract.intensity
    if inten.variant != "affine":
        raise ValueError("price_vested_affine needs an affine intensity")
    a, b = inten.a, inten.b
    x = grid.x
    _affine_check(a, b, x, "post-vesting")
    rn = pricing_model(model, contract)
    omega = frequency_nodes(grid)
    dt, _ = _time_grid(contract, grid)
    c = contract.r + b
    E = nyquist_symmetric(np.exp(shifted_exponent_integral(rn, omega, a, dt, c))) * exp_filter(grid)
    weight = np.exp(-a * dt * x)
    psi_src = (a * x + b) * contract.payoff(x)
    acc = np.zeros(grid.N, dtype=complex)
    for k in range(n_inner):
        sk = k * dt / n_inner
        ek = np.exp(shifted_exponent_integral(rn, omega, a, sk, c)) if k else 1.0
        acc += np.fft.fft(psi_src * np.exp(-a * sk * x)) * ek
    forcing = spectral._real(np.fft.ifft(nyquist_symmetric(acc * (dt / n_inner))), 1e-8)

    def step(C, t2, t1):
        return apply_multiplier(C * weight, E) + forcing

    surf, _ = _backward(grid, contract, step, american=True, store=store, tol=tol,
                        trust=grid.x_max / 2 if trust is None else trust, label="fst-affine", sanity=sanity)
    surf.meta["n_inner"] = n_inner
    return surf


def price_unvested_affine(model: LevyModel, contract: ContractSpec, grid: GridSpec, vested_slice: np.ndarray,
                          times: Optional[Sequence[float]] = None) -> ValueSurface:
    """Unvested ESO under ``a_pre*x + b_pre`` by one characteristic step from ``t_v``."""
    inten = contract.intensity
    a, b = inten.a_pre, inten.b_pre
    x = grid.x
    _affine_check(a, b, x, "pre-vesting")
    t_v = contract.t_v
    times = np.unique(np.array([0.0, t_v] if times is None else times, dtype=float))
    rn = pricing_model(model, contract)
    omega = frequency_nodes(grid)
    rows = []
    for t in times:
        tau = t_v - t
        if tau <= 0:
            rows.append(np.asarray(vested_slice, float).copy())
            continue
        H = nyquist_symmetric(np.exp(shifted_exponent_integral(rn, omega, a, tau, contract.r + b, n_gl=32)))
        rows.append(apply_multiplier(vested_slice * np.exp(-a * tau * x), H))
    return ValueSurface(grid, times, np.array(rows), contract.S0, meta={"method": "fst-affine-unvested"})


# -- general intensity: implicit-explicit ------------------------------------------

def _ie_multipliers(rn, contract, grid, dt):
    z = rn.psi(frequency_nodes(grid)) - contract.r
    return nyquist_symmetric(np.exp(z * dt)) * exp_filter(grid), nyquist_symmetric(phi1(z, dt))


def price_vested_general_ie(model: LevyModel, contract: ContractSpec, grid: GridSpec, *,
                            store=DEFAULT_STORE, tol: float = 1e-9, trust: Optional[float] = None,
                            american: bool = True, sanity: bool = True) -> ValueSurface:
    """Vested ESO for a state- and time-dependent intensity.

    The intensity term is explicit (frozen at the later time of each step), the
    generator is integrated exactly.
    """
    inten = contract.intensity
    if inten.variant != "general":
        inten = inten.as_general()
    x = grid.x
    rn = pricing_model(model, contract)
    dt, times = _time_grid(contract, grid)
    inten.check_on_grid(x, times[:: max(1, grid.M // 8)])
    E, G = _ie_multipliers(rn, contract, grid, dt)
    payoff = contract.payoff(x)
    lam0 = inten.post(contract.T, x)
    homogeneous = inten.time_homogeneous

    def step(C, t2, t1):
        lam = lam0 if homogeneous else inten.post(t2, x)
        V = np.fft.fft(C) * E + np.fft.fft(lam * (payoff - C)) * G
        return spectral._real(np.fft.ifft(V), 1e-8)

    surf, _ = _backward(grid, contract, step, american=american, store=store, tol=tol,
                        trust=grid.x_max / 2 if trust is None else trust, label="fst-general", sanity=sanity)
    return surf


def price_unvested_general_ie(model: LevyModel, contract: ContractSpec, grid: GridSpec,
                              vested_slice: np.ndarray, n_steps: Optional[int] = None) -> ValueSurface:
    """Unvested ESO with explicit pre-vesting kill rate, stepped from ``t_v`` to 0."""
    inten = contract.intensity
    if inten.variant != "general":
        inten = inten.as_general()
    t_v = contract.t_v
    x = grid.x
    if t_v <= 0:
        return ValueSurface(grid, [0.0], np.asarray(vested_slice, float)[None, :], contract.S0,
                            meta={"method": "fst-general-unvested"})
    if n_steps is None:
        n_steps = _pre_steps(contract, grid)
    dt = t_v / n_steps
    rn = pricing_model(model, contract)
    E, G = _ie_multipliers(rn, contract, grid, dt)
    C = np.asarray(vested_slice, float).copy()
    for m in range(n_steps, 0, -1):
        lam = inten.pre(m * dt, x)
        V = np.fft.fft(C) * E - np.fft.fft(lam * C) * G
        C = spectral._real(np.fft.ifft(V), 1e-8)
    return ValueSurface(grid, [0.0, t_v], np.array([C, vested_slice]), contract.S0,
                        meta={"method": "fst-general-unvested", "n_steps": n_steps})


def _pre_steps(contract: ContractSpec, grid: GridSpec) -> int:
    span = contract.T - contract.t_v
    dt_ref = span / grid.M if span > 0 else contract.T / grid.M
    return max(1, int(math.ceil(contract.t_v / dt_ref - 1e-9)))


# -- barrier ESO ---------------------------------------------------------------------

def price_barrier(model: LevyModel, contract: ContractSpec, grid: GridSpec, L0: float, a_bar: float, *,
                  store=DEFAULT_STORE, barrier_clock: str = "vesting",
                  monitoring: str = "continuous") -> EsoResult:
    """ESO exercised at the exogenous barrier ``L(t) = L0 exp(a_bar (t - t0))`` after vesting.

    No voluntary exercise elsewhere; forced exercise on job termination.
    ``barrier_clock="vesting"`` takes ``t0 = t_v`` and ``"absolute"`` takes
    ``t0 = 0``. The barrier is imposed once per step; with
    ``monitoring="continuous"`` it is shifted down by ``0.5826 sd sqrt(dt)``
    (the standard discrete-monitoring correction) so the result approximates
    a continuously monitored barrier.
    """
    if L0 <= 0:
        raise ValueError("barrier level must be positive")
    if contract.intensity.variant != "constant":
        raise ValueError("barrier ESO is implemented for constant intensity")
    if barrier_clock not in ("vesting", "absolute"):
        raise ValueError(f"unknown barrier clock {barrier_clock!r}")
    if monitoring not in ("continuous", "discrete"):
        raise ValueError(f"unknown monitoring {monitoring!r}")
    t0 = contract.t_v if barrier_clock == "vesting" else 0.0
    if L0 * max(math.exp(a_bar * (contract.T - t0)), math.exp(a_bar * (contract.t_v - t0))) <= contract.K:
        log.warning("barrier lies below the strike over the whole exercise window")
    check_width(model, contract, grid)
    rn = pricing_model(model, contract)
    lam = contract.intensity.lam
    dt, _ = _time_grid(contract, grid)
    if contract.T > contract.t_v:
        shift = BGK_BETA * math.sqrt(variance_rate(rn) * dt) if monitoring == "continuous" else 0.0
        E, G = _constant_multipliers(rn, contract, grid, lam, dt)
        forcing = apply_multiplier(lam * contract.payoff(grid.x), G)

        def barrier(t):
            return math.log(L0 / contract.S0) + a_bar * (t - t0) - shift

        surf, C = _backward(grid, contract, lambda C, t2, t1: apply_multiplier(C, E) + forcing,
                            american=False, store=store, tol=0.0, trust=0.0, label="fst-barrier",
                            barrier=barrier)
        surf.meta.update(barrier_clock=barrier_clock, monitoring=monitoring, barrier_shift=shift)
    else:
        surf, C = None, contract.payoff(grid.x)
    unv = price_unvested(model, contract, grid, C)
    return EsoResult(surf, unv, unv.value(0.0, 0.0), None)


# -- driver -------------------------------------------------------------------------

def price_eso(model: LevyModel, contract: ContractSpec, grid: GridSpec, scheme: str = "auto",
              n_inner: int = 8, american: bool = True, store=DEFAULT_STORE,
              unvested_times: Optional[Sequence[float]] = None) -> EsoResult:
    """Vested solve on ``[t_v, T]`` followed by the unvested propagation to 0.

    ``scheme``: ``constant``, ``affine``, ``general`` or ``auto`` (by intensity variant).
    """
    check_width(model, contract, grid)
    variant = contract.intensity.variant
    if scheme == "auto":
        scheme = variant
    if contract.T > contract.t_v:
        if scheme == "constant":
            vested = price_vested_constant(model, contract, grid, american=american, store=store)
        elif scheme == "affine":
            vested = price_vested_affine(model, contract, grid, n_inner, store=store)
        elif scheme == "general":
            vested = price_vested_general_ie(model, contract, grid, store=store, american=american)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        slice_tv = vested.values[0]
    else:
        vested = None
        slice_tv = contract.payoff(grid.x)
    if scheme == "constant":
        unv = price_unvested(model, contract, grid, slice_tv, unvested_times)
    elif scheme == "affine":
        unv = price_unvested_affine(model, contract, grid, slice_tv, unvested_times)
    else:
        unv = price_unvested_general_ie(model, contract, grid, slice_tv)
    return EsoResult(vested, unv, unv.value(0.0, 0.0), vested.boundary if vested is not None else None)


def extract_boundary(surface: ValueSurface, contract: ContractSpec, tol: float = 1e-9,
                     trust: Optional[float] = None) -> ExerciseBoundary:
    """Exercise boundary from the stored slices of a vested surface."""
    grid = surface.grid
    tr = _BoundaryTracker(grid, contract, tol, grid.x_max / 2 if trust is None else trust)
    payoff = contract.payoff(surface.x)
    for t, row in zip(surface.times, surface.values):
        tr.add(t, row, payoff)
    return tr.boundary(contract.S0, grid.dx * max(1, 1))
