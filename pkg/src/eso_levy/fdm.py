"""Implicit-explicit finite differences for the ESO PIDVI in ``tau = T - t``.

Diffusion, drift and discounting are implicit (one tridiagonal solve per
step); the jump sum and the job-termination cash flow are explicit. Models of
infinite activity are replaced by the auxiliary process whose jumps smaller
than ``eps`` are folded into the diffusion coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.signal import fftconvolve

from .contract import ContractSpec, ExerciseBoundary, ValueSurface
from .levy import LevyModel, levy_mass, small_jump_variance


@dataclass(frozen=True)
class FdmGrid:
    """``N_fd`` intervals on ``[-A, A]`` and ``M_fd`` steps on ``[t_v, T]``.

    ``eps`` is the small-jump cutoff (infinite-activity models only; jumps
    inside the central cell are always treated as diffusion).
    ``jump_split="implicit"`` keeps the jump-intensity loss ``-alpha F`` in the
    implicit operator; ``"explicit"`` moves it to the explicit jump sum.
    """

    A: float = 6.0
    N_fd: int = 8000
    M_fd: int = 4000
    eps: float = 1e-3
    tail_mass: float = 1e-8
    jump_split: str = "explicit"
    drift_scheme: str = "central"

    def __post_init__(self):
        if self.drift_scheme not in ("hybrid", "central", "upwind"):
            raise ValueError(f"unknown drift_scheme {self.drift_scheme!r}")
        if self.A <= 0 or self.N_fd < 4 or self.M_fd < 1:
            raise ValueError("need A > 0, N_fd >= 4, M_fd >= 1")
        if self.jump_split not in ("implicit", "explicit"):
            raise ValueError(f"unknown jump_split {self.jump_split!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.A / self.N_fd

    @property
    def x(self) -> np.ndarray:
        return -self.A + self.dx * np.arange(self.N_fd + 1)


@dataclass
class JumpStencil:
    """Cell masses ``nu_j`` at offsets ``j`` in ``[K_l, K_r]`` plus derived constants."""

    K_l: int
    K_r: int
    nu: np.ndarray
    alpha: float
    beta: float
    sigma2: float
    drift: float
    cutoff: float


def jump_stencil(model: LevyModel, r: float, q: float, grid: FdmGrid) -> JumpStencil:
    """Trapezoid-in-cell jump weights and the drift that keeps ``e^x`` a discrete martingale."""
    dx = grid.dx
    sig2 = model.sigma**2
    if not model.has_jumps:
        return JumpStencil(0, 0, np.zeros(1), 0.0, 0.0, sig2, r - q - 0.5 * sig2, 0.0)
    cut = 0.5 * dx if model.finite_activity else max(grid.eps, 0.5 * dx)
    if not model.finite_activity:
        sig2 += small_jump_variance(model, cut)
    jmax = int(math.ceil(4.0 * grid.A / dx))
    j = np.arange(-jmax, jmax + 1)
    lo = (j - 0.5) * dx
    hi = (j + 0.5) * dx
    lo = np.where(j > 0, np.maximum(lo, cut), lo)
    hi = np.where(j < 0, np.minimum(hi, -cut), hi)
    nu = np.zeros(j.size)
    live = (j != 0) & (hi > lo)
    nu[live] = levy_mass(model, lo[live], hi[live])
    nu = np.maximum(nu, 0.0)
    # trim tails whose cumulative mass stays below the tolerance
    left = np.cumsum(nu)
    right = np.cumsum(nu[::-1])[::-1]
    keep = np.flatnonzero((left > 0.5 * grid.tail_mass) & (right > 0.5 * grid.tail_mass))
    if keep.size == 0:
        keep = np.array([jmax])
    a, b = int(keep[0]), int(keep[-1])
    j, nu = j[a:b + 1], nu[a:b + 1]
    alpha = float(nu.sum())
    beta = float(np.dot(nu, np.expm1(j * dx)))
    return JumpStencil(int(j[0]), int(j[-1]), nu, alpha, beta, sig2, r - q - 0.5 * sig2 - beta, cut)


def _operator_bands(st: JumpStencil, dx: float, n: int, scheme: str = "hybrid"):
    """Sub/main/super coefficients of the generator without jumps.

    ``hybrid`` uses central drift differences while the cell Peclet number is
    at most 1 and one-sided ones beyond.
    """
    d = 0.5 * st.sigma2 / dx**2
    mu = st.drift
    c = 0.5 * mu / dx
    central = scheme == "central" or (scheme == "hybrid" and abs(mu) * dx <= st.sigma2)
    if central:
        lower, upper = d - c, d + c
    elif mu > 0:
        lower, upper = d, d + mu / dx
    else:
        lower, upper = d - mu / dx, d
    main = -(lower + upper)
    return np.full(n, lower), np.full(n, main), np.full(n, upper)


def _closure_vested(contract: ContractSpec, t: float, s: np.ndarray) -> np.ndarray:
    tau = contract.T - t
    fwd = s * math.exp(-contract.q * tau) - contract.K * math.exp(-contract.r * tau)
    return np.maximum(fwd, s - contract.K)


def _closure_unvested(contract: ContractSpec, inten_pre: float, t: float, s: np.ndarray) -> np.ndarray:
    h = contract.t_v - t
    grown = s * math.exp((contract.r - contract.q) * h)
    return math.exp(-(contract.r + inten_pre) * h) * _closure_vested(contract, contract.t_v, grown)


def _jump_sum(F_ext: np.ndarray, st: JumpStencil, n: int, ext_lo: int) -> np.ndarray:
    """``sum_j nu_j F[i + j]`` for nodes ``i = 0..n-1``; ``F_ext[e]`` is node ``e - ext_lo``."""
    valid = fftconvolve(F_ext, st.nu[::-1], mode="valid")
    off = st.K_l + ext_lo
    return valid[off:off + n]


def price_fdm(model: LevyModel, contract: ContractSpec, grid: FdmGrid = FdmGrid(), *,
              american: bool = True, store: int = 65, tol: float = 1e-9) -> dict:
    """Price the ESO by finite differences.

    Returns a dict with ``value`` (at ``t = 0, x = 0``), the ``vested`` and
    ``unvested`` surfaces, the extracted ``boundary`` and ``meta``.
    """
    rn = model.risk_neutral(contract.r, contract.q)
    st = jump_stencil(rn, contract.r, contract.q, grid)
    x = grid.x
    n = x.size
    dx = grid.dx
    s = contract.S0 * np.exp(x)
    payoff = contract.payoff(x)
    inten = contract.intensity
    ext_lo = max(0, -st.K_l)
    ext_hi = max(0, st.K_r)
    x_ext = -grid.A + dx * np.arange(-ext_lo, n + ext_hi)
    s_ext = contract.S0 * np.exp(x_ext)
    implicit_split = grid.jump_split == "implicit"
    pre_const = inten.variant == "constant"

    def solve_phase(F, t_hi, t_lo, steps, rate_fn, forcing, closure, exercise, keep):
        dt = (t_hi - t_lo) / steps
        lower, main, upper = _operator_bands(st, dx, n, grid.drift_scheme)
        times = [t_hi]
        slices = [F.copy()]
        raw = [_crossing(F, payoff, s, contract.K, tol, x)] if exercise else None
        ab = np.zeros((3, n))
        cached_rate = None
        for m in range(steps):
            t_new = t_hi - (m + 1) * dt
            t_old = t_new + dt
            lam = rate_fn(t_old)
            if cached_rate is None or not (lam is cached_rate):
                react = contract.r + lam + (st.alpha if implicit_split else 0.0)
                ab[0, 1:] = -dt * upper[:-1]
                ab[1, :] = 1.0 - dt * (main - react)
                ab[2, :-1] = -dt * lower[1:]
                ab[0, 1] = 0.0
                ab[1, 0] = ab[1, -1] = 1.0
                ab[2, -2] = 0.0
                cached_rate = lam
            rhs = F.copy()
            if st.alpha > 0:
                F_ext = np.empty(x_ext.size)
                F_ext[ext_lo:ext_lo + n] = F
                F_ext[:ext_lo] = 0.0
                F_ext[ext_lo + n:] = closure(t_old, s_ext[ext_lo + n:])
                J = _jump_sum(F_ext, st, n, ext_lo)
                if not implicit_split:
                    J = J - st.alpha * F
                rhs += dt * J
            if forcing:
                rhs += dt * lam * payoff
            rhs[0] = 0.0
            rhs[-1] = closure(t_new, s[-1:])[0]
            F = solve_banded((1, 1), ab, rhs, check_finite=False)
            if exercise:
                np.maximum(F, payoff, out=F)
                raw.append(_crossing(F, payoff, s, contract.K, tol, x))
            if (m + 1) in keep:
                times.append(t_new)
                slices.append(F.copy())
        return F, times[::-1], slices[::-1], (raw[::-1] if raw is not None else None)

    # post-vesting
    Mv = grid.M_fd
    span = contract.T - contract.t_v
    rate_post = _rate_fn(inten, x, post=True)
    rate_pre = _rate_fn(inten, x, post=False)
    if span > 0:
        keep = set(np.unique(np.round(np.linspace(0, Mv, min(store, Mv + 1))).astype(int)).tolist())
        F, vt, vs, raw = solve_phase(payoff.copy(), contract.T, contract.t_v, Mv, rate_post, True,
                                     lambda t, ss: _closure_vested(contract, t, ss), american, keep)
        vested = ValueSurface(grid, vt, np.array(vs), contract.S0, x=x, meta={"method": "fdm"})
        if american:
            all_t = contract.t_v + (span / Mv) * np.arange(Mv + 1)
            vested.boundary = _project(all_t, raw, contract.S0, dx)
        dt = span / Mv
    else:
        F = payoff.copy()
        vested = None
        dt = contract.T / Mv
    # pre-vesting
    if contract.t_v > 0:
        steps = max(1, int(math.ceil(contract.t_v / dt - 1e-9)))
        lam_closure = inten.lam_pre if pre_const else float(np.mean(rate_pre(contract.t_v)[-1:]))
        F0, ut, us, _ = solve_phase(F, contract.t_v, 0.0, steps, rate_pre, False,
                                    lambda t, ss: _closure_unvested(contract, lam_closure, t, ss), False, {steps})
        unvested = ValueSurface(grid, ut, np.array(us), contract.S0, x=x, meta={"method": "fdm-unvested"})
    else:
        unvested = ValueSurface(grid, [0.0], F[None, :], contract.S0, x=x, meta={"method": "fdm-unvested"})
    value = unvested.value(0.0, 0.0)
    meta = {"A": grid.A, "N_fd": grid.N_fd, "M_fd": grid.M_fd, "eps": st.cutoff, "alpha": st.alpha,
            "sigma2_eff": st.sigma2, "drift": st.drift, "K_l": st.K_l, "K_r": st.K_r,
            "jump_split": grid.jump_split, "closure": "call-forward"}
    return {"value": value, "vested": vested, "unvested": unvested,
            "boundary": vested.boundary if vested is not None else None, "meta": meta}


def _rate_fn(inten, x, post: bool):
    if inten.variant == "constant":
        lam = inten.lam if post else inten.lam_pre
        arr = np.full(x.size, lam)
        return lambda t: arr
    if inten.variant == "affine":
        arr = (inten.a * x + inten.b) if post else (inten.a_pre * x + inten.b_pre)
        if np.any(arr <= 0):
            raise ValueError("affine intensity must be positive on the FDM grid")
        return lambda t: arr
    fn = inten.fn if post else inten.fn_pre
    if getattr(fn, "time_homogeneous", False):
        arr = np.broadcast_to(np.asarray(fn(0.0, x), float), x.shape).copy()
        return lambda t: arr
    return lambda t: np.broadcast_to(np.asarray(fn(t, x), float), x.shape).copy()


def _crossing(F, payoff, s, K, tol, x):
    from .fst import _crossing as cross

    limit = int(np.searchsorted(x, x[-1] - 0.5 * (x[-1] - x[0]) / 2, side="right"))
    return cross(F, payoff, s, K, tol, limit)


def _project(times, raw, S0, dx) -> Optional[ExerciseBoundary]:
    from .fst import project_boundary

    return project_boundary(np.asarray(times), np.asarray(raw), S0, dx)
