"""Closed-form perpetual ESO under GBM.

The vested value solves the stationary variational inequality
``min{-L V + (r+lam) V - lam (s-K)^+, V - (s-K)^+} = 0`` and is piecewise

    D s^g+                                   s < K
    A s^g+ + B s^g- + lam/(lam+q) s - lam/(r+lam) K    K <= s < s*
    s - K                                    s >= s*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr


@dataclass(frozen=True)
class PerpetualSolution:
    gamma_plus: float
    gamma_minus: float
    A: float
    B: float
    D: float
    s_star: float
    K: float
    r: float
    q: float
    sigma: float
    lam: float

    @property
    def never_exercise(self) -> bool:
        return math.isinf(self.s_star)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("gamma_plus", "gamma_minus", "A", "B", "D", "s_star", "K", "r", "q", "sigma", "lam")}


def gammas(r: float, q: float, sigma: float, lam: float) -> tuple[float, float]:
    """Roots of ``sigma^2/2 g(g-1) + (r-q) g - (r+lam) = 0``."""
    s2 = sigma * sigma
    b = q - r + 0.5 * s2
    disc = math.sqrt(b * b + 2.0 * (r + lam) * s2)
    return (b + disc) / s2, (b - disc) / s2


def _B(K, r, q, lam, gp, gm) -> float:
    # continuity and smooth fit at s = K eliminate D
    if lam == 0:
        return 0.0
    rhs = lam * K * (1.0 / (r + lam) - (1.0 - 1.0 / gp) / (lam + q))
    return rhs / ((1.0 - gm / gp) * K**gm)


def threshold_function(s, K, r, q, lam, gp, gm, B) -> float:
    """``f(s*)``; its unique root above ``K`` is the exercise threshold."""
    return B * (1.0 - gm / gp) * s**gm - (1.0 - 1.0 / gp) * (q / (lam + q)) * s + r / (r + lam) * K


def solve_perpetual_vested(K: float, r: float, q: float, sigma: float, lam: float) -> PerpetualSolution:
    if not (r > 0 and sigma > 0 and q >= 0 and lam >= 0 and K > 0):
        raise ValueError("need K, r, sigma > 0 and q, lam >= 0")
    gp, gm = gammas(r, q, sigma, lam)
    B = _B(K, r, q, lam, gp, gm)
    if q == 0:
        # f stays positive: holding is always better than exercising. With lam = 0
        # as well, gamma_plus = 1 and the value is the stock itself.
        s_star, A = math.inf, (1.0 if lam == 0 else 0.0)
    else:
        f = lambda s: threshold_function(s, K, r, q, lam, gp, gm, B)  # noqa: E731
        hi = 2.0 * K
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                raise RuntimeError("threshold bracket not found")
        if not f(K) > 0:
            raise RuntimeError(f"f(K) = {f(K):.3e} should be positive")
        s_star = optimize.brentq(f, K, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
        A = q / ((lam + q) * gp) * s_star ** (1.0 - gp) - gm / gp * B * s_star ** (gm - gp)
    D = A + B * K ** (gm - gp) + lam * (r - q) / ((lam + q) * (lam + r)) * K ** (1.0 - gp) if (lam + q) > 0 \
        else A + B * K ** (gm - gp)
    return PerpetualSolution(gp, gm, A, B, D, s_star, K, r, q, sigma, lam)


def _middle(sol: PerpetualSolution, s, order: int = 0):
    gp, gm, lam, q, r, K = sol.gamma_plus, sol.gamma_minus, sol.lam, sol.q, sol.r, sol.K
    c1 = lam / (lam + q) if lam + q > 0 else 0.0
    if order == 0:
        return sol.A * s**gp + sol.B * s**gm + c1 * s - lam / (r + lam) * K
    if order == 1:
        return gp * sol.A * s ** (gp - 1) + gm * sol.B * s ** (gm - 1) + c1
    return gp * (gp - 1) * sol.A * s ** (gp - 2) + gm * (gm - 1) * sol.B * s ** (gm - 2)


def eval_perpetual_vested(sol: PerpetualSolution, s, order: int = 0):
    """``V(s)`` (or its first/second derivative with ``order`` 1/2), vectorised."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("stock price must be nonnegative")
    gp = sol.gamma_plus
    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 0:
            low = sol.D * s**gp
            high = s - sol.K
        elif order == 1:
            low = gp * sol.D * s ** (gp - 1)
            high = np.ones_like(s)
        else:
            low = gp * (gp - 1) * sol.D * s ** (gp - 2)
            high = np.zeros_like(s)
        mid = _middle(sol, np.where(s > 0, s, 1.0), order)
    out = np.where(s < sol.K, low, np.where(s < sol.s_star, mid, high))
    return out[()] if out.ndim == 0 else out


def _power_moment(s, a, m, v, lo, hi):
    """``E[S^a 1{lo <= S < hi}]`` for ``ln S ~ N(ln s + m, v)``."""
    if v == 0:
        S = s * math.exp(m)
        return S**a * float(lo <= S < hi)
    sd = math.sqrt(v)
    mean = math.log(s) + m + a * v

    def cdf(b):
        if b <= 0:
            return 0.0
        if math.isinf(b):
            return 1.0
        return float(ndtr((math.log(b) - mean) / sd))

    return s**a * math.exp(a * m + 0.5 * a * a * v) * (cdf(hi) - cdf(lo))


def eval_perpetual_unvested(sol: PerpetualSolution, t: float, t_v: float, s: float, *,
                            drift: str = "risk_neutral", lam_pre: float | None = None) -> float:
    """``E[exp(-(r+lam_pre)(t_v-t)) V(S_{t_v}) | S_t = s]`` by lognormal piecewise moments.

    ``drift="risk_neutral"`` uses the log drift ``r - q - sigma^2/2``;
    ``drift="printed"`` uses ``r - sigma^2/2``. ``lam_pre`` defaults to the
    post-vesting rate.
    """
    if t > t_v:
        raise ValueError("need t <= t_v")
    tau = t_v - t
    if tau == 0:
        return float(eval_perpetual_vested(sol, s))
    if drift not in ("risk_neutral", "printed"):
        raise ValueError(f"unknown drift convention {drift!r}")
    lam_pre = sol.lam if lam_pre is None else lam_pre
    sig, r, q, K, lam = sol.sigma, sol.r, sol.q, sol.K, sol.lam
    mu = r - q - 0.5 * sig * sig if drift == "risk_neutral" else r - 0.5 * sig * sig
    m, v = mu * tau, sig * sig * tau
    ss = sol.s_star
    c1 = lam / (lam + q) if lam + q > 0 else 0.0
    total = sol.D * _power_moment(s, sol.gamma_plus, m, v, 0.0, K)
    total += sol.A * _power_moment(s, sol.gamma_plus, m, v, K, ss)
    total += sol.B * _power_moment(s, sol.gamma_minus, m, v, K, ss)
    total += c1 * _power_moment(s, 1.0, m, v, K, ss) - lam / (r + lam) * K * _power_moment(s, 0.0, m, v, K, ss)
    if not math.isinf(ss):
        total += _power_moment(s, 1.0, m, v, ss, math.inf) - K * _power_moment(s, 0.0, m, v, ss, math.inf)
    return math.exp(-(r + lam_pre) * tau) * total


def ode_residual(sol: PerpetualSolution, s) -> np.ndarray:
    """Relative residual of the stationary ODE in the continuation region."""
    s = np.asarray(s, dtype=float)
    V = eval_perpetual_vested(sol, s)
    V1 = eval_perpetual_vested(sol, s, 1)
    V2 = eval_perpetual_vested(sol, s, 2)
    res = (0.5 * sol.sigma**2 * s * s * V2 + (sol.r - sol.q) * s * V1 - (sol.r + sol.lam) * V
           + sol.lam * np.maximum(s - sol.K, 0.0))
    return res / np.maximum(np.abs(V), 1e-300)


def pasting_residuals(sol: PerpetualSolution) -> dict:
    """Value and slope mismatches at ``K`` and ``s*`` (relative)."""
    K, gp, D = sol.K, sol.gamma_plus, sol.D
    out = {
        "value_K": (D * K**gp - _middle(sol, K)) / (D * K**gp),
        "slope_K": (gp * D * K ** (gp - 1) - _middle(sol, K, 1)) / (gp * D * K ** (gp - 1)),
    }
    if not sol.never_exercise:
        ss = sol.s_star
        out["value_s_star"] = (_middle(sol, ss) - (ss - K)) / (ss - K)
        out["slope_s_star"] = _middle(sol, ss, 1) - 1.0
    return out
