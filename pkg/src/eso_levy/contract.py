"""Contract, intensity and result containers shared by the FST and FDM solvers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .spectral import GridSpec


def fmt(v: float) -> str:
    """Number format used by every CSV writer (10 significant digits)."""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"


@dataclass(frozen=True)
class IntensitySpec:
    """Job-termination intensity after (``post``) and before (``pre``) vesting.

    Variants: ``constant`` (``lam``, ``lam_pre``), ``affine``
    (``a*x + b`` after and ``a_pre*x + b_pre`` before vesting), and
    ``general`` with callables ``fn(t, x)`` / ``fn_pre(t, x)``.
    """

    variant: str = "constant"
    lam: float = 0.0
    lam_pre: float = 0.0
    a: float = 0.0
    b: float = 0.0
    a_pre: float = 0.0
    b_pre: float = 0.0
    fn: Optional[Callable] = None
    fn_pre: Optional[Callable] = None

    def __post_init__(self):
        if self.variant not in ("constant", "affine", "general"):
            raise ValueError(f"unknown intensity variant {self.variant!r}")
        if self.variant == "constant" and (self.lam < 0 or self.lam_pre < 0):
            raise ValueError("constant intensities must be nonnegative")
        if self.variant == "general" and (self.fn is None or self.fn_pre is None):
            raise ValueError("general intensity needs fn and fn_pre")

    @classmethod
    def constant(cls, lam: float, lam_pre: float) -> "IntensitySpec":
        return cls("constant", lam=float(lam), lam_pre=float(lam_pre))

    @classmethod
    def affine(cls, a: float, b: float, a_pre: float, b_pre: float) -> "IntensitySpec":
        return cls("affine", a=float(a), b=float(b), a_pre=float(a_pre), b_pre=float(b_pre))

    @classmethod
    def general(cls, fn: Callable, fn_pre: Callable) -> "IntensitySpec":
        return cls("general", fn=fn, fn_pre=fn_pre)

    def post(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.variant == "constant":
            return np.full_like(x, self.lam)
        if self.variant == "affine":
            return self.a * x + self.b
        return np.broadcast_to(np.asarray(self.fn(t, x), dtype=float), x.shape).copy()

    def pre(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.variant == "constant":
            return np.full_like(x, self.lam_pre)
        if self.variant == "affine":
            return self.a_pre * x + self.b_pre
        return np.broadcast_to(np.asarray(self.fn_pre(t, x), dtype=float), x.shape).copy()

    @property
    def time_homogeneous(self) -> bool:
        return self.variant != "general" or getattr(self.fn, "time_homogeneous", False)

    def as_general(self) -> "IntensitySpec":
        """Same rates as tabulated callables, for the implicit-explicit stepper."""
        post = lambda t, x: self.post(t, x)  # noqa: E731
        pre = lambda t, x: self.pre(t, x)  # noqa: E731
        if self.variant != "general":
            post.time_homogeneous = True
            pre.time_homogeneous = True
        return IntensitySpec.general(post, pre)

    def check_on_grid(self, x: np.ndarray, times=(0.0,)) -> None:
        for t in times:
            for rate, name in ((self.post(t, x), "post-vesting"), (self.pre(t, x), "pre-vesting")):
                if not np.all(np.isfinite(rate)):
                    raise ValueError(f"{name} intensity not finite on the grid")
                if np.any(rate < 0):
                    raise ValueError(f"{name} intensity must be nonnegative on [x_min, x_max]")
                if self.variant == "affine" and np.any(rate <= 0):
                    raise ValueError(f"{name} intensity must be positive on [x_min, x_max]")


@dataclass(frozen=True)
class ContractSpec:
    S0: float
    K: float
    r: float
    q: float
    T: float
    t_v: float
    intensity: IntensitySpec = field(default_factory=IntensitySpec)

    def __post_init__(self):
        for name in ("S0", "K", "r", "q", "T", "t_v"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.S0 > 0 and self.K > 0):
            raise ValueError("S0 and K must be positive")
        if not 0 <= self.t_v <= self.T:
            raise ValueError("need 0 <= t_v <= T")
        if not self.r > 0 or self.q < 0:
            raise ValueError("need r > 0 and q >= 0")

    def payoff(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.S0 * np.exp(x) - self.K, 0.0)

    def with_(self, **kw) -> "ContractSpec":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass
class ExerciseBoundary:
    """Critical stock prices ``s_star[m]`` at ``times[m]``; ``inf`` if never exercised."""

    times: np.ndarray
    s_star: np.ndarray
    S0: float
    raw_s_star: Optional[np.ndarray] = None

    @property
    def x_star(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.s_star / self.S0)

    def x_star_at(self, t) -> np.ndarray:
        """Boundary in log-price at arbitrary times (linear interpolation, flat beyond)."""
        xs = self.x_star
        t = np.asarray(t, dtype=float)
        if np.all(np.isinf(xs)):
            return np.full(t.shape, np.inf)[()]
        finite = np.isfinite(xs)
        out = np.interp(t, self.times, np.where(finite, xs, 1e300))
        return np.where(out > 1e299, np.inf, out)[()]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "s_star"])
            for t, s in zip(self.times, self.s_star):
                w.writerow([fmt(t), fmt(s)])


@dataclass
class ValueSurface:
    """Values ``values[m, n]`` at ``(times[m], grid.x[n])``; times ascending."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray
    S0: float
    boundary: Optional[ExerciseBoundary] = None
    meta: dict = field(default_factory=dict)
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x is None:
            self.x = self.grid.x
        if self.values.shape != (len(self.times), len(self.x)):
            raise ValueError("values must be (len(times), len(x))")

    def slice_at(self, t: float) -> np.ndarray:
        """Slice at ``t``, linear in time between stored slices."""
        times = self.times
        if t <= times[0]:
            return self.values[0]
        if t >= times[-1]:
            return self.values[-1]
        j = int(np.searchsorted(times, t))
        if math.isclose(times[j], t, rel_tol=0, abs_tol=1e-12):
            return self.values[j]
        w = (t - times[j - 1]) / (times[j] - times[j - 1])
        return (1 - w) * self.values[j - 1] + w * self.values[j]

    def value(self, t: Optional[float] = None, x: float = 0.0) -> float:
        """Value at time ``t`` (default: first time) and log-price ``x``."""
        sl = self.values[0] if t is None else self.slice_at(t)
        return float(np.interp(x, self.x, sl))

    def s(self) -> np.ndarray:
        return self.S0 * np.exp(self.x)

    def to_csv(self, path, header=("t", "x", "s", "value"), x_lo: float = -math.inf,
               x_hi: float = math.inf) -> None:
        keep = (self.x >= x_lo) & (self.x <= x_hi)
        x, s = self.x[keep], self.s()[keep]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header))
            for t, row in zip(self.times, self.values[:, keep]):
                ft = fmt(t)
                for xi, si, v in zip(x, s, row):
                    w.writerow([ft, fmt(xi), fmt(si), fmt(v)])
