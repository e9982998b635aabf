"""Exponential Levy models: characteristic exponents, Levy densities, drifts.

All exponents use the untruncated convention

    Psi(w) = i*mu*w - sigma^2 w^2 / 2 + int (e^{iwy} - 1) nu(dy),

so that ``drift`` is the full log-price drift and the risk-neutral drift is
fixed by ``Psi(-i) = r - q``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Raised when a frequency lies outside the strip of analyticity."""


class UnsupportedModelError(ValueError):
    pass


class ModelKind(str, enum.Enum):
    GBM = "gbm"
    MERTON = "merton"
    KOU = "kou"
    VG = "vg"
    CGMY = "cgmy"


class Measure(str, enum.Enum):
    HISTORICAL = "historical"
    RISK_NEUTRAL = "risk_neutral"


# Required jump parameters per model.
JUMP_PARAMS = {
    ModelKind.GBM: (),
    ModelKind.MERTON: ("alpha", "mu_tilde", "sigma_tilde"),
    ModelKind.KOU: ("alpha", "p", "eta_plus", "eta_minus"),
    ModelKind.VG: ("mu_tilde", "sigma_tilde", "kappa"),
    ModelKind.CGMY: ("C", "G", "M", "Y"),
}


@dataclass(frozen=True)
class LevyModel:
    """A Levy log-price model ``X`` with ``S_t = S_0 exp(X_t)``.

    ``jump_params`` holds the model-specific record, e.g. for Kou
    ``{"alpha": 3, "p": 0.5, "eta_plus": 50, "eta_minus": 25}``.
    """

    kind: ModelKind
    sigma: float = 0.0
    jump_params: dict = field(default_factory=dict)
    drift: float = 0.0
    measure: Measure = Measure.HISTORICAL

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "measure", Measure(self.measure))
        object.__setattr__(self, "jump_params", {k: float(v) for k, v in self.jump_params.items()})
        need = set(JUMP_PARAMS[self.kind])
        have = set(self.jump_params)
        if need != have:
            raise ValueError(f"{self.kind.value} needs jump parameters {sorted(need)}, got {sorted(have)}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind is ModelKind.GBM and self.sigma <= 0:
            raise ValueError("GBM needs sigma > 0")
        jp = self.jump_params
        if self.kind is ModelKind.MERTON:
            if jp["alpha"] < 0 or jp["sigma_tilde"] <= 0:
                raise ValueError("Merton needs alpha >= 0 and sigma_tilde > 0")
        elif self.kind is ModelKind.KOU:
            if not 0.0 <= jp["p"] <= 1.0:
                raise ValueError("Kou needs p in [0, 1]")
            if jp["eta_plus"] <= 1.0 or jp["eta_minus"] <= 0.0 or jp["alpha"] < 0:
                raise ValueError("Kou needs eta_plus > 1, eta_minus > 0, alpha >= 0")
        elif self.kind is ModelKind.VG:
            if jp["sigma_tilde"] <= 0 or jp["kappa"] <= 0:
                raise ValueError("VG needs sigma_tilde > 0 and kappa > 0")
        elif self.kind is ModelKind.CGMY:
            if jp["C"] <= 0 or jp["G"] <= 0 or jp["M"] <= 1.0:
                raise ValueError("CGMY needs C > 0, G > 0, M > 1")
            if not jp["Y"] < 2.0:
                raise ValueError("CGMY needs Y < 2")
            if jp["Y"] in (0.0, 1.0):
                raise ValueError("CGMY with Y in {0, 1} needs the logarithmic limit form, not supported")

    def __hash__(self):
        return hash((self.kind, self.sigma, tuple(sorted(self.jump_params.items())), self.drift, self.measure))

    # -- constructors -----------------------------------------------------

    @classmethod
    def gbm(cls, sigma, drift=0.0):
        return cls(ModelKind.GBM, sigma, {}, drift)

    @classmethod
    def merton(cls, sigma, alpha, mu_tilde, sigma_tilde, drift=0.0):
        return cls(ModelKind.MERTON, sigma, dict(alpha=alpha, mu_tilde=mu_tilde, sigma_tilde=sigma_tilde), drift)

    @classmethod
    def kou(cls, sigma, alpha, p, eta_plus, eta_minus, drift=0.0):
        return cls(ModelKind.KOU, sigma, dict(alpha=alpha, p=p, eta_plus=eta_plus, eta_minus=eta_minus), drift)

    @classmethod
    def vg(cls, mu_tilde, sigma_tilde, kappa, sigma=0.0, drift=0.0):
        return cls(ModelKind.VG, sigma, dict(mu_tilde=mu_tilde, sigma_tilde=sigma_tilde, kappa=kappa), drift)

    @classmethod
    def cgmy(cls, C, G, M, Y, sigma=0.0, drift=0.0):
        return cls(ModelKind.CGMY, sigma, dict(C=C, G=G, M=M, Y=Y), drift)

    def historical(self, mu: float) -> "LevyModel":
        """Copy under the historical measure with log-price drift ``mu``."""
        return replace(self, drift=float(mu), measure=Measure.HISTORICAL)

    def risk_neutral(self, r: float, q: float) -> "LevyModel":
        """Copy under the pricing measure; drift from the martingale condition."""
        return replace(self, drift=risk_neutral_drift(self, r, q), measure=Measure.RISK_NEUTRAL)

    @property
    def has_jumps(self) -> bool:
        return self.kind is not ModelKind.GBM

    @property
    def finite_activity(self) -> bool:
        return self.kind in (ModelKind.GBM, ModelKind.MERTON, ModelKind.KOU)

    def strip(self) -> tuple[float, float]:
        """Open interval of ``Im(w)`` on which ``Psi(w)`` is finite."""
        jp = self.jump_params
        if self.kind is ModelKind.KOU:
            return -jp["eta_plus"], jp["eta_minus"]
        if self.kind is ModelKind.CGMY:
            return -jp["M"], jp["G"]
        if self.kind is ModelKind.VG:
            b1, b2 = vg_b(self)
            return -(b2 - b1), b1 + b2
        return -math.inf, math.inf

    def psi(self, omega):
        return characteristic_exponent(self, omega)


def vg_b(model: LevyModel) -> tuple[float, float]:
    jp = model.jump_params
    mu, s2, k = jp["mu_tilde"], jp["sigma_tilde"] ** 2, jp["kappa"]
    return mu / s2, math.sqrt(mu * mu + 2.0 * s2 / k) / s2


def jump_exponent(model: LevyModel, omega):
    """``int (e^{iwy} - 1) nu(dy)``; zero for GBM."""
    w = np.asarray(omega, dtype=complex)
    jp = model.jump_params
    kind = model.kind
    if kind is ModelKind.GBM:
        return np.zeros_like(w)
    if kind is ModelKind.MERTON:
        return jp["alpha"] * (np.exp(1j * jp["mu_tilde"] * w - 0.5 * jp["sigma_tilde"] ** 2 * w * w) - 1.0)
    if kind is ModelKind.KOU:
        p = jp["p"]
        return jp["alpha"] * (p / (1.0 - 1j * w / jp["eta_plus"]) + (1.0 - p) / (1.0 + 1j * w / jp["eta_minus"]) - 1.0)
    if kind is ModelKind.VG:
        k = jp["kappa"]
        return -np.log(1.0 - 1j * jp["mu_tilde"] * k * w + 0.5 * jp["sigma_tilde"] ** 2 * k * w * w) / k
    # CGMY
    C, G, M, Y = jp["C"], jp["G"], jp["M"], jp["Y"]
    return C * special.gamma(-Y) * ((M - 1j * w) ** Y - M**Y + (G + 1j * w) ** Y - G**Y)


def characteristic_exponent(model: LevyModel, omega):
    """Characteristic exponent ``Psi(w)`` with ``E[exp(iwX_t)] = exp(t Psi(w))``.

    Accepts scalars or arrays of complex frequencies. Raises ``DomainError`` if
    any ``Im(w)`` falls outside the strip of analyticity.
    """
    w = np.asarray(omega, dtype=complex)
    lo, hi = model.strip()
    im = w.imag
    if np.any(im <= lo) or np.any(im >= hi):
        raise DomainError(f"Im(omega) outside ({lo}, {hi}) for {model.kind.value}")
    out = 1j * model.drift * w - 0.5 * model.sigma**2 * w * w + jump_exponent(model, w)
    out = np.where(w == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def risk_neutral_drift(model: LevyModel, r: float, q: float) -> float:
    """Drift ``mu_hat`` such that ``Psi(-i) = r - q``."""
    lo, hi = model.strip()
    if not lo < -1.0:
        raise DomainError(f"E[exp(X_1)] is infinite for this {model.kind.value} parameter set")
    kj = jump_exponent(model, -1j)
    return float(r - q - 0.5 * model.sigma**2 - np.real(kj))


def levy_density(model: LevyModel, y):
    """Levy density ``nu(y)`` for ``y != 0``."""
    y = np.asarray(y, dtype=float)
    jp = model.jump_params
    kind = model.kind
    if kind is ModelKind.GBM:
        raise UnsupportedModelError("GBM has no jumps")
    if np.any(y == 0):
        raise ValueError("Levy density is evaluated at y != 0 only")
    if kind is ModelKind.MERTON:
        s = jp["sigma_tilde"]
        return jp["alpha"] / math.sqrt(2 * math.pi * s * s) * np.exp(-0.5 * ((y - jp["mu_tilde"]) / s) ** 2)
    if kind is ModelKind.KOU:
        a, p, ep, em = jp["alpha"], jp["p"], jp["eta_plus"], jp["eta_minus"]
        return a * np.where(y > 0, p * ep * np.exp(-ep * np.abs(y)), (1 - p) * em * np.exp(-em * np.abs(y)))
    if kind is ModelKind.VG:
        b1, b2 = vg_b(model)
        return np.exp(b1 * y - b2 * np.abs(y)) / (jp["kappa"] * np.abs(y))
    C, G, M, Y = jp["C"], jp["G"], jp["M"], jp["Y"]
    ay = np.abs(y)
    return C / ay ** (1 + Y) * np.where(y < 0, np.exp(-G * ay), np.exp(-M * ay))


def _upper_gamma(s: float, z):
    """Upper incomplete gamma ``Gamma(s, z)`` for any real ``s`` (``z > 0``)."""
    z = np.asarray(z, dtype=float)
    if s > 0:
        return special.gammaincc(s, z) * special.gamma(s)
    return (_upper_gamma(s + 1.0, z) - z**s * np.exp(-z)) / s


def levy_mass(model: LevyModel, lo, hi):
    """``nu((lo, hi))`` for intervals not containing 0, vectorised, closed form."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any((lo < 0) & (hi > 0)) or np.any(hi < lo):
        raise ValueError("intervals must satisfy lo <= hi and exclude 0")
    jp = model.jump_params
    kind = model.kind
    if kind is ModelKind.GBM:
        return np.zeros(np.broadcast(lo, hi).shape)
    if kind is ModelKind.MERTON:
        m, s = jp["mu_tilde"], jp["sigma_tilde"]
        zl, zh = (lo - m) / s, (hi - m) / s
        # difference of the smaller tail for accuracy far from the mean
        upper = special.ndtr(-zl) - special.ndtr(-zh)
        lower = special.ndtr(zh) - special.ndtr(zl)
        return jp["alpha"] * np.where(zl > 0, upper, lower)
    pos = lo >= 0
    a, b = np.abs(np.where(pos, lo, hi)), np.abs(np.where(pos, hi, lo))
    if kind is ModelKind.KOU:
        al, p, ep, em = jp["alpha"], jp["p"], jp["eta_plus"], jp["eta_minus"]
        return np.where(pos, al * p * (np.exp(-ep * a) - np.exp(-ep * b)),
                        al * (1 - p) * (np.exp(-em * a) - np.exp(-em * b)))
    if kind is ModelKind.VG:
        b1, b2 = vg_b(model)
        c = np.where(pos, b2 - b1, b2 + b1)
        with np.errstate(divide="ignore"):
            return (special.exp1(c * a) - special.exp1(c * b)) / jp["kappa"]
    C, G, M, Y = jp["C"], jp["G"], jp["M"], jp["Y"]
    rate = np.where(pos, M, G)
    with np.errstate(divide="ignore", invalid="ignore"):
        ua = _upper_gamma(-Y, rate * a)
        ub = np.where(np.isinf(b), 0.0, _upper_gamma(-Y, rate * np.where(np.isinf(b), 1.0, b)))
    return C * rate**Y * (ua - ub)


def small_jump_variance(model: LevyModel, eps: float) -> float:
    """``int_{|y| < eps} y^2 nu(dy)`` in closed form."""
    jp = model.jump_params
    if model.kind is ModelKind.VG:
        b1, b2 = vg_b(model)
        total = 0.0
        for c in (b2 - b1, b2 + b1):
            # int_0^eps y e^{-c y} dy / kappa
            total += special.gammainc(2.0, c * eps) / (c * c)
        return total / jp["kappa"]
    if model.kind is ModelKind.CGMY:
        C, G, M, Y = jp["C"], jp["G"], jp["M"], jp["Y"]
        s = 2.0 - Y
        return C * special.gamma(s) * (special.gammainc(s, M * eps) / M**s + special.gammainc(s, G * eps) / G**s)
    raise UnsupportedModelError("small-jump variance is only needed for infinite-activity models")


def variance_rate(model: LevyModel) -> float:
    """Variance of ``X_1``, i.e. ``-Psi''(0)``, by a central difference."""
    h = 1e-4
    f = lambda w: complex(np.asarray(characteristic_exponent(model, w)).ravel()[0])  # noqa: E731
    return float(-(f(h) - 2.0 * f(0.0) + f(-h)).real / (h * h))


TABLE3_MODELS = {
    "gbm": LevyModel.gbm(0.2),
    "merton": LevyModel.merton(0.2, alpha=3.0, mu_tilde=0.02, sigma_tilde=0.045),
    "kou": LevyModel.kou(0.2, alpha=3.0, p=0.5, eta_plus=50.0, eta_minus=25.0),
    "vg": LevyModel.vg(mu_tilde=-0.22, sigma_tilde=0.2, kappa=0.5),
    "cgmy": LevyModel.cgmy(C=1.1, G=10.0, M=10.0, Y=0.6),
}


def model_from_dict(d: dict) -> LevyModel:
    """Build a model from a flat mapping such as a config section."""
    d = dict(d)
    kind = ModelKind(str(d.pop("kind")).lower())
    sigma = float(d.pop("sigma", 0.0))
    drift = float(d.pop("drift", 0.0))
    jp = {k: float(d.pop(k)) for k in JUMP_PARAMS[kind] if k in d}
    if d:
        raise ValueError(f"unknown model keys: {sorted(d)}")
    return LevyModel(kind, sigma, jp, drift)
