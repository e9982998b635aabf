"""Log-price grid and the DFT pair shared by the Fourier time-steppers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SpectralResidueError(RuntimeError):
    """Inverse transform left an imaginary part too large for a real field."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``x_n = -x_max + n dx`` with ``N`` nodes and ``M`` time steps."""

    x_max: float = 6.0
    N: int = 16384
    M: int = 1024

    def __post_init__(self):
        N = int(self.N)
        if N < 2 or N & (N - 1):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if int(self.M) < 1:
            raise ValueError("M must be >= 1")
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "M", int(self.M))

    @property
    def x_min(self) -> float:
        return -self.x_max

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / (self.N - 1)

    @property
    def omega_max(self) -> float:
        return math.pi / self.dx

    @property
    def d_omega(self) -> float:
        return 2.0 * self.omega_max / self.N

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.N)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.x_max, self.N * factor, self.M * factor)


@dataclass(frozen=True)
class SpectralVector:
    """Spectrum on the frequency nodes of ``grid`` (index order of ``frequency_nodes``)."""

    values: np.ndarray
    grid: GridSpec

    @property
    def omega(self) -> np.ndarray:
        return frequency_nodes(self.grid)


def frequency_nodes(grid: GridSpec) -> np.ndarray:
    """Signed angular frequencies matching the FFT index order.

    Index ``N/2`` holds the Nyquist node, reported as ``+omega_max``.
    """
    N = grid.N
    k = np.fft.fftfreq(N, d=1.0 / N)
    k[N // 2] = N // 2
    return k * grid.d_omega


def nyquist_symmetric(multiplier: np.ndarray) -> np.ndarray:
    """Replace the Nyquist entry of a conjugate-symmetric multiplier by its real part.

    ``H(+w_max)`` and ``H(-w_max)`` share one DFT bin; their average is the real part.
    """
    out = np.array(multiplier, dtype=complex, copy=True)
    n = out.shape[-1] // 2
    out[..., n] = out[..., n].real
    return out


def symbol(grid: GridSpec, fn) -> np.ndarray:
    """Evaluate ``fn`` on the frequency nodes and make it Nyquist-consistent."""
    return nyquist_symmetric(fn(frequency_nodes(grid)))


def exp_filter(grid: GridSpec, order: int = 8, strength: float = 36.0) -> np.ndarray:
    """Exponential spectral filter ``exp(-strength (|w|/w_max)^order)``.

    Applied once per time step; pure-jump kernels (VG) are not resolved by the
    grid over one short step and ring without it.
    """
    eta = np.abs(frequency_nodes(grid)) / grid.omega_max
    return np.exp(-strength * eta**order)


def forward(values, grid: GridSpec) -> SpectralVector:
    """``V_n = sum_k v_k exp(-2 pi i n k / N)``; the ``dx`` phase factor is omitted."""
    v = np.asarray(values)
    if v.shape[-1] != grid.N:
        raise ValueError(f"expected length {grid.N}, got {v.shape[-1]}")
    return SpectralVector(np.fft.fft(v), grid)


def inverse(spectrum: SpectralVector | np.ndarray, grid: GridSpec, *, rtol: float = 1e-8) -> np.ndarray:
    """Inverse of ``forward``; returns the real part after a residue check.

    The imaginary residue must stay below ``rtol * max(1, max|v|)``.
    """
    V = spectrum.values if isinstance(spectrum, SpectralVector) else np.asarray(spectrum)
    if V.shape[-1] != grid.N:
        raise ValueError(f"expected length {grid.N}, got {V.shape[-1]}")
    v = np.fft.ifft(V)
    return _real(v, rtol)


def _real(v: np.ndarray, rtol: float) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(v.real), initial=0.0)))
    resid = float(np.max(np.abs(v.imag), initial=0.0))
    if resid > rtol * scale:
        raise SpectralResidueError(f"imaginary residue {resid:.3e} exceeds {rtol:.1e} x {scale:.3e}")
    return v.real.copy()


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray, *, rtol: float = 1e-8) -> np.ndarray:
    """Real-space result of multiplying the spectrum of ``values`` by ``multiplier``."""
    return _real(np.fft.ifft(np.fft.fft(values) * multiplier), rtol)


def phi1(z, dt: float):
    """``(exp(z dt) - 1) / z`` with the removable singularity at ``z = 0``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z * dt) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, dt * (1.0 + 0.5 * z * dt), np.expm1(z * dt) / safe)
