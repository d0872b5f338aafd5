"""Uniform torus grids and spectral primitives on the periodicity cell.

Everything downstream (band structure, coupled mode coefficients, wave
continuation) lives on the canonical cell P = (-pi, pi]^d with a uniform
grid of n points per dimension.  Fields are stored as plain ndarrays of
shape (n,)*d; Fourier coefficients use the numpy fftfreq ordering of
integer wave vectors m.  The rectangle rule is spectrally accurate for
periodic integrands, so it is the only quadrature used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class GridError(ValueError):
    """Raised for mismatched or invalid grid usage."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the cell P = (-pi, pi]^d, n points per dimension.

    Grid points are x_i = -pi + i*h with h = 2*pi/n; x_0 = -pi is the same
    torus point as +pi, so the cell is covered exactly once.  n must be a
    power of two.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"n must be a power of two >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def axis(self) -> np.ndarray:
        """1D coordinate axis -pi + i*h, i = 0..n-1."""
        return -np.pi + self.h * np.arange(self.n)

    def points(self) -> tuple:
        """Coordinate arrays, one per dimension, broadcast to the grid shape."""
        ax = self.axis()
        if self.dim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, indexing="ij"))

    def wavenumbers(self) -> tuple:
        """Integer wave vectors per dimension (fftfreq ordering), broadcastable."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        if self.dim == 1:
            return (m,)
        return (m[:, None], m[None, :])

    def _coeff_phase(self) -> np.ndarray:
        # grid starts at -pi, so plain fft picks up a factor (-1)^m per axis
        m = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)
        ph = np.where(m % 2 == 0, 1.0, -1.0)
        if self.dim == 1:
            return ph
        return ph[:, None] * ph[None, :]

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients f_m w.r.t. the basis e^{i m.x}, fftfreq order."""
        if values.shape != self.shape:
            raise GridError("field shape does not match grid")
        return np.fft.fftn(values) * (self._coeff_phase() / self.size)

    def from_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of to_coeffs: synthesize grid values from coefficients."""
        if coeffs.shape != self.shape:
            raise GridError("coefficient shape does not match grid")
        return np.fft.ifftn(coeffs * self._coeff_phase()) * self.size

    def integrate(self, values: np.ndarray) -> complex:
        """Rectangle rule over the cell (exact for band-limited integrands)."""
        return complex(values.sum() * self.h**self.dim)

    def laplacian_symbol(self) -> np.ndarray:
        """-|m|^2 multiplier array in Fourier (fftfreq) ordering."""
        ms = self.wavenumbers()
        out = np.zeros(self.shape)
        for m in ms:
            out = out - m**2
        return out


@dataclass(frozen=True)
class ComplexField:
    """A complex field over a TorusGrid, optionally tagged with quasimomentum k.

    When tagged, the stored values are the periodic factor p(x) of a
    quasi-periodic function xi(x) = p(x) e^{i k.x}.
    """

    grid: TorusGrid
    values: np.ndarray
    k: tuple | None = None
    _frozen: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise GridError(
                f"value array shape {vals.shape} does not match grid {self.grid.shape}"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.k is not None:
            k = tuple(float(c) for c in self.k)
            if len(k) != self.grid.dim:
                raise GridError("quasimomentum dimension does not match grid")
            object.__setattr__(self, "k", k)

    def k_vector(self) -> np.ndarray:
        return np.zeros(self.grid.dim) if self.k is None else np.asarray(self.k)

    def coeffs(self) -> np.ndarray:
        return self.grid.to_coeffs(self.values)


def inner_product(f: ComplexField, g: ComplexField) -> complex:
    """L^2(P) inner product <f, g> = integral of f * conj(g) by rectangle rule."""
    if f.grid != g.grid:
        raise GridError("inner_product requires fields on the same grid")
    return f.grid.integrate(f.values * np.conj(g.values))


def l2_norm(f: ComplexField) -> float:
    return float(np.sqrt(max(inner_product(f, f).real, 0.0)))


def sobolev_norm(f: ComplexField, s: float) -> float:
    """H^s(P) norm via Fourier weights (1 + |m + k|^2)^s.

    k is the field's quasimomentum tag (zero if untagged), so for a tagged
    field this is the H^s norm of the quasi-periodic function p(x) e^{i k.x}.
    """
    if s < 0:
        raise ValueError("sobolev_norm requires s >= 0")
    c = f.coeffs()
    k = f.k_vector()
    ms = f.grid.wavenumbers()
    w = np.ones(f.grid.shape)
    for ki, m in zip(k, ms):
        w = w + (m + ki) ** 2
    total = float(np.sum(w**s * np.abs(c) ** 2)) * TWO_PI**f.grid.dim
    return float(np.sqrt(total))
