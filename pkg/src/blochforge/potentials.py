"""Periodic potentials on the canonical cell, as named families or Fourier tables.

Named families:

* ``zero`` -- V = 0.
* ``cosine`` -- amplitude * sum_i cos(x_i).
* ``smoothed_square_2d`` -- V(x) = 1 + 4.35 W(x1) W(x2) with
  W(s) = [tanh(7(s + 3 pi/5)) + tanh(7(3 pi/5 - s))]/2, a square plateau
  with smoothed edges, the standard 2D test potential here.
* ``sin2_1d`` -- the 1D lattice sin^2(pi x / 10).  Its natural cell has
  width 20 (two lattice periods, so both periodic and antiperiodic Bloch
  waves live on it); the change of variables x = (10/pi) y maps that cell
  onto (-pi, pi] and multiplies the eigenvalue problem by
  SIN2_SCALE = (10/pi)^2.  With ``rescaled=True`` (default) the sampled
  field is SIN2_SCALE * sin^2(y), the potential of the rescaled problem,
  and eigenvalues convert back through omega_native = omega / SIN2_SCALE.
  With ``rescaled=False`` the plain composition sin^2(y) is returned.

A spec may instead carry an explicit Fourier coefficient table
{m: c_m}; sampling then goes through the inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridError, TorusGrid

#: (10/pi)^2, the eigenvalue scale factor between the native sin^2(pi x/10)
#: problem on its width-20 cell and the rescaled problem on (-pi, pi].
SIN2_SCALE = (10.0 / np.pi) ** 2

#: Native width of the sin2_1d cell (two periods of the period-10 lattice).
SIN2_NATIVE_WIDTH = 20.0

_FAMILIES = ("zero", "cosine", "smoothed_square_2d", "sin2_1d")


def smoothing_profile(s):
    """The tanh edge profile W(s) of the smoothed square potential."""
    a = 3.0 * np.pi / 5.0
    return 0.5 * (np.tanh(7.0 * (s + a)) + np.tanh(7.0 * (a - s)))


def sin2_native(x):
    """The 1D lattice sin^2(pi x / 10) in native coordinates."""
    return np.sin(np.pi * np.asarray(x, dtype=float) / 10.0) ** 2


def omega_native(omega_rescaled: float) -> float:
    """Convert a sin2_1d eigenvalue from the rescaled cell to native units."""
    return omega_rescaled / SIN2_SCALE


def omega_rescaled(omega_native: float) -> float:
    return omega_native * SIN2_SCALE


@dataclass(frozen=True)
class PotentialSpec:
    """A periodic potential: a named family with parameters, or a Fourier table.

    ``dim`` is None for families valid in any dimension (zero, cosine).
    """

    family: str | None = None
    params: dict = field(default_factory=dict)
    fourier_table: dict | None = None

    def __post_init__(self):
        if (self.family is None) == (self.fourier_table is None):
            raise ValueError("specify exactly one of family or fourier_table")
        if self.family is not None and self.family not in _FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")

    @property
    def dim(self) -> int | None:
        if self.fourier_table is not None:
            return len(next(iter(self.fourier_table)))
        return {"sin2_1d": 1, "smoothed_square_2d": 2}.get(self.family)

    def label(self) -> str:
        if self.fourier_table is not None:
            return "fourier_table"
        if self.params:
            inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
            return f"{self.family}({inner})"
        return self.family


def _evaluate_family(spec: PotentialSpec, points: tuple) -> np.ndarray:
    if spec.family == "zero":
        return np.zeros_like(points[0])
    if spec.family == "cosine":
        amp = float(spec.params.get("amplitude", 1.0))
        out = np.zeros_like(points[0])
        for x in points:
            out = out + np.cos(x)
        return amp * out
    if spec.family == "smoothed_square_2d":
        return 1.0 + 4.35 * smoothing_profile(points[0]) * smoothing_profile(points[1])
    if spec.family == "sin2_1d":
        vals = np.sin(points[0]) ** 2
        if spec.params.get("rescaled", True):
            vals = SIN2_SCALE * vals
        return vals
    raise AssertionError(spec.family)


def sample_potential(spec: PotentialSpec, grid: TorusGrid) -> np.ndarray:
    """Evaluate the potential at the grid points; always a real array.

    Raises GridError on dimension mismatch.  Named families are checked for
    2pi-periodicity at the cell endpoints (formula value at -pi versus +pi).
    """
    if spec.dim is not None and spec.dim != grid.dim:
        raise GridError(
            f"potential is {spec.dim}-dimensional but grid is {grid.dim}-dimensional"
        )
    if spec.fourier_table is not None:
        coeffs = np.zeros(grid.shape, dtype=complex)
        ms = [np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int) for _ in range(grid.dim)]
        index = {int(m): i for i, m in enumerate(ms[0])}
        for m, c in spec.fourier_table.items():
            m = (m,) if np.isscalar(m) else tuple(int(mi) for mi in m)
            if len(m) != grid.dim:
                raise GridError("Fourier table entry dimension does not match grid")
            try:
                idx = tuple(index[mi] for mi in m)
            except KeyError:
                raise GridError(f"mode {m} not representable on an n={grid.n} grid")
            coeffs[idx] = c
        vals = grid.from_coeffs(coeffs)
        if np.max(np.abs(vals.imag)) > 1e-10 * max(1.0, np.max(np.abs(vals.real))):
            raise ValueError("Fourier table does not define a real potential")
        return vals.real

    pts = grid.points()
    vals = _evaluate_family(spec, pts)
    _check_endpoint_periodicity(spec)
    return np.asarray(vals, dtype=float)


def _check_endpoint_periodicity(spec: PotentialSpec, tol: float = 1e-10):
    d = spec.dim or 1
    probes = np.array([-np.pi, 0.3, -1.1][: 1 if d == 1 else 3])
    for axis in range(d):
        for t in probes:
            lo = [t] * d
            hi = [t] * d
            lo[axis] = -np.pi
            hi[axis] = np.pi
            v_lo = _evaluate_family(spec, tuple(np.array([c]) for c in lo))
            v_hi = _evaluate_family(spec, tuple(np.array([c]) for c in hi))
            if abs(float(v_lo[0]) - float(v_hi[0])) > tol:
                raise ValueError(
                    f"potential {spec.label()} is not 2pi-periodic in axis {axis}"
                )
