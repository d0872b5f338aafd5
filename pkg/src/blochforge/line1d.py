"""Localized 1D solutions on a large interval: gap solitons, truncated
nonlinear Bloch waves, heteroclinics, and their continuation across gap
edges.

Everything here works in native units with the lattice V(x) = sin^2(pi x/10)
on (-L, L), L = 100 by default, second-order finite differences with Neumann
ends, and real unknowns (the families studied are real).  Newton uses banded
direct solves; continuation augments the tridiagonal Jacobian with the
arclength border and factors the sparse bordered matrix, which stays
invertible through folds.

The tail of a delocalized solution is certified against a periodic nonlinear
Bloch wave by tail_match, which evaluates the (rescaled-cell) wave at native
coordinates through its Fourier coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .nlb import Branch, NewtonFailure, NlbState, StepControls, ZeroSolution
from .potentials import SIN2_SCALE, sin2_native


@dataclass(frozen=True)
class LineGrid:
    """Uniform grid on [-L, L] including both endpoints (Neumann closure)."""

    half_width: float = 100.0
    n: int = 4096

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)


@dataclass(frozen=True)
class LineProfile:
    """A real solution candidate phi(x) at one (omega, sigma)."""

    grid: LineGrid
    values: np.ndarray
    omega: float
    sigma: int
    newton_iterations: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.shape != (self.grid.n,):
            raise ValueError("profile length does not match grid")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.trapezoid(self.values**2, dx=self.grid.h)))

    def neumann_defect(self) -> float:
        v, h = self.values, self.grid.h
        return float(max(abs(v[1] - v[0]), abs(v[-1] - v[-2])) / h)

    def evenness_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values[::-1])))


def sech_guess(
    a: float, w: float, grid: LineGrid, omega: float = 0.5, sigma: int = 1
) -> LineProfile:
    """The broad single-hump guess a * sech(x^2 / w) (defaults a=0.5, w=50
    feed the omega=0.5 Newton loop).  Evaluated overflow-safely."""
    z = np.abs(grid.x**2 / w)
    vals = a * 2.0 * np.exp(-z) / (1.0 + np.exp(-2.0 * z))
    return LineProfile(grid=grid, values=vals, omega=omega, sigma=sigma)


def modulated_guess(
    a: float,
    w: float,
    grid: LineGrid,
    omega: float,
    sigma: int = 1,
    wavenumber: float = 0.0,
) -> LineProfile:
    """sech(x/w) envelope times cos(wavenumber * x); with wavenumber pi/10
    this alternates well signs and seeds edge-Bloch-shaped states."""
    z = np.abs(grid.x / w)
    env = 2.0 * np.exp(-z) / (1.0 + np.exp(-2.0 * z))
    vals = a * env * (np.cos(wavenumber * grid.x) if wavenumber else 1.0)
    return LineProfile(grid=grid, values=vals, omega=omega, sigma=sigma)


def _sample_potential(V, grid: LineGrid) -> np.ndarray:
    return np.asarray(V(grid.x), dtype=float)


def _residual(vals, om, sig, Vx, h):
    lap = np.empty_like(vals)
    lap[1:-1] = (vals[:-2] - 2 * vals[1:-1] + vals[2:]) / h**2
    lap[0] = 2 * (vals[1] - vals[0]) / h**2
    lap[-1] = 2 * (vals[-2] - vals[-1]) / h**2
    return om * vals + lap - Vx * vals - sig * vals**3


def _jacobian(vals, om, sig, Vx, h) -> sp.csc_matrix:
    n = vals.size
    main = om - Vx - 3 * sig * vals**2 - 2 / h**2
    up = np.full(n - 1, 1 / h**2)
    lo = np.full(n - 1, 1 / h**2)
    up[0] = 2 / h**2  # Neumann mirror couples the end point doubly
    lo[-1] = 2 / h**2
    return sp.diags([lo, main, up], [-1, 0, 1], format="csc")


def residual_norm(profile: LineProfile, V=sin2_native) -> float:
    Vx = _sample_potential(V, profile.grid)
    F = _residual(profile.values, profile.omega, profile.sigma, Vx, profile.grid.h)
    return float(np.sqrt(profile.grid.h) * np.linalg.norm(F))


def solve_line(
    V,
    omega: float,
    sigma: int,
    guess: LineProfile,
    tol: float = 1e-10,
    max_iter: int = 80,
) -> LineProfile:
    """Damped Newton for the real stationary equation at fixed omega.

    Raises NewtonFailure on stagnation and ZeroSolution when the iterate
    collapses onto the trivial branch.
    """
    grid = guess.grid
    Vx = _sample_potential(V, grid)
    h = grid.h
    vals = np.asarray(guess.values, dtype=float).copy()
    guess_norm = np.sqrt(h) * np.linalg.norm(vals)
    for it in range(max_iter + 1):
        F = _residual(vals, omega, sigma, Vx, h)
        rn = np.sqrt(h) * np.linalg.norm(F)
        nrm = np.sqrt(h) * np.linalg.norm(vals)
        if rn <= tol * (1.0 + nrm**3):
            if guess_norm > 0 and nrm <= 1e-3 * guess_norm:
                raise ZeroSolution("Newton converged to the zero solution")
            return LineProfile(
                grid=grid, values=vals, omega=omega, sigma=sigma, newton_iterations=it
            )
        if it == max_iter:
            break
        step = spla.spsolve(_jacobian(vals, omega, sigma, Vx, h), -F)
        t = 1.0
        while t > 1e-4:
            trial = vals + t * step
            if np.linalg.norm(
                _residual(trial, omega, sigma, Vx, h)
            ) <= (1 - 0.25 * t) * np.linalg.norm(F):
                vals = trial
                break
            t *= 0.5
        else:
            raise NewtonFailure(f"line search stalled at residual {rn:.3e}")
    raise NewtonFailure(f"no convergence in {max_iter} iterations")


@dataclass
class LineBranch(Branch):
    """Branch of line profiles; band_entries records (arclength, omega,
    'enter'|'exit') transitions across the supplied spectral edges."""

    band_entries: list = field(default_factory=list)


def _in_band(omega: float, edges) -> bool:
    for lo, hi in zip(edges[0::2], edges[1::2]):
        if lo <= omega <= hi:
            return True
    return False


def continue_line(
    seed: LineProfile,
    direction: int,
    controls: StepControls | None = None,
    V=sin2_native,
    edges=None,
) -> LineBranch:
    """Pseudo-arclength continuation of a line profile in omega.

    The corrector solves the bordered sparse system (tridiagonal Jacobian
    plus the omega column and the arclength row) by direct LU, so folds are
    passed; fold locations are recorded from tangent omega-sign changes.
    """
    ct = controls or StepControls()
    grid = seed.grid
    Vx = _sample_potential(V, grid)
    h = grid.h
    sigma = seed.sigma

    def tangent(vals, om, prev=None):
        J = _jacobian(vals, om, sigma, Vx, h)
        if prev is None:
            prev = (np.zeros(grid.n), 1.0)
        A = sp.bmat(
            [
                [J, sp.csc_matrix(vals[:, None])],
                [sp.csc_matrix(h * prev[0][None, :]), sp.csc_matrix([[prev[1]]])],
            ],
            format="csc",
        )
        rhs = np.zeros(grid.n + 1)
        rhs[-1] = 1.0
        t = spla.splu(A).solve(rhs)
        nrm = np.sqrt(h * np.dot(t[:-1], t[:-1]) + t[-1] ** 2)
        if not np.isfinite(nrm) or nrm == 0:
            raise NewtonFailure("degenerate tangent")
        return t[:-1] / nrm, float(t[-1] / nrm)

    def corrector(vals, om, pred_vals, pred_om, tu, tom):
        for it in range(25):
            F = _residual(vals, om, sigma, Vx, h)
            arc = h * np.dot(tu, vals - pred_vals) + tom * (om - pred_om)
            nrm = np.sqrt(h) * np.linalg.norm(vals)
            rn = np.sqrt(h * np.dot(F, F) + arc**2)
            if rn <= ct.newton_tol * (1.0 + nrm**3):
                return vals, om, it
            J = _jacobian(vals, om, sigma, Vx, h)
            A = sp.bmat(
                [
                    [J, sp.csc_matrix(vals[:, None])],
                    [sp.csc_matrix(h * tu[None, :]), sp.csc_matrix([[tom]])],
                ],
                format="csc",
            )
            dl = spla.splu(A).solve(np.concatenate([-F, [-arc]]))
            vals = vals + dl[:-1]
            om = om + dl[-1]
        raise NewtonFailure("corrector did not converge")

    branch = LineBranch(direction=+1 if direction >= 0 else -1)
    vals, om = np.asarray(seed.values, float).copy(), seed.omega
    arclength = 0.0
    branch.points.append(_line_point(grid, vals, om, sigma, arclength))
    tu, tom = tangent(vals, om)
    if tom * branch.direction < 0:
        tu, tom = -tu, -tom
    inside = _in_band(om, edges) if edges is not None else None
    ds = ct.ds
    step = 0
    while step < ct.max_steps:
        step += 1
        try:
            new_vals, new_om, iters = corrector(
                vals + ds * tu, om + ds * tom, vals + ds * tu, om + ds * tom, tu, tom
            )
        except NewtonFailure:
            ds *= 0.5
            if ds < ct.ds_min:
                branch.status = "newton-failed"
                return branch
            step -= 1
            continue
        arclength += ds
        branch.points.append(_line_point(grid, new_vals, new_om, sigma, arclength))
        try:
            ntu, ntom = tangent(new_vals, new_om, prev=(tu, tom))
        except NewtonFailure:
            branch.status = "newton-failed"
            return branch
        if h * np.dot(ntu, tu) + ntom * tom < 0:
            ntu, ntom = -ntu, -ntom
        if ntom * tom < 0:
            branch.folds.append((arclength, new_om))
            if ct.stop_at_fold:
                branch.status = "fold-detected"
                vals, om = new_vals, new_om
                return branch
        if edges is not None:
            now_inside = _in_band(new_om, edges)
            if now_inside != inside:
                branch.band_entries.append(
                    (arclength, new_om, "enter" if now_inside else "exit")
                )
                inside = now_inside
        vals, om, tu, tom = new_vals, new_om, ntu, ntom
        if not (ct.omega_min <= om <= ct.omega_max):
            return branch
        if iters <= 3:
            ds = min(ds * 1.3, ct.ds_max)
    branch.status = "max-steps"
    return branch


def _line_point(grid, vals, om, sigma, arclength):
    from .nlb import BranchPoint

    prof = LineProfile(grid=grid, values=vals, omega=om, sigma=sigma)
    return BranchPoint(omega=om, state=prof, norm=prof.l2_norm(), arclength=arclength)


def nlb_line_values(state: NlbState, x) -> np.ndarray:
    """Evaluate a (rescaled-cell) nonlinear Bloch wave at native coordinates.

    The state lives on the canonical cell for the sin^2 lattice; native x
    maps to y = pi x / 10 and amplitudes scale by 1/sqrt(SIN2_SCALE).
    Evaluation goes through the Fourier coefficients, so x is arbitrary.
    """
    x = np.asarray(x, dtype=float)
    y = (np.pi / 10.0) * x
    grid = state.grid
    ms = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    out = np.zeros(x.shape, dtype=complex)
    for kvec, fld in zip(state.problem.k_list(), state.fields):
        coeffs = grid.to_coeffs(np.asarray(fld))
        out += np.exp(1j * np.outer(y, ms + float(kvec[0]))).dot(coeffs)
    return out.real / np.sqrt(SIN2_SCALE)


def native_omega_of_state(state: NlbState) -> float:
    return state.omega / SIN2_SCALE


def tail_match(
    profile: LineProfile,
    nlb_state: NlbState,
    window: tuple,
    period: float = 10.0,
) -> float:
    """Sup-norm distance between the profile tail and the tiled nonlinear
    Bloch wave over window = (x0, x1), minimized over lattice translations
    {0, period} and the overall sign.  A small value certifies the
    homoclinic-to-NLB structure.  Raises ValueError when the wave was not
    computed at the profile's frequency.
    """
    om_native = native_omega_of_state(nlb_state)
    if abs(om_native - profile.omega) > 1e-6 * (1 + abs(profile.omega)):
        raise ValueError(
            f"no NLB available at omega={profile.omega}; state is at {om_native}"
        )
    x = profile.grid.x
    mask = (x >= window[0]) & (x <= window[1])
    if not np.any(mask):
        raise ValueError("empty tail window")
    best = np.inf
    for sign in (1.0, -1.0):
        for tau in (0.0, period):
            ref = sign * nlb_line_values(nlb_state, x[mask] - tau)
            best = min(best, float(np.max(np.abs(profile.values[mask] - ref))))
    return best


def profile_to_csv(profile: LineProfile) -> str:
    lines = ["x,phi"]
    for xi, vi in zip(profile.grid.x, profile.values):
        lines.append(f"{xi!r},{vi!r}")
    return "\n".join(lines) + "\n"
