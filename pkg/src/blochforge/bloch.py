"""Bloch eigenvalue problem, band structures, level sets, phase conventions.

The eigenproblem for the periodic factor p of xi(x) = p(x) e^{i k.x} is

    (-(grad + i k)^2 + V) p = omega p      on P = (-pi, pi]^d,

solved by a plane-wave Galerkin matrix (dense, modes |m_i| <= cutoff) whose
eigenvectors seed a preconditioned LOBPCG iteration on the full grid
operator.  After refinement each returned eigenpair satisfies the grid
eigenproblem to ~1e-11, so downstream Newton solves on the same grid see a
numerically exact linear mode.

Phase convention (fix_phase): at high-symmetry k (components in {0, 1/2})
eigenfunctions are rotated real with positive cell mean; elsewhere the value
at x = 0 is made real positive.  Conjugation then realizes the k -> -k
symmetry exactly (conjugate_mode).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .grid import ComplexField, GridError, TorusGrid
from .potentials import PotentialSpec, sample_potential

#: Dense Galerkin is used up to this many plane-wave unknowns.
DENSE_LIMIT = 2500

#: Relative tolerance defining a degenerate eigenvalue cluster at one k.
CLUSTER_RTOL = 1e-7

_HIGH_SYM_VALUES = (0.0, 0.5)


class BlochError(RuntimeError):
    pass


def reduce_k(k) -> tuple:
    """Map a k vector componentwise into (-1/2, 1/2], with -1/2 -> +1/2."""
    out = []
    for c in np.atleast_1d(np.asarray(k, dtype=float)):
        r = c - np.floor(c + 0.5)
        if abs(r + 0.5) < 1e-12:
            r = 0.5
        out.append(float(r))
    return tuple(out)


def is_high_symmetry(k, tol: float = 1e-12) -> bool:
    return all(any(abs(c - v) < tol for v in _HIGH_SYM_VALUES) for c in k)


@dataclass(frozen=True)
class BlochMode:
    """One eigenpair of the Bloch problem: quasimomentum k, band index n
    (1-based), eigenvalue omega, and the normalized periodic factor p
    (so ||xi||_{L^2(P)} = ||p||_{L^2(P)} = 1)."""

    k: tuple
    n: int
    omega: float
    p: ComplexField
    residual: float
    multiplicity: int = 1

    @property
    def grid(self) -> TorusGrid:
        return self.p.grid

    def xi(self) -> np.ndarray:
        """Values of the Bloch wave xi = p e^{i k.x} on the grid."""
        return self.p.values * plane_wave(self.grid, self.k)


def plane_wave(grid: TorusGrid, k) -> np.ndarray:
    """e^{i k.x} sampled on the grid (k need not be integer)."""
    pts = grid.points()
    phase = np.zeros(grid.shape)
    for ki, x in zip(np.atleast_1d(np.asarray(k, float)), pts):
        phase = phase + ki * x
    return np.exp(1j * phase)


def shifted_laplacian_symbol(grid: TorusGrid, k) -> np.ndarray:
    """|m + k|^2 multiplier array (the kinetic symbol for the factor p)."""
    ms = grid.wavenumbers()
    out = np.zeros(grid.shape)
    for ki, m in zip(np.atleast_1d(np.asarray(k, float)), ms):
        out = out + (m + ki) ** 2
    return out


def grid_operator(V: np.ndarray, grid: TorusGrid, k):
    """Matrix-free apply of (-(grad+ik)^2 + V) on periodic grid fields."""
    sym = shifted_laplacian_symbol(grid, k)

    def apply(p: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(sym * np.fft.fftn(p)) + V * p

    return apply, sym


def _potential_coeff_lookup(potential: PotentialSpec, grid: TorusGrid, max_shift: int):
    """Fourier coefficients of V usable for shifts |dm| <= max_shift without
    aliasing: sampled on an internal grid fine enough for the named families."""
    n_fine = grid.n
    while n_fine < 4 * max_shift and n_fine < 1024:
        n_fine *= 2
    fine = TorusGrid(grid.dim, n_fine)
    Vc = fine.to_coeffs(sample_potential(potential, fine).astype(complex))

    def lookup(dm: np.ndarray) -> np.ndarray:
        idx = tuple(dm[..., i] % n_fine for i in range(grid.dim))
        return Vc[idx]

    return lookup


def _galerkin_modes(dim: int, Q: int) -> np.ndarray:
    ms = np.arange(-Q, Q + 1)
    if dim == 1:
        return ms[:, None]
    M1, M2 = np.meshgrid(ms, ms, indexing="ij")
    return np.stack([M1.ravel(), M2.ravel()], axis=1)


def default_cutoff(dim: int) -> int:
    return 32 if dim == 1 else 12


def _galerkin_eigs(potential, grid, k, n_want, Q):
    ml = _galerkin_modes(grid.dim, Q)
    P = ml.shape[0]
    if P > DENSE_LIMIT:
        raise BlochError(
            f"Galerkin cutoff {Q} gives {P} unknowns > dense limit {DENSE_LIMIT}; "
            "lower the cutoff and rely on grid refinement"
        )
    if n_want > P // 2:
        raise BlochError(f"n_bands={n_want} too large for cutoff {Q} ({P} modes)")
    lookup = _potential_coeff_lookup(potential, grid, max_shift=2 * Q)
    kin = np.zeros(P)
    kv = np.atleast_1d(np.asarray(k, float))
    for i in range(grid.dim):
        kin = kin + (ml[:, i] + kv[i]) ** 2
    H = lookup(ml[:, None, :] - ml[None, :, :])
    H = H + np.diag(kin)
    w, v = np.linalg.eigh(H)
    return w[:n_want], v[:, :n_want], ml


def _embed_coeffs(vec: np.ndarray, ml: np.ndarray, grid: TorusGrid) -> np.ndarray:
    c = np.zeros(grid.shape, dtype=complex)
    idx = tuple(ml[:, i] % grid.n for i in range(grid.dim))
    c[idx] = vec
    return grid.from_coeffs(c)


def _refine_on_grid(V, grid, k, omega0, X0, tol):
    """Preconditioned LOBPCG on the full grid operator, seeded by Galerkin
    eigenvectors (columns of X0).  Returns sorted (omega, fields)."""
    apply_op, sym = grid_operator(V, grid, k)
    N = grid.size
    A = LinearOperator(
        (N, N),
        matvec=lambda u: apply_op(u.reshape(grid.shape)).ravel(),
        dtype=complex,
    )
    pc = 1.0 / (sym + 1.0 + float(V.max()) - float(V.min()))
    M = LinearOperator(
        (N, N),
        matvec=lambda u: np.fft.ifftn(pc * np.fft.fftn(u.reshape(grid.shape))).ravel(),
        dtype=complex,
    )
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Exited postprocessing")
        w, X = lobpcg(A, X0, M=M, largest=False, tol=tol, maxiter=300)
    order = np.argsort(w)
    return w[order], X[:, order], apply_op


def solve_bloch(
    potential: PotentialSpec,
    grid: TorusGrid,
    k,
    n_bands: int,
    cutoff: int | None = None,
    refine: bool = True,
    tol: float = 1e-10,
) -> list:
    """Lowest n_bands eigenpairs at quasimomentum k, sorted ascending,
    normalized and phase-fixed.

    Raises BlochError if the refinement does not reach the residual
    tolerance 1e-8 (1 + |omega|) demanded of every returned mode.
    """
    k = reduce_k(k)
    if len(k) != grid.dim:
        raise GridError("k dimension does not match grid")
    if n_bands < 1:
        raise ValueError("n_bands must be >= 1")
    Q = default_cutoff(grid.dim) if cutoff is None else int(cutoff)
    extra = min(4, max(1, n_bands // 2)) if refine else 0
    w, v, ml = _galerkin_eigs(potential, grid, k, n_bands + extra, Q)

    V = sample_potential(potential, grid)
    if refine:
        X0 = np.stack(
            [_embed_coeffs(v[:, i], ml, grid).ravel() for i in range(v.shape[1])],
            axis=1,
        )
        w, X, apply_op = _refine_on_grid(V, grid, k, w, X0, tol=max(tol, 1e-12))
        fields = [X[:, i].reshape(grid.shape) for i in range(n_bands)]
        w = w[:n_bands]
    else:
        apply_op, _ = grid_operator(V, grid, k)
        fields = [_embed_coeffs(v[:, i], ml, grid) for i in range(n_bands)]
        w = w[:n_bands]

    modes = []
    for i in range(n_bands):
        p = fields[i]
        p = p / np.sqrt((np.abs(p) ** 2).sum() * grid.h**grid.dim)
        res = apply_op(p) - w[i] * p
        res_norm = float(np.sqrt((np.abs(res) ** 2).sum() * grid.h**grid.dim))
        limit = (1e-8 if refine else 1e-4) * (1.0 + abs(w[i]))
        if res_norm > limit:
            raise BlochError(
                f"eigensolver did not converge at k={k}: band {i + 1} residual "
                f"{res_norm:.2e} exceeds {limit:.2e}"
            )
        cluster = int(np.sum(np.abs(w - w[i]) <= CLUSTER_RTOL * (1.0 + abs(w[i]))))
        modes.append(
            BlochMode(
                k=k,
                n=i + 1,
                omega=float(w[i]),
                p=ComplexField(grid, p, k=k),
                residual=res_norm,
                multiplicity=cluster,
            )
        )
    return [fix_phase(m) for m in modes]


def fix_phase(mode: BlochMode) -> BlochMode:
    """Apply the phase convention.

    High-symmetry k: rotate the eigenfunction real (possible for simple
    eigenvalues since the boundary conditions are real) with positive cell
    mean, falling back to a positive dominant Fourier coefficient when the
    mean vanishes.  Other k: make xi(0) real positive; if xi(0) is ~0 make
    the largest-modulus Fourier coefficient of p real positive.
    """
    grid = mode.grid
    xi = mode.xi()
    if is_high_symmetry(mode.k):
        c = (xi**2).sum() * grid.h**grid.dim  # = e^{2i a} ||real part||^2
        if abs(c) > 1e-8:
            xi = xi * np.exp(-0.5j * np.angle(c))
        mean = xi.sum()
        pivot = mean if abs(mean) > 1e-8 * grid.size else _dominant_value(xi)
        if pivot.real < 0:
            xi = -xi
    else:
        origin = (grid.n // 2,) * grid.dim  # x = 0 lives at index n/2
        val0 = xi[origin]
        if abs(val0) > 1e-8:
            xi = xi * np.exp(-1j * np.angle(val0))
        else:
            piv = _dominant_value(grid.to_coeffs(mode.p.values))
            xi = xi * np.exp(-1j * np.angle(piv))
    p = xi * np.conj(plane_wave(grid, mode.k))
    return BlochMode(
        k=mode.k,
        n=mode.n,
        omega=mode.omega,
        p=ComplexField(grid, p, k=mode.k),
        residual=mode.residual,
        multiplicity=mode.multiplicity,
    )


def _dominant_value(arr: np.ndarray) -> complex:
    return complex(arr.ravel()[int(np.argmax(np.abs(arr)))])


def conjugate_mode(mode: BlochMode) -> BlochMode:
    """The mode at -k (reduced to B) obtained by conjugation, realizing
    xi_n(x, -k) = conj(xi_n(x, k)) exactly."""
    grid = mode.grid
    k_new = reduce_k([-c for c in mode.k])
    kappa = np.round(np.asarray(k_new) + np.asarray(mode.k)).astype(int)
    # xi_new = conj(xi) = [conj(p) e^{-i kappa x}] e^{i k_new x}
    p_new = np.conj(mode.p.values) * np.conj(plane_wave(grid, kappa))
    return BlochMode(
        k=k_new,
        n=mode.n,
        omega=mode.omega,
        p=ComplexField(grid, p_new, k=k_new),
        residual=mode.residual,
        multiplicity=mode.multiplicity,
    )


HIGH_SYMMETRY_2D = {
    "G": (0.0, 0.0),
    "X": (0.5, 0.0),
    "XP": (0.0, 0.5),
    "M": (0.5, 0.5),
}


def k_path(corners, per_segment: int = 16, dim: int = 2) -> list:
    """Polygonal path through named or explicit corners, e.g. G-X-M-G."""
    pts = []
    resolved = []
    for c in corners:
        if isinstance(c, str):
            resolved.append(np.array(HIGH_SYMMETRY_2D[c][:dim]))
        else:
            resolved.append(np.asarray(c, dtype=float))
    for a, b in zip(resolved[:-1], resolved[1:]):
        for t in np.linspace(0.0, 1.0, per_segment, endpoint=False):
            pts.append(tuple((a + t * (b - a)).tolist()))
    pts.append(tuple(resolved[-1].tolist()))
    return pts


def k_grid(dim: int, per_axis: int) -> list:
    """Uniform rational sampling of B = (-1/2, 1/2]^d."""
    vals = [-0.5 + (i + 1) / per_axis for i in range(per_axis)]
    if dim == 1:
        return [(v,) for v in vals]
    return [(a, b) for a in vals for b in vals]


@dataclass(frozen=True)
class BandStructure:
    """omega_n(k) over a k sample set: bands[i, n-1] = omega_n(k_samples[i])."""

    potential: PotentialSpec
    k_samples: tuple
    bands: np.ndarray
    n_bands: int

    def omega(self, k, n: int) -> float:
        kf = np.asarray(reduce_k(k))
        for i, ks in enumerate(self.k_samples):
            if np.max(np.abs(np.asarray(ks) - kf)) < 1e-9:
                return float(self.bands[i, n - 1])
        raise BlochError(f"band structure has no sample at k={k}")

    def to_csv(self) -> str:
        dim = len(self.k_samples[0])
        header = ",".join([f"k{i + 1}" for i in range(dim)] + ["n", "omega"])
        lines = [header]
        for ks, row in zip(self.k_samples, self.bands):
            for n, om in enumerate(row, start=1):
                coords = ",".join(repr(float(c)) for c in ks)
                lines.append(f"{coords},{n},{om!r}")
        return "\n".join(lines) + "\n"


def band_structure(
    potential: PotentialSpec,
    grid: TorusGrid,
    k_samples,
    n_bands: int,
    cutoff: int | None = None,
    refine: bool = False,
) -> BandStructure:
    """Per-k Bloch solves over a path or grid of k samples."""
    k_samples = [reduce_k(k) for k in k_samples]
    if not k_samples:
        raise ValueError("band_structure requires a nonempty k sample set")
    rows = []
    for k in k_samples:
        modes = solve_bloch(potential, grid, k, n_bands, cutoff=cutoff, refine=refine)
        rows.append([m.omega for m in modes])
    return BandStructure(
        potential=potential,
        k_samples=tuple(k_samples),
        bands=np.array(rows),
        n_bands=n_bands,
    )


def band_edges(bs: BandStructure, merge_tol: float = 1e-9):
    """Spectrum edges from per-band [min, max] intervals, with touching or
    overlapping bands merged.  Returns (edges, intervals), edges flattened
    in ascending order s1, s2, s3, ..."""
    intervals = [
        (float(bs.bands[:, n].min()), float(bs.bands[:, n].max()))
        for n in range(bs.n_bands)
    ]
    intervals.sort()
    merged = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1] + merge_tol:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    edges = [v for pair in merged for v in pair]
    return edges, [tuple(iv) for iv in merged]


@dataclass(frozen=True)
class LevelSetPoint:
    k: tuple
    n: int
    omega: float


def level_set(
    bs: BandStructure,
    omega_star: float,
    tol: float,
    solver_args: dict | None = None,
) -> list:
    """Sampled (k, n) with |omega_n(k) - omega*| <= tol.

    When solver_args (potential/grid/cutoff keys for solve_bloch) are given,
    sign changes of omega_n - omega* between consecutive samples are refined
    by bisection along the connecting segment and the crossing points are
    appended.  The empty list is a valid result.
    """
    hits = []
    for i, ks in enumerate(bs.k_samples):
        for n in range(1, bs.n_bands + 1):
            if abs(bs.bands[i, n - 1] - omega_star) <= tol:
                hits.append(LevelSetPoint(k=ks, n=n, omega=float(bs.bands[i, n - 1])))
    if solver_args:
        pot = solver_args["potential"]
        grid = solver_args["grid"]
        cutoff = solver_args.get("cutoff")

        def omega_at(k, n):
            return solve_bloch(pot, grid, k, n, cutoff=cutoff, refine=False)[n - 1].omega

        for i in range(len(bs.k_samples) - 1):
            ka = np.asarray(bs.k_samples[i])
            kb = np.asarray(bs.k_samples[i + 1])
            for n in range(1, bs.n_bands + 1):
                fa = bs.bands[i, n - 1] - omega_star
                fb = bs.bands[i + 1, n - 1] - omega_star
                if abs(fa) <= tol or abs(fb) <= tol or fa * fb > 0:
                    continue
                lo, hi, flo = 0.0, 1.0, fa
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    fm = omega_at(tuple(ka + mid * (kb - ka)), n) - omega_star
                    if abs(fm) <= tol:
                        lo = hi = mid
                        break
                    if flo * fm <= 0:
                        hi = mid
                    else:
                        lo, flo = mid, fm
                kc = tuple((ka + 0.5 * (lo + hi) * (kb - ka)).tolist())
                hits.append(
                    LevelSetPoint(k=kc, n=n, omega=float(omega_at(kc, n)))
                )
    unique = []
    for h in hits:
        if not any(
            p.n == h.n and np.max(np.abs(np.asarray(p.k) - np.asarray(h.k))) < 1e-6
            for p in unique
        ):
            unique.append(h)
    return unique


def level_set_to_csv(points: list) -> str:
    if not points:
        return "k1,n,omega\n"
    dim = len(points[0].k)
    header = ",".join([f"k{i + 1}" for i in range(dim)] + ["n", "omega"])
    lines = [header]
    for p in points:
        coords = ",".join(repr(float(c)) for c in p.k)
        lines.append(f"{coords},{p.n},{p.omega!r}")
    return "\n".join(lines) + "\n"
