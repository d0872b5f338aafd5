"""Algebraic coupled mode equations: coupling tensor, residuals, Jacobians,
reversibility, and solvers.

The ACMEs for the leading-order amplitudes A_1..A_N are

    Omega A_j - sigma * sum_{(a,b,g) in A_j} mu_{abgj} A_a conj(A_b) A_g = 0,

with mu_{abgj} the quartic overlap of the four Bloch waves, summed only over
index triples whose quasimomenta combine back to k^(j) modulo Z^d.  The
scalar (N=1) and two-mode (N=2) cases are solved in closed form; general N
by damped Newton restricted to the reversible subspace V_rev (where the
phase-invariance kernel is absent and the Jacobian is invertible at
non-degenerate solutions).

Indices are 0-based throughout; band/tensor subscripts in docstrings follow
the usual 1-based notation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochMode, conjugate_mode, solve_bloch
from .grid import GridError
from .modeset import ModeSelection

#: An eigenvalue belongs to the zero cluster when |lambda| <= ZERO_EV_RTOL * max|lambda|.
ZERO_EV_RTOL = 1e-8
#: Simplicity requires the second-smallest |lambda| >= SIMPLE_EV_RTOL * max|lambda|.
SIMPLE_EV_RTOL = 1e-4


class AcmeError(RuntimeError):
    pass


def compute_mu(modes: list, index_sets) -> dict:
    """Coupling tensor entries mu_{abgj} = int xi_a conj(xi_b) xi_g conj(xi_j)
    by spectral quadrature, for (a, b, g) in A_j only."""
    grid = modes[0].grid
    if any(m.grid != grid for m in modes):
        raise GridError("all modes must live on the same grid")
    xi = [m.xi() for m in modes]
    scale = grid.h**grid.dim
    mu = {}
    for j, triples in enumerate(index_sets):
        for a, b, g in triples:
            val = (xi[a] * np.conj(xi[b]) * xi[g] * np.conj(xi[j])).sum() * scale
            mu[(a, b, g, j)] = complex(val)
    return mu


def modes_for_selection(
    potential,
    grid,
    selection: ModeSelection,
    cutoff: int | None = None,
) -> list:
    """Solve for the N star modes, building reflection partners by
    conjugation so the k -> -k symmetry of the pair is exact."""
    modes: list = [None] * selection.n_stars
    for j in range(selection.n_stars):
        jp = selection.pairing[j]
        if modes[j] is not None:
            continue
        kj = selection.stars[j].as_floats()
        nj = selection.bands[j]
        sol = solve_bloch(potential, grid, kj, nj, cutoff=cutoff)
        modes[j] = sol[nj - 1]
        if jp != j and modes[jp] is None:
            modes[jp] = conjugate_mode(modes[j])
    return modes


@dataclass(frozen=True)
class AcmeSystem:
    """The N selected modes with their coupling tensor and signs."""

    n: int
    modes: tuple
    mu: dict
    sigma: int
    Omega: int
    pairing: tuple
    index_sets: tuple
    selection: ModeSelection | None = None

    def __post_init__(self):
        if self.sigma not in (-1, 1) or self.Omega not in (-1, 1):
            raise AcmeError("sigma and Omega must be +-1")
        for j in range(self.n):
            d = self.mu.get((j, j, j, j))
            if d is None or d.real <= 0 or abs(d.imag) > 1e-10 * d.real:
                raise AcmeError(f"diagonal mu_{j}{j}{j}{j} must be real positive")

    @classmethod
    def build(
        cls,
        modes: list,
        selection: ModeSelection,
        sigma: int,
        Omega: int,
    ) -> "AcmeSystem":
        mu = compute_mu(modes, selection.index_sets_stars)
        return cls(
            n=selection.n_stars,
            modes=tuple(modes),
            mu=mu,
            sigma=int(sigma),
            Omega=int(Omega),
            pairing=selection.pairing,
            index_sets=selection.index_sets_stars,
            selection=selection,
        )

    def reversal_symmetry_defect(self) -> float:
        """max |mu_{a'b'g'j'} - conj(mu_{abgj})| over the tensor; ~0 when the
        modes obey the conjugation symmetry."""
        p = self.pairing
        worst = 0.0
        for (a, b, g, j), val in self.mu.items():
            mirror = self.mu.get((p[a], p[b], p[g], p[j]))
            if mirror is None:
                raise AcmeError("index sets are not reflection-closed")
            worst = max(worst, abs(mirror - np.conj(val)))
        return worst

    def mu_to_json(self) -> str:
        entries = [
            {"index": list(idx), "value": [val.real, val.imag]}
            for idx, val in sorted(self.mu.items())
        ]
        return json.dumps(
            {"n": self.n, "sigma": self.sigma, "Omega": self.Omega, "mu": entries},
            indent=1,
        )


def acme_residual(A: np.ndarray, system: AcmeSystem) -> np.ndarray:
    """F_j = Omega A_j - sigma sum_{A_j} mu_{abgj} A_a conj(A_b) A_g."""
    A = np.asarray(A, dtype=complex)
    if A.shape != (system.n,):
        raise AcmeError(f"A must have length {system.n}")
    F = system.Omega * A.copy()
    for j, triples in enumerate(system.index_sets):
        acc = 0.0 + 0.0j
        for a, b, g in triples:
            acc += system.mu[(a, b, g, j)] * A[a] * np.conj(A[b]) * A[g]
        F[j] -= system.sigma * acc
    return F


def _wirtinger_blocks(A: np.ndarray, system: AcmeSystem):
    n = system.n
    C = np.zeros((n, n), dtype=complex)  # dF/dA
    D = np.zeros((n, n), dtype=complex)  # dF/dconj(A)
    for j in range(n):
        C[j, j] += system.Omega
        for a, b, g in system.index_sets[j]:
            m = system.mu[(a, b, g, j)]
            C[j, a] -= system.sigma * m * np.conj(A[b]) * A[g]
            C[j, g] -= system.sigma * m * A[a] * np.conj(A[b])
            D[j, b] -= system.sigma * m * A[a] * A[g]
    return C, D


def acme_jacobian_real(A: np.ndarray, system: AcmeSystem) -> np.ndarray:
    """Jacobian of F in stacked real variables (Re A, Im A), analytic."""
    A = np.asarray(A, dtype=complex)
    C, D = _wirtinger_blocks(A, system)
    return np.block(
        [
            [(C + D).real, (D - C).imag],
            [(C + D).imag, (C - D).real],
        ]
    )


def real_stack(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    return np.concatenate([A.real, A.imag])


def complex_unstack(v: np.ndarray) -> np.ndarray:
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def kernel_direction(A: np.ndarray, system: AcmeSystem) -> np.ndarray:
    """The phase-invariance kernel vector (0 -I; I 0) A_hat = (-Im A, Re A).

    Requires A to solve the ACMEs; A = 0 is degenerate and returns the zero
    vector with a warning."""
    A = np.asarray(A, dtype=complex)
    scale = float(np.linalg.norm(A))
    res = float(np.linalg.norm(acme_residual(A, system)))
    if res > 1e-8 * (1.0 + scale**3):
        raise AcmeError(f"A is not an ACME solution (residual {res:.2e})")
    if scale == 0.0:
        warnings.warn("kernel direction of the zero solution is degenerate")
        return np.zeros(2 * system.n)
    return np.concatenate([-A.imag, A.real])


def apply_reversal(A: np.ndarray, pairing) -> np.ndarray:
    """S A with (S A)_i = conj(A_{i'})."""
    A = np.asarray(A, dtype=complex)
    return np.conj(A[np.asarray(pairing)])


def symmetry_matrix(pairing) -> np.ndarray:
    """The real 2N x 2N matrix S_hat = diag(P, -P), P the pairing permutation."""
    n = len(pairing)
    P = np.zeros((n, n))
    for i, ip in enumerate(pairing):
        P[i, ip] = 1.0
    S = np.zeros((2 * n, 2 * n))
    S[:n, :n] = P
    S[n:, n:] = -P
    return S


def reversibility_check(A: np.ndarray, pairing, tol: float = 1e-12) -> bool:
    A = np.asarray(A, dtype=complex)
    defect = np.max(np.abs(A - apply_reversal(A, pairing)))
    return bool(defect <= tol * max(1.0, float(np.max(np.abs(A)))))

def project_reversible(A: np.ndarray, pairing) -> np.ndarray:
    """Average A with its reversal image; a projection onto V_rev."""
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + apply_reversal(A, pairing))


@dataclass(frozen=True)
class AcmeSolution:
    """A certified amplitude vector with its Jacobian spectrum."""

    A: np.ndarray
    jacobian_eigenvalues: np.ndarray
    nondegenerate: bool
    reversible: bool
    residual: float
    label: str = ""

    def __post_init__(self):
        arr = np.asarray(self.A, dtype=complex).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "A", arr)
        ev = np.sort(np.asarray(self.jacobian_eigenvalues, dtype=float)).copy()
        ev.setflags(write=False)
        object.__setattr__(self, "jacobian_eigenvalues", ev)

    def to_json(self) -> str:
        return json.dumps(
            {
                "A": [[a.real, a.imag] for a in self.A],
                "jacobian_eigenvalues": list(self.jacobian_eigenvalues),
                "nondegenerate": self.nondegenerate,
                "reversible": self.reversible,
                "residual": self.residual,
                "label": self.label,
            },
            indent=1,
        )


def certify(A: np.ndarray, system: AcmeSystem, label: str = "") -> AcmeSolution:
    """Package A with Jacobian eigenvalues, non-degeneracy and reversibility
    verdicts.  Raises AcmeError if A is not a solution to 1e-10."""
    A = np.asarray(A, dtype=complex)
    res = float(np.linalg.norm(acme_residual(A, system)))
    scale = 1.0 + float(np.linalg.norm(A)) ** 3
    if res > 1e-10 * scale:
        raise AcmeError(f"residual {res:.2e} too large to certify")
    J = acme_jacobian_real(A, system)
    ev = np.linalg.eigvalsh(0.5 * (J + J.T))
    mags = np.sort(np.abs(ev))
    top = mags[-1] if mags[-1] > 0 else 1.0
    zero_cluster = int(np.sum(mags <= ZERO_EV_RTOL * top))
    nondeg = zero_cluster == 1 and (len(mags) < 2 or mags[1] >= SIMPLE_EV_RTOL * top)
    rev = reversibility_check(A, system.pairing, tol=1e-10)
    return AcmeSolution(
        A=A,
        jacobian_eigenvalues=ev,
        nondegenerate=bool(nondeg),
        reversible=bool(rev),
        residual=res,
        label=label,
    )


def solve_scalar(
    mu: float, sigma: int, Omega: int, phase: float = 0.0
) -> np.ndarray | None:
    """Nonzero solution A = sqrt(Omega/(sigma mu)) e^{i phase} of the scalar
    ACME, or None when sign(Omega) != sign(sigma) (no nonzero solution; the
    bifurcation goes to the other side of omega*)."""
    if mu <= 0:
        raise AcmeError("scalar mu must be positive")
    if sigma * Omega < 0:
        return None
    amp = np.sqrt(Omega / (sigma * mu))
    return np.array([amp * np.exp(1j * phase)])


def _two_mode_constants(system: AcmeSystem):
    mu = system.mu
    d1 = mu[(0, 0, 0, 0)].real
    d2 = mu[(1, 1, 1, 1)].real
    e = mu[(0, 1, 1, 0)].real
    f = mu.get((1, 0, 1, 0))  # mu_2121; present only in the consistent case
    return d1, d2, e, f


def solve_two_mode(system: AcmeSystem) -> list:
    """Closed-form N=2 branches with A_1 A_2 != 0.

    Consistent case (k differences in (Z/2)^d): moduli from
    gamma_q = 2 mu_1221 + (-1)^q |mu_2121| and the reversible phase choice;
    inconsistent case: decoupled-modulus formulas.  Returns every admissible
    branch, reversible ones first; branches whose phases cannot satisfy
    reversibility (e.g. mu_1111 != mu_2222 under a swap pairing) are
    returned with reversible=False.
    """
    if system.n != 2:
        raise AcmeError("solve_two_mode requires N=2")
    d1, d2, e, f = _two_mode_constants(system)
    ratio = system.Omega / system.sigma
    swap = system.pairing == (1, 0)
    sols = []

    def try_branch(gamma: float, phases, label: str):
        den = gamma**2 - d1 * d2
        if abs(den) < 1e-14:
            return
        a1_sq = ratio * (gamma - d2) / den
        a2_sq = ratio * (gamma - d1) / den
        if a1_sq <= 0 or a2_sq <= 0:
            return
        A = np.array(
            [
                np.sqrt(a1_sq) * np.exp(1j * phases[0]),
                np.sqrt(a2_sq) * np.exp(1j * phases[1]),
            ]
        )
        if reversibility_check(A, system.pairing, tol=1e-6):
            A = project_reversible(A, system.pairing)
        sols.append(certify(A, system, label=label))

    if f is not None:  # consistent case
        arg_f = float(np.angle(f))
        for q in range(4):
            gamma = 2 * e + (1 if q % 2 == 0 else -1) * abs(f)
            rel = -arg_f / 2 + q * np.pi / 2  # arg A2 - arg A1
            if swap:
                th1 = (arg_f - q * np.pi) / 4
                try_branch(gamma, (th1, th1 + rel), f"consistent q={q}")
            else:
                # self-paired stars: V_rev is the real vectors
                if abs(np.sin(rel)) < 1e-9:
                    try_branch(gamma, (0.0, rel), f"consistent q={q}")
                elif q < 2:  # non-reversible pair, one representative per gamma
                    try_branch(gamma, (0.0, rel), f"consistent q={q} nonreversible")
    else:  # inconsistent case M > N = 2
        gamma = 2 * e
        if swap:
            try_branch(gamma, (0.0, 0.0), "inconsistent")
        else:
            try_branch(gamma, (0.0, 0.0), "inconsistent ++")
            try_branch(gamma, (0.0, np.pi), "inconsistent +-")

    sols.sort(key=lambda s: (not s.reversible, s.label))
    return sols


def _reversible_basis(pairing) -> np.ndarray:
    """Orthonormal basis of V_rev inside the stacked real space R^{2N}."""
    n = len(pairing)
    cols = []
    for i in range(n):
        ip = pairing[i]
        if ip == i:
            col = np.zeros(2 * n)
            col[i] = 1.0
            cols.append(col)
        elif i < ip:
            re = np.zeros(2 * n)
            re[i] = re[ip] = 1.0 / np.sqrt(2)
            im = np.zeros(2 * n)
            im[n + i] = 1.0 / np.sqrt(2)
            im[n + ip] = -1.0 / np.sqrt(2)
            cols.extend([re, im])
    return np.stack(cols, axis=1)


def solve_general_newton(
    system: AcmeSystem,
    seed_count: int = 8,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> list:
    """Multi-start damped Newton on the ACMEs restricted to V_rev.

    Seeds combine the scalar-solution magnitudes sqrt|Omega/(sigma mu_jjjj)|
    with a grid of seed_count phases per free phase (signs for self-paired
    components).  Converged points are deduped modulo A -> -A and certified;
    the zero solution is discarded.  An empty list means no solution found.
    """
    B = _reversible_basis(system.pairing)
    dim = B.shape[1]

    def G(u):
        return B.T @ real_stack(acme_residual(complex_unstack(B @ u), system))

    def JG(u):
        return B.T @ acme_jacobian_real(complex_unstack(B @ u), system) @ B

    scales = np.array(
        [
            np.sqrt(abs(system.Omega / (system.sigma * system.mu[(j, j, j, j)].real)))
            for j in range(system.n)
        ]
    )
    # enumerate seed amplitude vectors in V_rev
    options = []
    for i in range(system.n):
        ip = system.pairing[i]
        if ip == i:
            options.append([scales[i], -scales[i]])
        elif i < ip:
            angles = 2 * np.pi * np.arange(seed_count) / seed_count
            options.append([scales[i] * np.exp(1j * th) for th in angles])
        else:
            options.append([None])  # determined by the partner
    seeds = [[]]
    for opt in options:
        seeds = [s + [o] for s in seeds for o in opt]
        if len(seeds) > 4096:
            raise AcmeError("seed grid too large; reduce seed_count")

    found = []
    for seed in seeds:
        A0 = np.zeros(system.n, dtype=complex)
        for i in range(system.n):
            ip = system.pairing[i]
            A0[i] = np.conj(A0[ip]) if seed[i] is None else seed[i]
        u = B.T @ real_stack(A0)
        ok = False
        for _ in range(max_iter):
            g = G(u)
            ng = float(np.linalg.norm(g))
            if ng <= tol:
                ok = True
                break
            try:
                step = np.linalg.solve(JG(u), -g)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t > 1e-6:  # Armijo backtracking on |G|^2
                if np.linalg.norm(G(u + t * step)) ** 2 <= (1 - 0.25 * t) * ng**2:
                    break
                t *= 0.5
            else:
                break
            u = u + t * step
        if not ok:
            continue
        A = complex_unstack(B @ u)
        if np.linalg.norm(A) < 1e-9 * max(1.0, float(np.max(scales))):
            continue
        if any(
            min(np.linalg.norm(A - s.A), np.linalg.norm(A + s.A)) < 1e-8 * (1 + np.linalg.norm(A))
            for s in found
        ):
            continue
        found.append(certify(A, system, label="newton"))
    found.sort(key=lambda s: -float(np.linalg.norm(s.A)))
    return found
