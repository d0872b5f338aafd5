"""Quasi-periodic nonlinear Bloch waves of the stationary GP equation.

A candidate solution is phi(x) = sum_j e^{i k^(j).x} eta_j(x) with one
2pi-periodic component field eta_j per closure point of the mode selection.
Collecting the terms that multiply e^{i k^(j).x} turns the stationary
equation into M coupled component equations,

    (-(grad + i k_j)^2 + V - omega) eta_j
        + sigma * sum_{(a,b,g) in A~_j} e^{i kappa.x} eta_a conj(eta_b) eta_g = 0,

where kappa = k_a - k_b + k_g - k_j is the integer shift of each admissible
cubic combination.  Newton's method runs on the stacked real variables with
one scalar gauge constraint (orthogonality to the i-rotation of a reference
state) removing the phase invariance; branches in omega are traced by
pseudo-arclength continuation through folds.

Linear solves are LGMRES with the Fourier-diagonal preconditioner
(c - Delta + |k|^2)^{-1}, c = 2 + max V, with a dense direct fallback for
small 1D problems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, lgmres

from .bloch import grid_operator, plane_wave, shifted_laplacian_symbol
from .grid import ComplexField, TorusGrid, sobolev_norm
from .modeset import KPoint, ModeSelection, integer_shift

DENSE_1D_LIMIT = 1100


class NlbError(RuntimeError):
    pass


class NewtonFailure(NlbError):
    """Newton did not reach the residual tolerance."""


class ZeroSolution(NlbError):
    """Newton converged, but to the trivial zero solution."""


@dataclass(frozen=True)
class NlbProblem:
    """Fixed data of one NLB computation: grid, potential samples, closure
    quasimomenta, cubic index sets with their integer shifts, sigma."""

    selection: ModeSelection
    grid: TorusGrid
    V: np.ndarray
    sigma: int
    omega_star: float
    modes: tuple  # N star BlochModes (phase-fixed), aligned with selection.stars

    @classmethod
    def build(cls, selection, modes, V, sigma):
        grid = modes[0].grid
        omegas = [m.omega for m in modes]
        if max(omegas) - min(omegas) > 1e-6 * (1.0 + abs(omegas[0])):
            raise NlbError("star modes do not share one eigenvalue")
        return cls(
            selection=selection,
            grid=grid,
            V=np.asarray(V, dtype=float),
            sigma=int(sigma),
            omega_star=float(np.mean(omegas)),
            modes=tuple(modes),
        )

    @property
    def n_components(self) -> int:
        return self.selection.n_closure

    def k_list(self) -> list:
        return [p.as_floats() for p in self.selection.closure]

    def _tables(self):
        # cached spectral symbols, preconditioner symbols, and cubic terms
        if not hasattr(self, "_cache"):
            ks = self.k_list()
            syms = [shifted_laplacian_symbol(self.grid, k) for k in ks]
            c = 2.0 + float(self.V.max())
            precs = [1.0 / (c + s) for s in syms]
            waves = {}
            cubic = []
            closure = list(self.selection.closure)
            for j, triples in enumerate(self.selection.index_sets_closure):
                terms = []
                for a, b, g in triples:
                    kappa = integer_shift(closure, a, b, g, j)
                    if kappa not in waves:
                        waves[kappa] = (
                            np.ones(self.grid.shape)
                            if not any(kappa)
                            else plane_wave(self.grid, kappa)
                        )
                    terms.append((a, b, g, waves[kappa]))
                cubic.append(tuple(terms))
            object.__setattr__(self, "_cache", (syms, precs, cubic))
        return self._cache


@dataclass(frozen=True)
class NlbState:
    """M component fields with the frequency omega; immutable once accepted."""

    problem: NlbProblem
    fields: tuple  # of complex ndarrays, one per closure component
    omega: float
    newton_iterations: int = 0

    def __post_init__(self):
        frozen = []
        for f in self.fields:
            arr = np.asarray(f, dtype=complex).copy()
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "fields", tuple(frozen))

    @property
    def grid(self) -> TorusGrid:
        return self.problem.grid

    def l2_norm(self) -> float:
        """Per-cell L2 norm of the assembled phi; the component cross terms
        integrate to zero over the full periodicity supercell, so this is
        sqrt(sum_j ||eta_j||^2)."""
        scale = self.grid.h**self.grid.dim
        total = sum(float((np.abs(f) ** 2).sum() * scale) for f in self.fields)
        return float(np.sqrt(total))

    def assembled(self) -> np.ndarray:
        """phi sampled on the grid (quasi-periodic; one cell's values)."""
        out = np.zeros(self.grid.shape, dtype=complex)
        for kp, f in zip(self.problem.k_list(), self.fields):
            out = out + plane_wave(self.grid, kp) * f
        return out

    def component_field(self, j: int) -> ComplexField:
        return ComplexField(
            self.grid, self.fields[j], k=tuple(self.problem.k_list()[j])
        )

    def reversibility_defect(self) -> float:
        """How far the state is from satisfying conj(phi) = phi.

        At component level that is eta_j' = conj(eta_j) e^{-i kappa.x} with
        the integer shift kappa = k_j' + k_j (zero for interior +-k pairs,
        where the relation is a plain conjugation).  Returns the worst
        component L2 defect."""
        pairing = self.problem.selection.closure_pairing()
        ks = self.problem.k_list()
        scale = self.grid.h**self.grid.dim
        worst = 0.0
        for j, jp in enumerate(pairing):
            kappa = np.round(ks[jp] + ks[j]).astype(int)
            wave = plane_wave(self.grid, kappa)
            d = self.fields[jp] - np.conj(self.fields[j]) * np.conj(wave)
            worst = max(worst, float(np.sqrt((np.abs(d) ** 2).sum() * scale)))
        return worst


def residual(state: NlbState) -> list:
    """Component residual fields of the stationary equation at the state."""
    pb = state.problem
    syms, _, cubic = pb._tables()
    out = []
    for j in range(pb.n_components):
        eta = state.fields[j]
        lin = np.fft.ifftn(syms[j] * np.fft.fftn(eta)) + (pb.V - state.omega) * eta
        cub = np.zeros(pb.grid.shape, dtype=complex)
        for a, b, g, wave in cubic[j]:
            cub += wave * state.fields[a] * np.conj(state.fields[b]) * state.fields[g]
        out.append(lin + pb.sigma * cub)
    return out


def apply_jacobian(state: NlbState, deltas: list) -> list:
    """Directional derivative of the residual at the state (real-linear)."""
    pb = state.problem
    syms, _, cubic = pb._tables()
    out = []
    for j in range(pb.n_components):
        d = deltas[j]
        lin = np.fft.ifftn(syms[j] * np.fft.fftn(d)) + (pb.V - state.omega) * d
        cub = np.zeros(pb.grid.shape, dtype=complex)
        for a, b, g, wave in cubic[j]:
            ea, eb, eg = state.fields[a], state.fields[b], state.fields[g]
            cub += wave * (
                deltas[a] * np.conj(eb) * eg
                + ea * np.conj(deltas[b]) * eg
                + ea * np.conj(eb) * deltas[g]
            )
        out.append(lin + pb.sigma * cub)
    return out


def residual_norm(state: NlbState) -> float:
    scale = state.grid.h**state.grid.dim
    return float(
        np.sqrt(sum((np.abs(r) ** 2).sum() * scale for r in residual(state)))
    )


def asymptotic_guess(problem: NlbProblem, A, eps: float, Omega: int) -> NlbState:
    """Leading-order state: eta_j = eps A_j p_j for the star components,
    zero beyond, at omega = omega* + eps^2 Omega."""
    A = np.asarray(A, dtype=complex)
    fields = []
    for j in range(problem.n_components):
        if j < len(A):
            fields.append(eps * A[j] * problem.modes[j].p.values)
        else:
            fields.append(np.zeros(problem.grid.shape, dtype=complex))
    return NlbState(
        problem=problem,
        fields=tuple(fields),
        omega=problem.omega_star + eps**2 * Omega,
    )


# --- stacked real-vector plumbing ------------------------------------------

def _pack(fields: list, extras: np.ndarray) -> np.ndarray:
    parts = []
    for f in fields:
        parts.append(f.real.ravel())
        parts.append(f.imag.ravel())
    parts.append(extras)
    return np.concatenate(parts)


def _unpack(vec: np.ndarray, grid: TorusGrid, m: int, n_extra: int):
    sz = grid.size
    fields = []
    for j in range(m):
        re = vec[2 * j * sz : (2 * j + 1) * sz]
        im = vec[(2 * j + 1) * sz : (2 * j + 2) * sz]
        fields.append((re + 1j * im).reshape(grid.shape))
    extras = vec[2 * m * sz :] if n_extra else np.zeros(0)
    return fields, extras


def _dot(grid: TorusGrid, fa: list, fb: list) -> float:
    scale = grid.h**grid.dim
    return float(
        sum((a.real * b.real + a.imag * b.imag).sum() for a, b in zip(fa, fb))
        * scale
    )


def _gauge_direction(fields: list) -> list:
    return [1j * f for f in fields]


class _BorderedOperator:
    """J with gauge (and optionally arclength) border rows/columns, acting on
    the stacked real vector (fields, lambda[, omega])."""

    def __init__(self, state, gauge_fields, tangent=None):
        self.state = state
        self.pb = state.problem
        self.grid = state.grid
        self.m = self.pb.n_components
        self.gauge = gauge_fields
        self.tangent = tangent  # (fields, d_omega) or None
        self.n_extra = 1 if tangent is None else 2
        self.size = 2 * self.m * self.grid.size + self.n_extra

    def matvec(self, vec):
        fields, extras = _unpack(vec, self.grid, self.m, self.n_extra)
        lam = extras[0]
        top = apply_jacobian(self.state, fields)
        top = [t + lam * g for t, g in zip(top, self.gauge)]
        rows = [_dot(self.grid, self.gauge, fields)]
        if self.tangent is not None:
            dom = extras[1]
            top = [t - dom * f for t, f in zip(top, self.state.fields)]
            t_fields, t_om = self.tangent
            rows.append(_dot(self.grid, t_fields, fields) + t_om * dom)
        return _pack(top, np.array(rows))

    def preconditioner(self):
        _, precs, _ = self.pb._tables()

        def apply(vec):
            fields, extras = _unpack(vec, self.grid, self.m, self.n_extra)
            out = [
                np.fft.ifftn(precs[j] * np.fft.fftn(fields[j])) for j in range(self.m)
            ]
            return _pack(out, extras)

        return apply

    def solve(self, rhs_vec, rtol=1e-6):
        if self.grid.dim == 1 and self.size <= DENSE_1D_LIMIT:
            A = np.empty((self.size, self.size))
            eye = np.eye(self.size)
            for i in range(self.size):
                A[:, i] = self.matvec(eye[:, i])
            return np.linalg.solve(A, rhs_vec)
        op = LinearOperator((self.size, self.size), matvec=self.matvec)
        pc = self.preconditioner()
        M = LinearOperator((self.size, self.size), matvec=pc)
        sol, info = lgmres(op, rhs_vec, M=M, rtol=rtol, atol=0.0, maxiter=600)
        if info != 0:
            # accept a partially converged step if it still reduces well;
            # Newton tolerates inexact directions
            achieved = np.linalg.norm(self.matvec(sol) - rhs_vec)
            if achieved > 1e-2 * np.linalg.norm(rhs_vec):
                raise NlbError(f"inner linear solve stagnated (info={info})")
        return sol


def newton_solve(
    problem: NlbProblem,
    guess: NlbState,
    tol: float = 1e-10,
    max_iter: int = 40,
    gauge_ref: NlbState | None = None,
) -> NlbState:
    """Gauge-fixed damped Newton at fixed omega.

    The scalar constraint <u - u_ref, i u_ref> = 0 (real L2 pairing) pins the
    free phase to the reference state (the guess by default).  Raises
    NewtonFailure on non-convergence and ZeroSolution when the iteration
    collapses onto the trivial branch.
    """
    ref = guess if gauge_ref is None else gauge_ref
    gauge = _gauge_direction(list(ref.fields))
    gauge_scale = _dot(problem.grid, gauge, gauge)
    if gauge_scale < 1e-28:
        raise ZeroSolution("guess is the zero state")
    state = guess
    guess_norm = guess.l2_norm()
    lam = 0.0
    for it in range(max_iter + 1):
        res = residual(state)
        res = [r + lam * g for r, g in zip(res, gauge)]
        g_val = _dot(problem.grid, [s - r for s, r in zip(state.fields, ref.fields)], gauge)
        rn = np.sqrt(_dot(problem.grid, res, res) + g_val**2)
        bound = tol * (1.0 + state.l2_norm() ** 3)
        if rn <= bound:
            if state.l2_norm() <= 1e-3 * guess_norm:
                raise ZeroSolution("Newton converged to the zero solution")
            return replace(state, newton_iterations=it)
        if it == max_iter:
            break
        op = _BorderedOperator(state, gauge)
        rhs = _pack(res, np.array([g_val]))
        try:
            step = op.solve(-rhs, rtol=1e-6)
        except NlbError as exc:
            raise NewtonFailure(str(exc))
        dfields, dex = _unpack(step, problem.grid, problem.n_components, 1)
        t = 1.0
        while t > 1e-4:
            trial_fields = [f + t * d for f, d in zip(state.fields, dfields)]
            trial = NlbState(problem=problem, fields=tuple(trial_fields), omega=state.omega)
            tres = residual(trial)
            tlam = lam + t * dex[0]
            tres = [r + tlam * g for r, g in zip(tres, gauge)]
            tg = _dot(problem.grid, [s - r for s, r in zip(trial.fields, ref.fields)], gauge)
            trn = np.sqrt(_dot(problem.grid, tres, tres) + tg**2)
            if trn <= (1.0 - 0.25 * t) * rn:
                state, lam = trial, tlam
                break
            t *= 0.5
        else:
            raise NewtonFailure(f"line search stalled at residual {rn:.3e}")
    raise NewtonFailure(f"no convergence in {max_iter} iterations")


@dataclass(frozen=True)
class BranchPoint:
    omega: float
    state: NlbState
    norm: float
    arclength: float


@dataclass
class Branch:
    """An ordered continuation branch with fold records and a termination
    status in {active, fold-detected, max-steps, newton-failed}."""

    points: list = field(default_factory=list)
    direction: int = +1
    status: str = "active"
    folds: list = field(default_factory=list)

    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.points])

    def norms(self) -> np.ndarray:
        return np.array([p.norm for p in self.points])

    def to_csv(self) -> str:
        lines = ["omega,l2_norm,arclength,status"]
        for p in self.points:
            lines.append(f"{p.omega!r},{p.norm!r},{p.arclength!r},{self.status}")
        return "\n".join(lines) + "\n"


@dataclass
class StepControls:
    ds: float = 0.02
    ds_min: float = 1e-6
    ds_max: float = 0.2
    max_steps: int = 40
    omega_min: float = -np.inf
    omega_max: float = np.inf
    newton_tol: float = 1e-10
    stop_at_fold: bool = False


def _tangent(state: NlbState, gauge, prev=None):
    """Unit tangent (d fields, d omega) of the solution curve, oriented to
    keep a positive product with prev (or with d omega > 0 initially)."""
    pb = state.problem
    if prev is None:
        # normalize by d omega = 1; seeds are assumed not to sit on a fold
        prev = ([np.zeros(pb.grid.shape, complex) for _ in range(pb.n_components)], 1.0)
    op = _BorderedOperator(state, gauge, tangent=prev)
    # solve J t_u - t_om * eta + lam * gauge = 0, <gauge,t_u> = 0, <prev,t> = 1
    rhs = np.zeros(op.size)
    rhs[-1] = 1.0
    sol = op.solve(rhs, rtol=1e-8)
    tf, ex = _unpack(sol, pb.grid, pb.n_components, 2)
    t_om = ex[1]
    nrm = np.sqrt(_dot(pb.grid, tf, tf) + t_om**2)
    if nrm == 0:
        raise NlbError("degenerate tangent")
    return [f / nrm for f in tf], float(t_om / nrm)


def continue_branch(
    problem: NlbProblem,
    seed: NlbState,
    direction: int = +1,
    controls: StepControls | None = None,
) -> Branch:
    """Pseudo-arclength predictor-corrector from a converged seed.

    The corrector solves the stationary equations plus the gauge constraint
    (referenced to the predictor) plus the arclength hyperplane condition in
    the unknowns (fields, lambda, omega).  Steps halve on failure and grow
    30% after fast correctors; folds are recorded at sign changes of the
    tangent's omega component.
    """
    ct = controls or StepControls()
    branch = Branch(direction=+1 if direction >= 0 else -1)
    state = seed
    arclength = 0.0
    branch.points.append(
        BranchPoint(omega=state.omega, state=state, norm=state.l2_norm(), arclength=0.0)
    )
    gauge = _gauge_direction(list(state.fields))
    trivial = _dot(problem.grid, list(state.fields), list(state.fields)) < 1e-24
    if trivial:
        # the zero branch: F(0, omega) = 0 identically, tangent along omega
        t_fields = [np.zeros(problem.grid.shape, complex) for _ in range(problem.n_components)]
        tangent = (t_fields, float(branch.direction))
    else:
        tangent = _tangent(state, gauge, prev=None)
        if tangent[1] * branch.direction < 0:
            tangent = ([-f for f in tangent[0]], -tangent[1])
    ds = ct.ds
    step = 0
    while step < ct.max_steps:
        step += 1
        pred_fields = [f + ds * t for f, t in zip(state.fields, tangent[0])]
        pred_omega = state.omega + ds * tangent[1]
        pred = NlbState(problem=problem, fields=tuple(pred_fields), omega=pred_omega)
        try:
            new_state, iters = _arclength_corrector(
                problem, pred, state, tangent, ds, ct
            )
        except NlbError:
            ds *= 0.5
            if ds < ct.ds_min:
                branch.status = "newton-failed"
                return branch
            step -= 1
            continue
        arclength += ds
        branch.points.append(
            BranchPoint(
                omega=new_state.omega,
                state=new_state,
                norm=new_state.l2_norm(),
                arclength=arclength,
            )
        )
        if trivial:
            new_tangent = tangent
        else:
            gauge = _gauge_direction(list(new_state.fields))
            try:
                new_tangent = _tangent(new_state, gauge, prev=tangent)
            except NlbError:
                branch.status = "newton-failed"
                return branch
            if _dot(problem.grid, new_tangent[0], tangent[0]) + new_tangent[1] * tangent[1] < 0:
                new_tangent = ([-f for f in new_tangent[0]], -new_tangent[1])
        if new_tangent[1] * tangent[1] < 0:
            branch.folds.append((arclength, new_state.omega))
            if ct.stop_at_fold:
                branch.status = "fold-detected"
                return branch
        tangent = new_tangent
        state = new_state
        if not (ct.omega_min <= state.omega <= ct.omega_max):
            return branch
        if iters <= 3:
            ds = min(ds * 1.3, ct.ds_max)
    branch.status = "max-steps"
    return branch


def _arclength_corrector(problem, pred, prev_state, tangent, ds, ct):
    """Newton on [stationary eqs + lam * gauge ; gauge row ; arclength row]."""
    gauge = _gauge_direction(list(pred.fields))
    if _dot(problem.grid, gauge, gauge) < 1e-28:
        gauge = _gauge_direction([np.ones(problem.grid.shape, complex)] * problem.n_components)
    state = pred
    lam = 0.0
    for it in range(25):
        res = residual(state)
        res = [r + lam * g for r, g in zip(res, gauge)]
        g_val = _dot(
            problem.grid, [s - r for s, r in zip(state.fields, pred.fields)], gauge
        )
        arc = (
            _dot(
                problem.grid,
                tangent[0],
                [s - p for s, p in zip(state.fields, pred.fields)],
            )
            + tangent[1] * (state.omega - pred.omega)
        )
        rn = np.sqrt(_dot(problem.grid, res, res) + g_val**2 + arc**2)
        if rn <= ct.newton_tol * (1.0 + state.l2_norm() ** 3):
            return state, it
        op = _BorderedOperator(state, gauge, tangent=tangent)
        rhs = _pack(res, np.array([g_val, arc]))
        step = op.solve(-rhs, rtol=1e-6)
        dfields, dex = _unpack(step, problem.grid, problem.n_components, 2)
        t = 1.0
        while t > 1e-3:
            trial_fields = [f + t * d for f, d in zip(state.fields, dfields)]
            trial = NlbState(
                problem=problem,
                fields=tuple(trial_fields),
                omega=state.omega + t * dex[1],
            )
            tlam = lam + t * dex[0]
            tres = residual(trial)
            tres = [r + tlam * g for r, g in zip(tres, gauge)]
            tg = _dot(
                problem.grid, [s - r for s, r in zip(trial.fields, pred.fields)], gauge
            )
            tarc = (
                _dot(
                    problem.grid,
                    tangent[0],
                    [s - p for s, p in zip(trial.fields, pred.fields)],
                )
                + tangent[1] * (trial.omega - pred.omega)
            )
            trn = np.sqrt(_dot(problem.grid, tres, tres) + tg**2 + tarc**2)
            if trn <= (1.0 - 0.25 * t) * rn:
                state, lam = trial, tlam
                break
            t *= 0.5
        else:
            raise NewtonFailure("corrector line search stalled")
    raise NewtonFailure("corrector did not converge")


def correction_error(state: NlbState, A, eps: float, s: float) -> float:
    """Component-summed H^s distance between the state and the leading-order
    ansatz eps * sum_j A_j xi_j (the quantity the cubic error law bounds)."""
    pb = state.problem
    total = 0.0
    for j in range(pb.n_components):
        f = state.fields[j].copy()
        if j < len(A):
            f = f - eps * A[j] * pb.modes[j].p.values
        total += sobolev_norm(
            ComplexField(pb.grid, f, k=tuple(pb.k_list()[j])), s
        )
    return float(total)


def save_state(state: NlbState, path: str):
    """Persist a state with enough metadata to restart (npz + embedded json)."""
    meta = {
        "omega": state.omega,
        "sigma": state.problem.sigma,
        "omega_star": state.problem.omega_star,
        "grid_dim": state.grid.dim,
        "grid_n": state.grid.n,
        "selection": state.problem.selection.to_text(),
    }
    arrays = {f"eta_{j}": np.asarray(f) for j, f in enumerate(state.fields)}
    np.savez(path, meta=json.dumps(meta), **arrays)


def load_state(path: str, problem: NlbProblem) -> NlbState:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    fields = [data[f"eta_{j}"] for j in range(problem.n_components)]
    if meta["grid_n"] != problem.grid.n or meta["grid_dim"] != problem.grid.dim:
        raise NlbError("stored state grid does not match problem grid")
    return NlbState(problem=problem, fields=tuple(fields), omega=float(meta["omega"]))
