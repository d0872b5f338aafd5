"""Shared fixtures.  The expensive objects (2D eigenpairs, 1D branches) are
session-scoped so the acceptance tests and the module tests reuse them."""

import numpy as np
import pytest

from blochforge import acme, bloch, line1d, nlb
from blochforge.grid import TorusGrid
from blochforge.modeset import ModeSelection
from blochforge.potentials import (
    SIN2_SCALE,
    PotentialSpec,
    sample_potential,
    sin2_native,
)


class Bundle(dict):
    __getattr__ = dict.__getitem__


@pytest.fixture(scope="session")
def pot2d():
    return PotentialSpec("smoothed_square_2d")


@pytest.fixture(scope="session")
def grid128():
    return TorusGrid(2, 128)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(2, 64)


def _example(pot, grid, stars, bands):
    sel = ModeSelection.build(0.0, stars, bands)
    modes = acme.modes_for_selection(pot, grid, sel)
    omega = float(np.mean([m.omega for m in modes]))
    sel = ModeSelection.build(omega, stars, bands)
    sys_mm = acme.AcmeSystem.build(modes, sel, sigma=-1, Omega=-1)
    sys_pp = acme.AcmeSystem.build(modes, sel, sigma=1, Omega=1)
    return Bundle(
        selection=sel, modes=modes, omega_star=omega, sys_mm=sys_mm, sys_pp=sys_pp
    )


@pytest.fixture(scope="session")
def example_a(pot2d, grid128):
    return _example(pot2d, grid128, [("1/2", "1/2")], [1])


@pytest.fixture(scope="session")
def example_b(pot2d, grid128):
    return _example(pot2d, grid128, [("1/2", "0"), ("0", "1/2")], [2, 2])


@pytest.fixture(scope="session")
def example_c(pot2d, grid128):
    return _example(pot2d, grid128, [("1/4", "1/4"), ("-1/4", "-1/4")], [1, 1])


@pytest.fixture(scope="session")
def sin2_cell():
    """Canonical-cell data for the 1D sin^2 lattice: the first six
    eigenpairs at k=0 (whose eigenvalues are the spectral edges) and the
    native-unit edge values."""
    pot = PotentialSpec("sin2_1d")
    grid = TorusGrid(1, 256)
    modes = bloch.solve_bloch(pot, grid, (0.0,), 6)
    edges = [m.omega / SIN2_SCALE for m in modes]
    return Bundle(
        pot=pot,
        grid=grid,
        V=sample_potential(pot, grid),
        modes=modes,
        edges_native=edges,
    )


@pytest.fixture(scope="session")
def s3_plus(sin2_cell):
    """The wave family bifurcating right from the third spectral edge
    (sigma=1), with converged states at native omega 0.76 and 0.9."""
    mode = sin2_cell.modes[2]
    sel = ModeSelection.build(mode.omega, [("0",)], [3])
    system = acme.AcmeSystem.build([mode], sel, sigma=1, Omega=1)
    A = acme.solve_scalar(system.mu[(0, 0, 0, 0)].real, 1, 1)
    problem = nlb.NlbProblem.build(sel, [mode], sin2_cell.V, sigma=1)

    def state_at(omega_native):
        eps = float(np.sqrt(omega_native * SIN2_SCALE - mode.omega))
        return nlb.newton_solve(
            problem, nlb.asymptotic_guess(problem, A, eps, 1), tol=1e-11
        )

    return Bundle(
        mode=mode,
        selection=sel,
        system=system,
        A=A,
        problem=problem,
        state_at=state_at,
        state_076=state_at(0.76),
        state_090=state_at(0.9),
    )


@pytest.fixture(scope="session")
def line_grid():
    return line1d.LineGrid(half_width=100.0, n=4096)


@pytest.fixture(scope="session")
def gs_branch(line_grid, sin2_cell):
    """On-site gap soliton, from the broad single-hump guess at omega=0.5,
    continued up through the gap and past the third edge (into the second
    band), plus the profile re-solved exactly at s3 + 0.01."""
    s3 = sin2_cell.edges_native[2]
    guess = line1d.sech_guess(0.5, 50.0, line_grid, omega=0.5, sigma=1)
    gs = line1d.solve_line(sin2_native, 0.5, 1, guess)
    controls = nlb.StepControls(
        ds=0.02, ds_max=0.05, max_steps=120, omega_max=s3 + 0.012
    )
    branch = line1d.continue_line(
        gs, +1, controls, edges=sin2_cell.edges_native
    )
    target = s3 + 0.01
    ogs = line1d.solve_line(sin2_native, target, 1, branch.points[-1].state)
    return Bundle(gs=gs, branch=branch, ogs=ogs, omega_ogs=target, s3=s3)


@pytest.fixture(scope="session")
def tnlb_branch(line_grid, sin2_cell):
    """Three-hump truncated wave at omega=0.5 (broad envelope seed covering
    three lattice wells), continued downward toward the second edge."""
    guess = line1d.modulated_guess(0.45, 8.0, line_grid, omega=0.5, sigma=1)
    tnlb = line1d.solve_line(sin2_native, 0.5, 1, guess)
    controls = nlb.StepControls(ds=0.02, ds_max=0.05, max_steps=150, omega_min=0.26)
    branch = line1d.continue_line(
        tnlb, -1, controls, edges=sin2_cell.edges_native
    )
    return Bundle(tnlb=tnlb, branch=branch, s2=sin2_cell.edges_native[1])
