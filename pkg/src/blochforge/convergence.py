"""Numerical verification of the cubic error law of the asymptotic expansion.

For a certified amplitude vector A the wave solved at omega = omega* +
eps^2 Omega should differ from the leading-order ansatz eps sum A_j xi_j by
O(eps^3) in H^s, s > d/2.  An epsilon sweep solves the stationary problem
from the asymptotic guess over a decreasing eps list, measures the
component-summed H^s error, and fits the log-log slope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nlb


class ConvergenceError(RuntimeError):
    pass


def fit_rate(eps, errors):
    """Least-squares slope of log(error) against log(eps).

    Returns (slope, residual) with residual the root-mean-square misfit of
    the fitted line.  Raises on non-positive inputs.
    """
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.size < 2:
        raise ConvergenceError("need at least two points to fit a rate")
    if np.any(eps <= 0) or np.any(errors <= 0):
        raise ConvergenceError("rate fit requires positive eps and errors")
    x, y = np.log(eps), np.log(errors)
    coeffs = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y) ** 2)))
    return float(coeffs[0]), resid


@dataclass(frozen=True)
class SweepResult:
    epsilons: tuple
    errors: tuple
    fitted_rate: float
    fit_residual: float
    omegas: tuple
    s: float

    def __post_init__(self):
        eps = np.asarray(self.epsilons)
        if np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
            raise ConvergenceError("epsilon list must be strictly decreasing, positive")
        if len(self.epsilons) < 4:
            raise ConvergenceError("a sweep needs at least 4 converged points")

    def monotone_in_regime(self) -> bool:
        """Error at eps bounded by error at the next larger eps; failures
        mean some eps lie outside the asymptotic regime."""
        return bool(np.all(np.diff(np.asarray(self.errors)) <= 0))

    def to_csv(self) -> str:
        lines = ["eps,error,omega"]
        for e, err, om in zip(self.epsilons, self.errors, self.omegas):
            lines.append(f"{e!r},{err!r},{om!r}")
        return "\n".join(lines) + "\n"

    def fit_json(self) -> str:
        return json.dumps(
            {
                "fitted_rate": self.fitted_rate,
                "fit_residual": self.fit_residual,
                "s": self.s,
                "points": len(self.epsilons),
                "monotone": self.monotone_in_regime(),
            },
            indent=1,
        )


def epsilon_sweep(
    problem: nlb.NlbProblem,
    A,
    eps_list,
    s: float,
    Omega: int,
    newton_tol: float = 1e-11,
) -> SweepResult:
    """Solve at omega* + eps^2 Omega for each eps and fit the error rate.

    Newton failures shrink the usable list; fewer than 4 successes aborts.
    A sweep whose errors sit at discretization-noise level (the linear
    problem solved exactly) is rejected as degenerate rather than fitted.
    """
    eps_list = sorted(set(float(e) for e in eps_list), reverse=True)
    eps_ok, errors, omegas = [], [], []
    for eps in eps_list:
        guess = nlb.asymptotic_guess(problem, A, eps, Omega)
        try:
            sol = nlb.newton_solve(problem, guess, tol=newton_tol)
        except nlb.NlbError:
            continue
        eps_ok.append(eps)
        errors.append(nlb.correction_error(sol, A, eps, s))
        omegas.append(sol.omega)
    if len(eps_ok) < 4:
        raise ConvergenceError(
            f"only {len(eps_ok)} of {len(eps_list)} eps values converged"
        )
    if max(errors) <= 1e-10:
        raise ConvergenceError(
            "errors are at discretization noise level; rate fit is degenerate"
        )
    rate, resid = fit_rate(eps_ok, errors)
    return SweepResult(
        epsilons=tuple(eps_ok),
        errors=tuple(errors),
        fitted_rate=rate,
        fit_residual=resid,
        omegas=tuple(omegas),
        s=float(s),
    )
