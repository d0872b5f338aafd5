"""Command-line front end: reproducible experiment runs from config files.

Each subcommand loads a key=value config (see config.py), executes the
pipeline, and writes CSV/JSON artifacts plus a manifest recording the config
hash, package version, wall time, and a checksum for every output file.
Identical configs and seeds give byte-identical CSV output on one platform.

Exit codes: 0 success, 1 verification mismatch, 2 config/validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__, acme, bloch, convergence, dynamics, line1d, nlb
from .config import ConfigError, RunConfig, load_config, parse_config
from .grid import TorusGrid
from .modeset import ModeSelection, check_assumptions
from .potentials import (
    SIN2_SCALE,
    PotentialSpec,
    sample_potential,
    sin2_native,
)

KINDS = [
    "bands",
    "levelset",
    "modeset",
    "acme",
    "nlb-continue",
    "converge",
    "line-continue",
    "evolve",
]


class NumericalFailure(RuntimeError):
    pass


def _resolve_potential(cfg: RunConfig):
    name = cfg["potential"]
    if name == "cosine":
        spec = PotentialSpec("cosine", {"amplitude": cfg["amplitude"]})
    else:
        spec = PotentialSpec(name)
    dim = spec.dim or (cfg["dim"] or 1)
    return spec, dim


def _grid(cfg: RunConfig, dim: int) -> TorusGrid:
    n = cfg["grid_n"] or (1024 if dim == 1 else 64)
    return TorusGrid(dim, n)


def _cutoff(cfg: RunConfig):
    return cfg["cutoff"] or None


def _selection_and_modes(cfg: RunConfig, spec, grid):
    stars = list(cfg["stars"])
    bands = list(cfg["star_bands"])
    if not stars or len(stars) != len(bands):
        raise ConfigError("stars and star_bands must be set and equally long")
    sel = ModeSelection.build(0.0, stars, bands)
    modes = acme.modes_for_selection(spec, grid, sel, cutoff=_cutoff(cfg))
    omega_star = float(np.mean([m.omega for m in modes]))
    sel = ModeSelection.build(omega_star, stars, bands)
    return sel, modes, omega_star


def _write(outdir: str, name: str, text: str, files: dict):
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    files[name] = hashlib.sha256(text.encode()).hexdigest()


def _write_json(outdir: str, name: str, payload: dict, files: dict):
    _write(outdir, name, json.dumps(payload, indent=1, sort_keys=True) + "\n", files)


def _run_bands(cfg, outdir, files):
    spec, dim = _resolve_potential(cfg)
    grid = _grid(cfg, dim)
    if cfg["k_path"]:
        corners = [c.strip() for c in cfg["k_path"].split(",")]
        ks = bloch.k_path(corners, per_segment=cfg["k_per_segment"], dim=dim)
    else:
        per_axis = cfg["k_grid_per_axis"] or 8
        ks = bloch.k_grid(dim, per_axis)
    bs = bloch.band_structure(
        spec, grid, ks, cfg["n_bands"], cutoff=_cutoff(cfg), refine=cfg["refine"]
    )
    edges, intervals = bloch.band_edges(bs)
    _write(outdir, "bands.csv", bs.to_csv(), files)
    lines = ["edge,omega" + (",omega_native" if spec.family == "sin2_1d" else "")]
    for i, e in enumerate(edges, start=1):
        row = f"s{i},{e!r}"
        if spec.family == "sin2_1d":
            row += f",{e / SIN2_SCALE!r}"
        lines.append(row)
    _write(outdir, "edges.csv", "\n".join(lines) + "\n", files)
    summary = {"edges": edges, "intervals": intervals}
    if spec.family == "sin2_1d":
        summary["edges_native"] = [e / SIN2_SCALE for e in edges]
        for i, e in enumerate(summary["edges_native"][:8], start=1):
            summary[f"s{i}_native"] = e
    _write_json(outdir, "summary.json", summary, files)


def _run_levelset(cfg, outdir, files):
    spec, dim = _resolve_potential(cfg)
    grid = _grid(cfg, dim)
    ks = bloch.k_grid(dim, cfg["k_grid_per_axis"])
    bs = bloch.band_structure(spec, grid, ks, cfg["n_bands"], cutoff=_cutoff(cfg))
    solver_args = (
        {"potential": spec, "grid": grid, "cutoff": _cutoff(cfg)}
        if cfg["refine_roots"]
        else None
    )
    pts = bloch.level_set(bs, cfg["omega_star"], cfg["tol"], solver_args=solver_args)
    _write(outdir, "levelset.csv", bloch.level_set_to_csv(pts), files)
    _write_json(
        outdir,
        "summary.json",
        {
            "count": len(pts),
            "points": [{"k": list(p.k), "n": p.n, "omega": p.omega} for p in pts],
        },
        files,
    )


def _run_modeset(cfg, outdir, files):
    spec, dim = _resolve_potential(cfg)
    grid = _grid(cfg, dim)
    sel, modes, omega_star = _selection_and_modes(cfg, spec, grid)
    closure_ks = [p.as_floats() for p in sel.closure]
    bs = bloch.band_structure(spec, grid, closure_ks, cfg["n_bands"], cutoff=_cutoff(cfg))
    report = check_assumptions(bs, sel, tol=cfg["tol"])
    _write(outdir, "selection.txt", sel.to_text(), files)
    _write_json(
        outdir,
        "summary.json",
        {
            "omega_star": omega_star,
            "N": sel.n_stars,
            "M": sel.n_closure,
            "consistent": sel.consistent,
            "pairing": list(sel.pairing),
            "h2": report.h2,
            "h3": report.h3,
            "h4": report.h4,
            "h5": report.h5,
            "h6": report.h6,
            "all_pass": report.all_pass,
            "details": list(report.details),
        },
        files,
    )


def _acme_summary(system, solutions, omega_star):
    summary = {
        "omega_star": omega_star,
        "sigma": system.sigma,
        "Omega": system.Omega,
        "mu_1111": system.mu[(0, 0, 0, 0)].real,
        "reversal_defect": system.reversal_symmetry_defect(),
    }
    if system.n == 2:
        summary["mu_1221"] = abs(system.mu[(0, 1, 1, 0)])
        if (1, 0, 1, 0) in system.mu:
            summary["abs_mu_2121"] = abs(system.mu[(1, 0, 1, 0)])
    reversible = [s for s in solutions if s.reversible]
    if reversible:
        best = reversible[0]
        summary["abs_A"] = float(np.abs(best.A[0]))
        summary["jacobian_eigenvalues"] = list(best.jacobian_eigenvalues)
        summary["nondegenerate"] = best.nondegenerate
    summary["n_solutions"] = len(solutions)
    return summary


def _build_acme(cfg):
    spec, dim = _resolve_potential(cfg)
    grid = _grid(cfg, dim)
    sel, modes, omega_star = _selection_and_modes(cfg, spec, grid)
    system = acme.AcmeSystem.build(modes, sel, sigma=cfg["sigma"], Omega=cfg["Omega"])
    return spec, grid, sel, modes, omega_star, system


def _acme_solutions(system, seed_count=8):
    if system.n == 1:
        A = acme.solve_scalar(
            system.mu[(0, 0, 0, 0)].real, system.sigma, system.Omega
        )
        return [acme.certify(A, system, label="scalar")] if A is not None else []
    if system.n == 2:
        return acme.solve_two_mode(system)
    return acme.solve_general_newton(system, seed_count=seed_count)


def _run_acme(cfg, outdir, files):
    spec, grid, sel, modes, omega_star, system = _build_acme(cfg)
    sols = _acme_solutions(system, seed_count=cfg["newton_seeds"])
    _write(outdir, "mu.json", system.mu_to_json() + "\n", files)
    _write(
        outdir,
        "solutions.json",
        json.dumps([json.loads(s.to_json()) for s in sols], indent=1) + "\n",
        files,
    )
    _write_json(outdir, "summary.json", _acme_summary(system, sols, omega_star), files)


def _reversible_amplitude(system, sols):
    rev = [s for s in sols if s.reversible and s.nondegenerate]
    if not rev:
        raise NumericalFailure("no reversible non-degenerate ACME solution")
    return rev[0]


def _run_nlb_continue(cfg, outdir, files):
    spec, grid, sel, modes, omega_star, system = _build_acme(cfg)
    sol = _reversible_amplitude(system, _acme_solutions(system))
    V = sample_potential(spec, grid)
    problem = nlb.NlbProblem.build(sel, modes, V, sigma=cfg["sigma"])
    guess = nlb.asymptotic_guess(problem, sol.A, cfg["eps_seed"], cfg["Omega"])
    seed_state = nlb.newton_solve(problem, guess, tol=cfg["newton_tol"])
    controls = nlb.StepControls(
        ds=cfg["ds"],
        max_steps=cfg["max_steps"],
        omega_min=cfg["omega_min"],
        omega_max=cfg["omega_max"],
        newton_tol=cfg["newton_tol"],
    )
    branch = nlb.continue_branch(problem, seed_state, cfg["direction"], controls)
    _write(outdir, "branch.csv", branch.to_csv(), files)
    final = branch.points[-1].state
    nlb.save_state(final, os.path.join(outdir, "state.npz"))
    with open(os.path.join(outdir, "state.npz"), "rb") as fh:
        files["state.npz"] = hashlib.sha256(fh.read()).hexdigest()
    _write_json(
        outdir,
        "summary.json",
        {
            "omega_star": omega_star,
            "abs_A": float(np.abs(sol.A[0])),
            "status": branch.status,
            "n_points": len(branch.points),
            "folds": branch.folds,
            "final_omega": branch.points[-1].omega,
            "final_norm": branch.points[-1].norm,
            "reversibility_defect": final.reversibility_defect(),
        },
        files,
    )


def _run_converge(cfg, outdir, files):
    spec, grid, sel, modes, omega_star, system = _build_acme(cfg)
    sol = _reversible_amplitude(system, _acme_solutions(system))
    V = sample_potential(spec, grid)
    problem = nlb.NlbProblem.build(sel, modes, V, sigma=cfg["sigma"])
    s = cfg["sobolev_s"] or (1.0 if grid.dim == 1 else 2.0)
    sweep = convergence.epsilon_sweep(
        problem,
        sol.A,
        list(cfg["eps_list"]),
        s=s,
        Omega=cfg["Omega"],
        newton_tol=cfg["newton_tol"],
    )
    _write(outdir, "sweep.csv", sweep.to_csv(), files)
    _write(outdir, "fit.json", sweep.fit_json() + "\n", files)
    summary = {
        "omega_star": omega_star,
        "mu_1111": system.mu[(0, 0, 0, 0)].real,
        "abs_A": float(np.abs(sol.A[0])),
        "fitted_rate": sweep.fitted_rate,
        "fit_residual": sweep.fit_residual,
        "sobolev_s": s,
        "monotone": sweep.monotone_in_regime(),
    }
    if cfg["branch_steps"]:
        seed_state = nlb.newton_solve(
            problem,
            nlb.asymptotic_guess(problem, sol.A, max(cfg["eps_list"]) / 2, cfg["Omega"]),
        )
        branch = nlb.continue_branch(
            problem,
            seed_state,
            cfg["Omega"],
            nlb.StepControls(ds=cfg["branch_ds"], max_steps=cfg["branch_steps"]),
        )
        _write(outdir, "branch.csv", branch.to_csv(), files)
        summary["branch_points"] = len(branch.points)
        summary["branch_final_norm"] = branch.points[-1].norm
    _write_json(outdir, "summary.json", summary, files)


def _run_line_continue(cfg, outdir, files):
    grid = line1d.LineGrid(half_width=cfg["half_width"], n=cfg["line_n"])
    if cfg["guess"] == "sech":
        guess = line1d.sech_guess(
            cfg["guess_a"], cfg["guess_w"], grid, omega=cfg["omega0"], sigma=cfg["sigma"]
        )
    elif cfg["guess"] == "modulated":
        guess = line1d.modulated_guess(
            cfg["guess_a"],
            cfg["guess_w"],
            grid,
            omega=cfg["omega0"],
            sigma=cfg["sigma"],
            wavenumber=cfg["guess_wavenumber"],
        )
    else:
        raise ConfigError(f"unknown guess kind {cfg['guess']!r}")
    prof = line1d.solve_line(sin2_native, cfg["omega0"], cfg["sigma"], guess)
    # spectral edges for band-entry flags, from the canonical-cell solver
    pot = PotentialSpec("sin2_1d")
    modes = bloch.solve_bloch(pot, TorusGrid(1, 256), (0.0,), 6)
    edges = [m.omega / SIN2_SCALE for m in modes]
    controls = nlb.StepControls(
        ds=cfg["ds"],
        ds_max=cfg["ds_max"],
        max_steps=cfg["max_steps"],
        omega_min=cfg["omega_min"],
        omega_max=cfg["omega_max"],
    )
    branch = line1d.continue_line(
        prof, cfg["direction"], controls, V=sin2_native, edges=edges
    )
    _write(outdir, "branch.csv", branch.to_csv(), files)
    if cfg["snapshot_stride"]:
        for i in range(0, len(branch.points), cfg["snapshot_stride"]):
            _write(
                outdir,
                f"profile_{i:04d}.csv",
                line1d.profile_to_csv(branch.points[i].state),
                files,
            )
    _write_json(
        outdir,
        "summary.json",
        {
            "status": branch.status,
            "n_points": len(branch.points),
            "folds": branch.folds,
            "band_entries": branch.band_entries,
            "final_omega": branch.points[-1].omega,
            "final_norm": branch.points[-1].norm,
            "edges_native": edges[:6],
        },
        files,
    )


def _run_evolve(cfg, outdir, files):
    pot = PotentialSpec("sin2_1d")
    cell = TorusGrid(1, cfg["box_n"])
    Vr = sample_potential(pot, cell)
    modes = bloch.solve_bloch(pot, cell, (0.0,), cfg["band"])
    mode = modes[cfg["band"] - 1]
    sel = ModeSelection.build(mode.omega, [("0",)], [cfg["band"]])
    system = acme.AcmeSystem.build([mode], sel, sigma=cfg["sigma"], Omega=1)
    A = acme.solve_scalar(system.mu[(0, 0, 0, 0)].real, cfg["sigma"], 1)
    if A is None:
        raise NumericalFailure("no bifurcating wave on this side for this sigma")
    omega_rescaled = cfg["omega"] * SIN2_SCALE
    if omega_rescaled <= mode.omega:
        raise NumericalFailure("omega must lie above the band edge for this family")
    eps = float(np.sqrt(omega_rescaled - mode.omega))
    problem = nlb.NlbProblem.build(sel, [mode], Vr, sigma=cfg["sigma"])
    state = nlb.newton_solve(problem, nlb.asymptotic_guess(problem, A, eps, 1))
    steady = state.fields[0].real / np.sqrt(SIN2_SCALE)
    box = dynamics.PeriodicBox(half_width=cfg["box_half_width"], n=cfg["box_n"])
    Vbox = sin2_native(box.x)
    if cfg["perturb"]:
        run = dynamics.stability_experiment(
            steady.astype(complex),
            box,
            Vbox,
            cfg["sigma"],
            cfg["omega"],
            rel_amp=cfg["rel_amp"],
            T=cfg["T"],
            dt=cfg["dt"],
            seed=cfg["seed"],
            stride=cfg["stride"],
        )
    else:
        run = dynamics.split_step(
            steady.astype(complex),
            box,
            Vbox,
            cfg["sigma"],
            cfg["omega"],
            cfg["dt"],
            cfg["T"],
            stride=cfg["stride"],
            seed=cfg["seed"],
        )
    _write(outdir, "series.csv", run.to_csv(), files)
    _write(outdir, "run.json", run.metadata_json() + "\n", files)
    _write_json(
        outdir,
        "summary.json",
        {
            "omega": cfg["omega"],
            "verdict": run.verdict,
            "mass_drift": run.mass_drift(),
            "max_shape_error": float(np.max(run.shape_error)),
            "stable": run.verdict.startswith("no growth"),
        },
        files,
    )


_RUNNERS = {
    "bands": _run_bands,
    "levelset": _run_levelset,
    "modeset": _run_modeset,
    "acme": _run_acme,
    "nlb-continue": _run_nlb_continue,
    "converge": _run_converge,
    "line-continue": _run_line_continue,
    "evolve": _run_evolve,
}


def bundled_config_path(name: str):
    ref = resources.files("blochforge").joinpath("configs", f"{name}.cfg")
    return ref if ref.is_file() else None


def _load(cfg_arg: str) -> RunConfig:
    if os.path.exists(cfg_arg):
        return load_config(cfg_arg)
    bundled = bundled_config_path(cfg_arg)
    if bundled is not None:
        return parse_config(bundled.read_text())
    raise ConfigError(f"config {cfg_arg!r} is neither a file nor a bundled name")


def run(cfg: RunConfig, outdir: str) -> dict:
    """Execute one experiment; returns the manifest dict (also written)."""
    os.makedirs(outdir, exist_ok=True)
    files: dict = {}
    t0 = time.time()
    _RUNNERS[cfg.kind](cfg, outdir, files)
    manifest = {
        "kind": cfg.kind,
        "config_hash": cfg.content_hash(),
        "version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
        "files": files,
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def verify(outdir: str, reference_path: str):
    """Compare a run's summary.json against reference values with per-field
    tolerances.  Returns (passed, report_lines)."""
    lines = []
    try:
        with open(reference_path, "r", encoding="utf-8") as fh:
            reference = json.load(fh)
    except OSError as exc:
        return False, [f"FAIL: cannot read reference: {exc}"]
    summary_path = os.path.join(outdir, "summary.json")
    try:
        with open(summary_path, "r", encoding="utf-8") as fh:
            summary = json.load(fh)
    except OSError as exc:
        return False, [f"FAIL: cannot read run summary: {exc}"]
    passed = True
    for key, spec in sorted(reference.items()):
        node = summary
        ok_path = True
        for part in key.split("."):
            if isinstance(node, dict) and part in node:
                node = node[part]
            else:
                ok_path = False
                break
        if not ok_path:
            lines.append(f"FAIL {key}: missing from summary")
            passed = False
            continue
        want, tol = spec["value"], spec["tol"]
        if isinstance(want, bool) or isinstance(node, bool):
            ok = bool(node) == bool(want)
            lines.append(f"{'PASS' if ok else 'FAIL'} {key}: {node} (want {want})")
        else:
            diff = abs(float(node) - float(want))
            ok = diff <= tol
            lines.append(
                f"{'PASS' if ok else 'FAIL'} {key}: {node} (want {want} +- {tol}, "
                f"diff {diff:.3g})"
            )
        passed = passed and ok
    return passed, lines


def _out_dir(args, cfg) -> str:
    return (
        args.out
        or cfg["out_dir"]
        or os.environ.get("BLOCHFORGE_OUT")
        or os.getcwd()
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blochforge",
        description="Band structures, coupled mode equations, and nonlinear "
        "Bloch wave continuation for the GP equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS + ["verify"]:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="config file or bundled name")
        p.add_argument("--out", default="", help="output directory")
        p.add_argument("--threads", type=int, default=0, help="cap worker threads")
        p.add_argument("--seed", type=int, default=None, help="random seed override")
        if kind == "verify":
            p.add_argument("--reference", required=True, help="reference JSON")
    args = parser.parse_args(argv)

    try:
        cfg = _load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command != "verify" and cfg.kind != args.command:
        print(
            f"config error: config kind {cfg.kind!r} does not match "
            f"subcommand {args.command!r}",
            file=sys.stderr,
        )
        return 2
    if args.seed is not None:
        cfg = RunConfig(kind=cfg.kind, values={**cfg.values, "seed": args.seed})
    outdir = _out_dir(args, cfg)

    if args.command == "verify":
        passed, lines = verify(outdir, args.reference)
        print("\n".join(lines))
        print("VERIFY:", "PASS" if passed else "FAIL")
        return 0 if passed else 1

    threads = args.threads or cfg["threads"]
    try:
        if threads:
            try:
                from threadpoolctl import threadpool_limits
            except ImportError:
                threadpool_limits = None
            if threadpool_limits is not None:
                with threadpool_limits(limits=threads):
                    run(cfg, outdir)
            else:
                run(cfg, outdir)
        else:
            run(cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "error.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
