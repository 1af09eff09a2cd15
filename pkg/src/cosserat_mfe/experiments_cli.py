"""Configuration-driven experiment runner and command-line interface.

Subcommands:
  run         execute a convergence / incompressibility / degenerate-material
              experiment described by a TOML config file
  properties  run the library's invariant checks and print pass/fail
  rates       print convergence rates from a previously written CSV

Exit codes: 0 success, 1 solve failure, 2 configuration error.
"""

import argparse
import concurrent.futures
import csv
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import error_norms, infsup_constant, lemma47_ratio, rate_table
from .assembly import (DiscreteProblem, assemble_coupling, assemble_mass,
                       assemble_rhs, assemble_sl_gram, assemble_u_mass)
from .cosserat_core import LengthField, MaterialModel
from .manufactured import ExactSolution
from .mesh import structured_simplicial
from .solver import solve_direct, solve_minres

FAMILIES = ("SC-RT", "SC-BDM", "WC-RT", "WC-BDM")
EXPERIMENTS = ("convergence", "incompressible", "degenerate", "properties")

CSV_COLUMNS = ("experiment", "family", "dim", "k", "n", "h", "ell",
               "lambda_sigma", "n_dofs", "err_sigma_l2", "err_sigma_hdiv",
               "err_omega_l2", "err_omega_hdivl", "err_u_l2", "err_r_l2",
               "err_u_proj", "err_r_proj", "err_composite", "err_improved",
               "solver_iters", "solve_seconds")

RATE_NORMS = ("err_sigma_hdiv", "err_omega_hdivl", "err_u_l2", "err_r_l2",
              "err_u_proj", "err_composite", "err_improved")


class ConfigError(Exception):
    pass


class SolveFailure(Exception):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    dim: int = 2
    k: int = 0
    families: tuple = FAMILIES
    mesh_levels: tuple = (4, 8, 16)
    ell: object = 1.0
    lambda_sigma: float = 1.0
    solver: str = "direct"
    output_dir: str = "."
    jobs: int = 1


def load_config(path):
    """Parse and validate a TOML experiment configuration."""
    import tomli
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in raw:
        raise ConfigError("missing required key: experiment")
    cfg = ExperimentConfig(**raw)
    return validate_config(cfg)


def validate_config(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if cfg.dim not in (2, 3):
        raise ConfigError("dim must be 2 or 3")
    if cfg.k not in (0, 1):
        raise ConfigError("k must be 0 or 1")
    cfg.families = tuple(cfg.families)
    bad = [f for f in cfg.families if f not in FAMILIES]
    if bad:
        raise ConfigError(f"unknown families: {bad}")
    cfg.mesh_levels = tuple(int(n) for n in cfg.mesh_levels)
    if not cfg.mesh_levels or any(n < 1 for n in cfg.mesh_levels):
        raise ConfigError("mesh_levels must be positive integers")
    if cfg.solver not in ("direct", "minres"):
        raise ConfigError("solver must be 'direct' or 'minres'")
    if cfg.experiment == "degenerate":
        if cfg.ell != "eq5.5":
            raise ConfigError("degenerate experiment requires ell = 'eq5.5'")
        if not set(cfg.families) <= {"WC-RT", "WC-BDM"}:
            raise ConfigError("degenerate experiment supports only the "
                              "weakly coupled families")
        if any(n % 3 for n in cfg.mesh_levels):
            raise ConfigError("degenerate experiment needs mesh levels "
                              "divisible by 3")
    elif cfg.ell == "eq5.5":
        raise ConfigError("spatially varying ell is only supported by the "
                          "degenerate experiment")
    elif not (isinstance(cfg.ell, (int, float)) and 0 <= cfg.ell <= 1):
        raise ConfigError("ell must be a number in [0, 1] or 'eq5.5'")
    if not isinstance(cfg.lambda_sigma, (int, float)) or cfg.lambda_sigma < 0:
        raise ConfigError("lambda_sigma must be a nonnegative number")
    if not isinstance(cfg.jobs, int) or cfg.jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    return cfg


def default_material(dim, ell, lambda_sigma=1.0):
    """Reference isotropic parameters: mu = lambda_omega = 1 and couple
    moduli 1/10 for both laws."""
    return MaterialModel(mu=1.0, lambda_sigma=lambda_sigma, mu_c_sigma=0.1,
                         lambda_omega=1.0, mu_c_omega=0.1, ell=ell, dim=dim)


def manufactured_solution(dim, case, material=None):
    """Exact field bundle for the smooth or divergence-free solution."""
    if material is None:
        material = default_material(dim, 1.0)
    return ExactSolution(material, case)


@dataclass
class ExperimentReport:
    csv_path: str
    plot_paths: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    region_maxima: list = field(default_factory=list)


def _solve_one(cfg, family, n, material, exact):
    """Build, assemble, and solve one (family, level) point; returns a
    CSV row dict (plus the omega region report for the degenerate case)."""
    fam, kind = family.split("-")
    mesh = structured_simplicial(cfg.dim, n)
    problem = DiscreteProblem(mesh, fam, cfg.k, kind, material)
    mass = assemble_mass(problem)
    coupling = assemble_coupling(problem)
    rhs = assemble_rhs(problem, exact.f_u, exact.f_r)
    t0 = time.perf_counter()
    try:
        if cfg.solver == "direct":
            p, u, report = solve_direct(mass, coupling, rhs)
        else:
            p_pc = mass + assemble_sl_gram(problem)
            u_pc = assemble_u_mass(problem)
            p, u, report = solve_minres(mass, coupling, rhs, p_pc, u_pc)
    except Exception as exc:
        raise SolveFailure(f"{family} n={n}: {exc}")
    seconds = time.perf_counter() - t0
    z = np.concatenate([p, u])
    errs = error_norms(problem, z, exact)
    row = {
        "experiment": cfg.experiment, "family": family, "dim": cfg.dim,
        "k": cfg.k, "n": n, "h": repr(mesh.h), "ell": cfg.ell,
        "lambda_sigma": repr(float(cfg.lambda_sigma)),
        "n_dofs": problem.n_dofs,
        "solver_iters": report.iterations,
        "solve_seconds": f"{seconds:.3f}",
    }
    for name in CSV_COLUMNS:
        if name.startswith("err_"):
            row[name] = repr(errs[name])
    region = None
    if cfg.experiment == "degenerate":
        region = _omega_region_report(problem, z)
    return row, region


def _omega_region_report(problem, z):
    """Max |omega~_h| over the pure-elasticity region max_i(x_i) <= 1/3,
    and over the whole domain, sampled at quadrature points."""
    from .quadrature import simplex_rule
    pts, _ = simplex_rule(problem.mesh.dim, 6)
    blocks = problem.split(z)
    region_max, global_max = 0.0, 0.0
    for cells in problem.cell_chunks():
        y = problem.omega_space.physical_points(pts, cells)
        vals, _ = problem.eval_omega(blocks, pts, cells)
        mag = np.sqrt(np.sum(vals ** 2, axis=tuple(range(2, vals.ndim))))
        inside = np.max(y, axis=2) <= 1.0 / 3.0 + 1e-12
        global_max = max(global_max, float(mag.max()))
        if inside.any():
            region_max = max(region_max, float(mag[inside].max()))
    return {"n": problem.mesh.n, "region_max": region_max,
            "global_max": global_max}


def run_experiment(cfg):
    """Execute the configured sweep; writes CSV and SVG files."""
    if cfg.experiment == "properties":
        failures = run_property_suite()
        if failures:
            raise SolveFailure(f"{failures} property check(s) failed")
        return ExperimentReport(csv_path="")
    case = "divfree" if cfg.experiment == "incompressible" else "smooth"
    ell = LengthField(composite=True) if cfg.ell == "eq5.5" else float(cfg.ell)
    material = default_material(cfg.dim, ell, float(cfg.lambda_sigma))
    exact = ExactSolution(material, case)

    points = [(family, n) for family in cfg.families for n in cfg.mesh_levels]
    results = {}
    if cfg.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(cfg.jobs) as pool:
            futs = {pool.submit(_solve_one, cfg, fam, n, material, exact): (fam, n)
                    for fam, n in points}
            for fut in concurrent.futures.as_completed(futs):
                results[futs[fut]] = fut.result()
    else:
        for fam, n in points:
            results[(fam, n)] = _solve_one(cfg, fam, n, material, exact)

    os.makedirs(cfg.output_dir, exist_ok=True)
    stem = f"{cfg.experiment}_dim{cfg.dim}_k{cfg.k}"
    csv_path = os.path.join(cfg.output_dir, stem + ".csv")
    report = ExperimentReport(csv_path=csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS,
                                extrasaction="ignore")
        writer.writeheader()
        for fam, n in points:  # deterministic order regardless of jobs
            row, region = results[(fam, n)]
            writer.writerow(row)
            report.rows.append(row)
            if region is not None:
                region["family"] = fam
                report.region_maxima.append(region)

    for fam in cfg.families:
        hs = [float(results[(fam, n)][0]["h"]) for n in cfg.mesh_levels]
        errs = {name: [float(results[(fam, n)][0][name])
                       for n in cfg.mesh_levels] for name in RATE_NORMS}
        if len(hs) >= 2:
            report.rates[fam] = rate_table(hs, errs)
    plot = _plot_rates(cfg, results, os.path.join(cfg.output_dir,
                                                  stem + ".svg"))
    if plot:
        report.plot_paths.append(plot)
    for region in report.region_maxima:
        rel = (region["region_max"] / region["global_max"]
               if region["global_max"] else 0.0)
        print(f"{region['family']} n={region['n']}: max |omega~_h| on "
              f"max_i(x_i) <= 1/3 is {region['region_max']:.3e} "
              f"({rel:.3e} x global max {region['global_max']:.3e})")
    return report


def _plot_rates(cfg, results, path):
    """Log-log composite-error plot with a reference slope triangle."""
    if len(cfg.mesh_levels) < 2:
        return None
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    hs = None
    for fam in cfg.families:
        hs = np.array([float(results[(fam, n)][0]["h"])
                       for n in cfg.mesh_levels])
        errs = np.array([float(results[(fam, n)][0]["err_composite"])
                         for n in cfg.mesh_levels])
        ax.loglog(hs, errs, "o-", label=fam)
    # slope triangle for the expected rate k+1, anchored at the last points
    rate = cfg.k + 1
    x0, x1 = hs[-1], hs[-2]
    y0 = min(float(results[(fam, cfg.mesh_levels[-1])][0]["err_composite"])
             for fam in cfg.families) * 0.5
    ax.loglog([x0, x1, x1, x0], [y0, y0 * (x1 / x0) ** rate, y0, y0],
              "k-", linewidth=0.8)
    ax.text(np.sqrt(x0 * x1), y0 * 0.8, f"{rate}", ha="center", va="top")
    ax.set_xlabel("h")
    ax.set_ylabel("composite error")
    ax.set_title(f"{cfg.experiment}, k={cfg.k}, dim={cfg.dim}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# property suite


def run_property_suite(verbose=True):
    """Run the library invariants; returns the number of failures."""
    checks = [
        ("operator identities (S S* = 2 I, S* S = I - transpose)",
         _check_operators),
        ("material law round trip", _check_material),
        ("H(div) interpolation reproduces its own space", _check_interp),
        ("commuting diagram div(Pi sigma) = proj(div sigma)", _check_commute),
        ("manufactured loads match finite differences", _check_fd_loads),
        ("weighted projection ratio bound (k=0)", _check_lemma47),
        ("inf-sup constant bounded below across ell", _check_infsup),
        ("iterative and direct solvers agree", _check_solvers),
    ]
    failures = 0
    for name, fn in checks:
        try:
            fn()
            status = "PASS"
        except Exception as exc:  # report and continue
            status = f"FAIL ({exc})"
            failures += 1
        if verbose:
            print(f"[{status.split(' ')[0]:4s}] {name}"
                  + ("" if status == "PASS" else f": {status[5:]}"))
    return failures


def _check_operators():
    from .cosserat_core import asym, asym_adjoint
    rng = np.random.default_rng(0)
    for d in (2, 3):
        nr = 3 if d == 3 else 1
        v = rng.standard_normal((200, nr)) if d == 3 \
            else rng.standard_normal(200)
        sig = rng.standard_normal((200, d, d))
        if np.max(np.abs(asym(asym_adjoint(v, d)) - 2 * v)) > 1e-14:
            raise AssertionError("S S* v != 2v")
        ss = asym_adjoint(asym(sig), d)
        if np.max(np.abs(ss - (sig - np.swapaxes(sig, 1, 2)))) > 1e-13:
            raise AssertionError("S* S sigma != sigma - sigma^T")


def _check_material():
    rng = np.random.default_rng(1)
    for d in (2, 3):
        for lam in (0.0, 1.0, 1e4):
            mat = default_material(d, 1.0, lam)
            tau = rng.standard_normal((100, d, d))
            mid = mat.apply_A_sigma_inv(tau)
            back = mat.apply_A_sigma(mid)
            scale = max(1.0, float(np.max(np.abs(mid))))
            if np.max(np.abs(back - tau)) / scale > 1e-12:
                raise AssertionError(f"round trip failed at lambda={lam}")


def _check_interp():
    from .quadrature import simplex_rule
    from .spaces import HdivSpace
    rng = np.random.default_rng(2)
    for d in (2, 3):
        mesh = structured_simplicial(d, 2)
        space = HdivSpace(mesh, "BDM", 1)
        A = rng.standard_normal((d, d))
        b = rng.standard_normal(d)
        coeffs = space.interpolate(lambda x: x @ A.T + b)
        pts, _ = simplex_rule(d, 3)
        vals = space.evaluate(coeffs, pts)
        y = space.physical_points(pts)
        exact = y.reshape(-1, d) @ A.T + b
        if np.max(np.abs(vals.reshape(-1, d) - exact)) > 1e-11:
            raise AssertionError("interpolation misses a linear field")


def _check_commute():
    from .quadrature import simplex_rule
    from .spaces import DGSpace, HdivSpace
    rng = np.random.default_rng(3)
    for d in (2, 3):
        mesh = structured_simplicial(d, 1)
        space = HdivSpace(mesh, "RT", 0)
        dg = DGSpace(mesh, 0)
        # quadratic field with closed-form divergence
        A = rng.standard_normal((d, d))

        def fld(x):
            return (x ** 2) @ A.T

        def div_fld(x):
            return 2.0 * x @ np.diag(A)

        ci = space.interpolate(fld)
        pd = dg.project(div_fld)
        pts, wts = simplex_rule(d, 6)
        _, divs = space.evaluate(ci, pts, divergence=True)
        proj = dg.evaluate(pd, pts)
        dets = mesh.affine_maps()[2]
        err = np.sqrt(np.sum(wts[None] * dets[:, None] * (divs - proj) ** 2))
        if err > 1e-11:
            raise AssertionError(f"commuting defect {err:.2e}")


def _check_fd_loads():
    from .oracles import fd_strong_residual
    rng = np.random.default_rng(4)
    for d in (2, 3):
        exact = manufactured_solution(d, "smooth")
        x = 0.3 + 0.4 * rng.random((50, d))
        f_u, f_r = fd_strong_residual(exact, x, step=1e-5)
        if np.max(np.abs(f_u - exact.f_u(x))) > 1e-5:
            raise AssertionError("f_u mismatch vs finite differences")
        if np.max(np.abs(f_r - exact.f_r(x))) > 1e-5:
            raise AssertionError("f_r mismatch vs finite differences")


def _check_lemma47():
    ell = LengthField(composite=True)
    r = lemma47_ratio(structured_simplicial(2, 6), ell, 0)
    if r > 2.0 + 1e-12:
        raise AssertionError(f"k=0 ratio {r} exceeds 2")


def _check_infsup():
    betas = []
    for ell in (1.0, 1e-2, 0.0):
        mat = default_material(2, ell)
        prob = DiscreteProblem(structured_simplicial(2, 4), "WC", 0, "RT", mat)
        betas.append(infsup_constant(prob))
    if min(betas) < 0.5:
        raise AssertionError(f"inf-sup degraded: {betas}")


def _check_solvers():
    mat = default_material(2, 1.0)
    exact = ExactSolution(mat, "smooth")
    prob = DiscreteProblem(structured_simplicial(2, 4), "WC", 0, "RT", mat)
    M = assemble_mass(prob)
    B = assemble_coupling(prob)
    rhs = assemble_rhs(prob, exact.f_u, exact.f_r)
    p1, u1, _ = solve_direct(M, B, rhs)
    p2, u2, _ = solve_minres(M, B, rhs, M + assemble_sl_gram(prob),
                             assemble_u_mass(prob), tol=1e-12)
    num = np.linalg.norm(np.concatenate([p1 - p2, u1 - u2]))
    den = np.linalg.norm(np.concatenate([p1, u1]))
    if num / den > 1e-8:
        raise AssertionError(f"solver disagreement {num / den:.2e}")


# ---------------------------------------------------------------------------
# CLI


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
        if args.jobs is not None:
            cfg.jobs = args.jobs
            validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(cfg)
    except SolveFailure as exc:
        print(f"solve failure: {exc}", file=sys.stderr)
        return 1
    if report.csv_path:
        print(f"wrote {report.csv_path}")
        for path in report.plot_paths:
            print(f"wrote {path}")
        for fam, rates in report.rates.items():
            comp = ", ".join(
                r if isinstance(r, str) else f"{r:.2f}"
                for r in rates["err_composite"])
            print(f"{fam}: composite rates [{comp}]")
    return 0


def _cmd_properties(args):
    return 1 if run_property_suite() else 0


def _cmd_rates(args):
    try:
        with open(args.csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not rows:
        print("config error: empty CSV", file=sys.stderr)
        return 2
    groups = {}
    for row in rows:
        key = tuple(row[c] for c in ("experiment", "family", "dim", "k",
                                     "ell", "lambda_sigma"))
        groups.setdefault(key, []).append(row)
    for key, grp in groups.items():
        grp.sort(key=lambda r: -float(r["h"]))
        hs = [float(r["h"]) for r in grp]
        if len(hs) < 2:
            continue
        errs = {name: [float(r[name]) for r in grp] for name in RATE_NORMS}
        rates = rate_table(hs, errs)
        label = " ".join(f"{c}={v}" for c, v in
                         zip(("experiment", "family", "dim", "k", "ell",
                              "lambda_sigma"), key))
        print(label)
        for name in RATE_NORMS:
            vals = ", ".join(r if isinstance(r, str) else f"{r:.2f}"
                             for r in rates[name])
            print(f"  {name:16s} [{vals}]")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cosserat-mfe",
        description="Mixed finite element experiments for linearized "
                    "Cosserat elasticity")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="TOML config file")
    p_run.add_argument("--jobs", type=int, default=None,
                       help="max concurrent (family, level) jobs")
    p_run.set_defaults(fn=_cmd_run)
    p_props = sub.add_parser("properties", help="run invariant checks")
    p_props.set_defaults(fn=_cmd_properties)
    p_rates = sub.add_parser("rates", help="rates from an experiment CSV")
    p_rates.add_argument("--csv", required=True)
    p_rates.set_defaults(fn=_cmd_rates)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
