"""Command-line interface: equilibrium, simulate, roa, sweep, verify.

CSV files are the normative outputs (17 significant digits, deterministic);
JSON summaries accompany them, and ``--plot`` adds self-contained SVG charts.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import svgplot
from .acceptance import VerifyContext, run_all
from .config import RunConfig, effective_ini, load_config, override
from .controllers import ControllerSpec
from .equilibrium import feasible_interval
from .errors import ConfigError, NumericalError, PredPreyError, VerificationFailure
from .lyapunov import (
    default_lyap_config,
    level_contour,
    phi_lower_bound,
    roa_estimate,
    verify_level_set,
)
from .model import AgeGrid, build_kernels, kernels_from_tables
from .simulate import (
    ICSpec,
    SimConfig,
    Setup,
    build_setup,
    simulate_direct,
    simulate_transformed,
)


def _fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise ValueError("CSV columns must share one length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(n):
            fh.write(",".join(_fmt(col[row]) for col in columns) + "\n")


def write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_grid_and_kernels(cfg: RunConfig):
    m = cfg.model
    grid = AgeGrid(A=m.A, n_cells=m.n_cells)
    if m.kernel_table:
        table = np.loadtxt(m.kernel_table, delimiter=",", skiprows=1)
        if table.shape != (grid.n_nodes, 7):
            raise ConfigError(
                f"kernel table {m.kernel_table} must have {grid.n_nodes} rows and "
                "7 columns (a,mu1,k1,g1,mu2,k2,g2)"
            )
        if not np.allclose(table[:, 0], grid.nodes, atol=1e-12):
            raise ConfigError("kernel table ages do not match the grid nodes")
        return grid, kernels_from_tables(grid, *(table[:, j] for j in range(1, 7)))
    kernels = build_kernels(
        m.mu_bar_1, m.k_bar_1, m.g_bar_1, m.mu_bar_2, m.k_bar_2, m.g_bar_2, grid
    )
    return grid, kernels


def build_setup_from_config(cfg: RunConfig) -> Setup:
    _, kernels = build_grid_and_kernels(cfg)
    return build_setup(kernels, cfg.equilibrium.u_star)


def controller_from_config(cfg: RunConfig) -> ControllerSpec:
    c = cfg.controller
    return ControllerSpec(
        kind=c.kind, eps=c.eps, beta=c.beta, delta=c.delta, k1=c.k1, k2=c.k2,
        sensor=c.sensor,
    )


def ic_from_config(cfg: RunConfig) -> ICSpec:
    s = cfg.simulation
    if s.ic == "multiplier":
        return ICSpec(
            kind="multiplier",
            log_offset=(s.ic_log_offset_1, s.ic_log_offset_2),
            log_slope=(s.ic_log_slope_1, s.ic_log_slope_2),
        )
    return ICSpec(kind=s.ic)


def lyap_config_from(cfg: RunConfig, setup: Setup):
    """Resolve the analysis mode and weights for recording/ROA.

    ``auto`` pairs gradient with control A gains and saturated with control B gains;
    open-loop and other controllers get no composite functional unless the
    mode is forced.
    """
    lb = cfg.lyapunov
    kind = cfg.controller.kind
    mode = lb.mode
    if mode == "auto":
        if kind == "control_b":
            mode = "saturated"
        elif kind in ("control_a", "measured"):
            mode = "gradient"
        else:
            return None
    eps, beta = cfg.controller.eps, cfg.controller.beta
    return default_lyap_config(
        mode,
        eps,
        beta,
        setup.eq,
        sigma=(lb.sigma1 or setup.sigma[0], lb.sigma2 or setup.sigma[1]),
        kappa=setup.kappa,
        delta=cfg.controller.delta if mode == "saturated" else None,
        varpi=lb.varpi or None,
        gamma1=lb.gamma1 or None,
        gamma2=lb.gamma2 or None,
    )


def cmd_equilibrium(cfg: RunConfig, outdir: Path, plot: bool) -> int:
    setup = build_setup_from_config(cfg)
    eq, grid = setup.eq, setup.grid
    adj1, adj2 = setup.adj
    write_csv(
        outdir / "equilibrium.csv",
        ["a", "x1_star", "x2_star", "pi0_1", "pi0_2", "ktilde_1", "ktilde_2"],
        [grid.nodes, eq.x1_star, eq.x2_star, adj1.pi0, adj2.pi0, eq.ktilde1, eq.ktilde2],
    )
    interval = feasible_interval(setup.kernels)
    write_json(
        outdir / "equilibrium.json",
        {
            "zeta1": eq.zeta1,
            "zeta2": eq.zeta2,
            "u_star": eq.u_star,
            "lambda1": eq.lambda1,
            "lambda2": eq.lambda2,
            "x1_star_0": eq.x0_star[0],
            "x2_star_0": eq.x0_star[1],
            "feasible_u_interval": list(interval),
            "sigma": list(setup.sigma),
            "kappa": list(setup.kappa),
            "A": grid.A,
            "n_cells": grid.n_cells,
        },
    )
    if plot:
        svgplot.line_chart(
            outdir / "equilibrium_profiles.svg",
            grid.nodes,
            [("x1_star", eq.x1_star), ("x2_star", eq.x2_star)],
            "steady-state age profiles",
            "age",
            "density",
        )
    print(f"equilibrium written to {outdir} (zeta=({eq.zeta1:.4f}, {eq.zeta2:.4f}), "
          f"lambda=({eq.lambda1:.4f}, {eq.lambda2:.4f}))")
    return 0


def _run_simulation(cfg: RunConfig, setup: Setup, solver: str):
    sim_cfg = SimConfig(
        t_final=cfg.simulation.t_final,
        controller=controller_from_config(cfg),
        ic=ic_from_config(cfg),
        record_every=cfg.simulation.record_every,
        snapshot_times=tuple(
            t for t in cfg.output.profile_times if t <= cfg.simulation.t_final
        ),
    )
    run = simulate_direct if solver == "direct" else simulate_transformed
    traj = run(setup, sim_cfg)
    traj.finalize_lyapunov(setup.eq, lyap_config_from(cfg, setup))
    return traj


def _write_trajectory(outdir: Path, cfg: RunConfig, setup: Setup, traj, suffix: str, plot: bool):
    name = f"trajectory{suffix}.csv"
    write_csv(
        outdir / name,
        ["t", "eta1", "eta2", "u", "V0", "V1", "V", "G1", "G2"],
        [traj.times, traj.eta[:, 0], traj.eta[:, 1], traj.u, traj.V0, traj.V1,
         traj.V, traj.G1, traj.G2],
    )
    for idx, (t_snap, x1, x2) in enumerate(traj.snapshots):
        write_csv(
            outdir / f"profiles{suffix}_t{idx}.csv",
            ["a", "x1", "x2", "x1_star", "x2_star"],
            [setup.grid.nodes, x1, x2, setup.eq.x1_star, setup.eq.x2_star],
        )
    if plot:
        svgplot.line_chart(
            outdir / f"eta_vs_t{suffix}.svg",
            traj.times,
            [("eta1", traj.eta[:, 0]), ("eta2", traj.eta[:, 1])],
            "log-abundance states",
            "t",
            "eta",
        )
        svgplot.line_chart(
            outdir / f"u_vs_t{suffix}.svg",
            traj.times,
            [("u", traj.u)],
            "dilution input",
            "t",
            "u",
        )
        for species, profiles in (("x1", 1), ("x2", 2)):
            series = [
                (f"t={t_snap:g}", x1 if profiles == 1 else x2)
                for t_snap, x1, x2 in traj.snapshots
            ]
            if series:
                star = setup.eq.x1_star if profiles == 1 else setup.eq.x2_star
                series.append(("steady state", star))
                svgplot.line_chart(
                    outdir / f"profiles_{species}{suffix}.svg",
                    setup.grid.nodes,
                    series,
                    f"{species}(a, t) slices",
                    "age",
                    "density",
                )


def cmd_simulate(cfg: RunConfig, outdir: Path, plot: bool) -> int:
    setup = build_setup_from_config(cfg)
    solver = cfg.simulation.solver
    solvers = ("direct", "transformed") if solver == "both" else (solver,)
    for s in solvers:
        traj = _run_simulation(cfg, setup, s)
        suffix = f"_{s}" if solver == "both" else ""
        _write_trajectory(outdir, cfg, setup, traj, suffix, plot)
        print(
            f"{s} run: {len(traj.times)} records, final |eta| = "
            f"{np.linalg.norm(traj.eta[-1]):.3e}, min u = {traj.u.min():.4f} "
            f"-> {outdir}"
        )
    return 0


def cmd_roa(cfg: RunConfig, outdir: Path, plot: bool) -> int:
    setup = build_setup_from_config(cfg)
    lyap = lyap_config_from(cfg, setup)
    if lyap is None:
        raise ConfigError(
            "roa needs an analysis mode: use control_a/control_b gains or set "
            "lyapunov.mode explicitly"
        )
    result = roa_estimate(lyap, setup.eq)
    labels, e1s, e2s, vals = [], [], [], []
    for label, (eta, v1_vals) in result.pieces.items():
        labels.extend([label] * len(v1_vals))
        e1s.append(eta[:, 0])
        e2s.append(eta[:, 1])
        vals.append(v1_vals)
    write_csv(
        outdir / "roa.csv",
        ["piece", "eta1", "eta2", "V1"],
        [np.array(labels), np.concatenate(e1s), np.concatenate(e2s), np.concatenate(vals)],
    )
    contour = level_contour(result.c_star, lyap.eps, setup.eq)
    write_csv(
        outdir / "levelset.csv",
        ["eta1", "eta2"],
        [contour[:, 0], contour[:, 1]],
    )
    violations = verify_level_set(result, lyap, setup.eq)
    summary = {
        "mode": lyap.mode,
        "c_star": result.c_star,
        "argmin_eta": list(map(float, result.argmin_eta)),
        "active_constraint": result.active_piece,
        "H1": result.H1,
        "H2": result.H2,
        "gamma1": lyap.gamma1,
        "gamma2": lyap.gamma2,
        "membership_violations_400sq": violations,
    }
    if lyap.mode == "saturated":
        summary["varpi"] = lyap.varpi
        summary["phi_lower_bound"] = phi_lower_bound(lyap)
    write_json(outdir / "roa_summary.json", summary)
    if plot:
        curves = [("level set V1=c*", contour, "")]
        for label, (eta, _) in result.pieces.items():
            order = np.argsort(eta[:, 0] if label != "H1" else eta[:, 1])
            curves.append((label, eta[order], "4,3"))
        svgplot.plane_chart(
            outdir / "roa_plane.svg", curves, "constraint region and level set",
            "eta1", "eta2",
        )
    print(
        f"roa: c* = {result.c_star:.6f} on {result.active_piece}, "
        f"H1={result.H1:.4f}, H2={result.H2:.4f}, violations={violations} -> {outdir}"
    )
    return 0


def _sweep_lists(cfg: RunConfig) -> dict[str, tuple]:
    s = cfg.sweep
    axes = {}
    if s.controller:
        axes["controller.kind"] = s.controller
    if s.ic:
        axes["simulation.ic"] = s.ic
    if s.eps:
        axes["controller.eps"] = s.eps
    if s.beta:
        axes["controller.beta"] = s.beta
    if s.delta:
        axes["controller.delta"] = s.delta
    if s.u_star:
        axes["equilibrium.u_star"] = s.u_star
    return axes


def _sweep_worker(args) -> dict:
    ini_text, combo, outdir = args
    cfg = load_config(text=ini_text, env={})
    updates: dict[str, dict] = {}
    for dotted, value in combo.items():
        section, key = dotted.split(".")
        updates.setdefault(section, {})[key] = value
    cfg = override(cfg, **updates)
    run_dir = Path(outdir)
    run_dir.mkdir(parents=True, exist_ok=True)
    setup = build_setup_from_config(cfg)
    traj = _run_simulation(cfg, setup, "direct")
    _write_trajectory(run_dir, cfg, setup, traj, "", plot=False)
    return {
        **combo,
        "dir": str(run_dir),
        "final_eta_norm": float(np.linalg.norm(traj.eta[-1])),
        "min_u": float(traj.u.min()),
    }


def cmd_sweep(cfg: RunConfig, outdir: Path) -> int:
    axes = _sweep_lists(cfg)
    if not axes:
        raise ConfigError(
            "sweep requires at least one list under [sweep] "
            "(controller, ic, eps, beta, delta, u_star)"
        )
    names = list(axes)
    combos = [dict(zip(names, values)) for values in itertools.product(*axes.values())]
    ini_text = effective_ini(cfg)
    jobs = []
    for idx, combo in enumerate(combos):
        slug = "_".join(f"{k.split('.')[1]}-{v}" for k, v in combo.items())
        jobs.append((ini_text, combo, str(outdir / f"run_{idx:03d}_{slug}")))
    workers = cfg.sweep.workers or os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        try:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_worker, jobs))
        except (OSError, concurrent.futures.process.BrokenProcessPool):
            rows = [_sweep_worker(job) for job in jobs]
    else:
        rows = [_sweep_worker(job) for job in jobs]
    keys = names + ["dir", "final_eta_norm", "min_u"]
    write_csv(
        outdir / "sweep_index.csv",
        keys,
        [np.array([row[k] for row in rows], dtype=object) for k in keys],
    )
    print(f"sweep: {len(rows)} runs -> {outdir}")
    return 0


def cmd_verify(cfg: RunConfig, outdir: Path) -> int:
    ctx = VerifyContext(n_cells=cfg.model.n_cells, u_star=cfg.equilibrium.u_star)
    results = run_all(ctx)
    for res in results:
        print(res.line())
    payload = {
        "n_cells": cfg.model.n_cells,
        "criteria": [
            {
                "id": res.cid,
                "name": res.name,
                "status": res.status,
                "passed": bool(res.passed),
                "skipped": bool(res.skipped),
                "detail": res.detail,
            }
            for res in results
        ],
        "all_passed": bool(all(r.passed for r in results)),
    }
    write_json(outdir / "verify_report.json", payload)
    if not payload["all_passed"]:
        raise VerificationFailure(
            "verification failed: "
            + ", ".join(r.cid for r in results if not r.passed)
        )
    print(f"all {len(results)} criteria passed -> {outdir / 'verify_report.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predprey",
        description="Age-structured predator-prey simulation and dilution control design",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("equilibrium", "solve the renewal exponents and steady profiles"),
        ("simulate", "integrate the population under the configured feedback"),
        ("roa", "estimate the region-of-attraction level set"),
        ("sweep", "run a cartesian product of configurations"),
        ("verify", "run the acceptance checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="INI config path")
        p.add_argument("--out", type=str, default=None, help="output directory")
        if name in ("equilibrium", "simulate", "roa"):
            p.add_argument("--plot", action="store_true", help="write SVG charts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        outdir = Path(args.out) if args.out else Path(cfg.output.directory)
        outdir.mkdir(parents=True, exist_ok=True)
        plot = bool(getattr(args, "plot", False)) or cfg.output.plot
        if args.command == "equilibrium":
            return cmd_equilibrium(cfg, outdir, plot)
        if args.command == "simulate":
            return cmd_simulate(cfg, outdir, plot)
        if args.command == "roa":
            return cmd_roa(cfg, outdir, plot)
        if args.command == "sweep":
            return cmd_sweep(cfg, outdir)
        if args.command == "verify":
            return cmd_verify(cfg, outdir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except VerificationFailure as err:
        print(f"{err}", file=sys.stderr)
        return 4
    except PredPreyError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
