"""Acceptance checks: one callable per criterion, shared by tests and the CLI.

Each criterion returns a :class:`CriterionResult`; the registry preserves the
order in which the checks are meant to be reported.  A context object caches
the expensive pieces (setups, simulations) so several criteria can share one
run.  Criteria that need a converged grid are skipped with an explanatory
message below ``MIN_CELLS`` instead of failing cryptically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controllers import ControllerSpec, GainsA, GainsB, control_A, phi
from .equilibrium import compute_equilibrium, open_loop_jacobian, open_loop_jacobian_eigs
from .lyapunov import (
    LyapConfig,
    closed_loop_jacobian,
    control_b_discriminant,
    default_lyap_config,
    dini_check,
    lambda_min_q,
    q_matrix,
    roa_estimate,
    v_full,
    verify_level_set,
)
from .model import AgeGrid, bc_residual, build_kernels
from .simulate import (
    ICSpec,
    SimConfig,
    build_setup,
    cross_validate,
    ic_from_spec,
    simulate_direct,
    simulate_transformed,
)
from .transform import check_S, reconstruct, to_transformed

MIN_CELLS = 100

REFERENCE_GAINS_A = dict(eps=0.2, beta=0.6)
REFERENCE_GAINS_B = dict(eps=0.01, beta=0.13, delta=0.2)


@dataclass
class CriterionResult:
    cid: str
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    @property
    def status(self) -> str:
        if self.skipped:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return f"{self.status} {self.cid} {self.name}: {self.detail}"


class VerifyContext:
    """Lazily built and cached setups/simulations for the criteria."""

    def __init__(self, n_cells: int = 400, u_star: float = 0.15):
        self.n_cells = n_cells
        self.u_star = u_star
        self._cache: dict = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def setup(self, n_cells: int | None = None):
        n = self.n_cells if n_cells is None else n_cells
        def build():
            grid = AgeGrid(A=1.0, n_cells=n)
            kernels = build_kernels(0.5, 3.0, 0.4, 0.5, 3.0, 0.4, grid)
            return build_setup(kernels, self.u_star)
        return self._get(("setup", n), build)

    def direct_run(self, kind: str, ic: str, t_final: float = 20.0):
        def build():
            setup = self.setup()
            spec = self._controller(kind)
            return simulate_direct(
                setup, SimConfig(t_final=t_final, controller=spec, ic=ICSpec(kind=ic))
            )
        return self._get(("direct", kind, ic, t_final), build)

    def _controller(self, kind: str) -> ControllerSpec:
        if kind == "control_a":
            return ControllerSpec(kind=kind, **REFERENCE_GAINS_A)
        if kind == "control_b":
            return ControllerSpec(kind=kind, **REFERENCE_GAINS_B)
        return ControllerSpec(kind="open_loop")

    def lyap_config(self, mode: str) -> LyapConfig:
        def build():
            setup = self.setup()
            if mode == "gradient":
                return default_lyap_config(
                    "gradient", REFERENCE_GAINS_A["eps"], REFERENCE_GAINS_A["beta"],
                    setup.eq, setup.sigma, setup.kappa,
                )
            return default_lyap_config(
                "saturated", REFERENCE_GAINS_B["eps"], REFERENCE_GAINS_B["beta"],
                setup.eq, setup.sigma, setup.kappa, delta=REFERENCE_GAINS_B["delta"],
            )
        return self._get(("lyap", mode), build)

    def roa(self, mode: str):
        return self._get(
            ("roa", mode), lambda: roa_estimate(self.lyap_config(mode), self.setup().eq)
        )

    def scaled_ic_inside(self, mode: str) -> ICSpec:
        """Multiplier IC bisected so V(eta0, psi0) <= 0.9 * c_star."""
        def build():
            setup = self.setup()
            cfg = self.lyap_config(mode)
            c_star = self.roa(mode).c_star

            def v_of(s: float) -> float:
                spec = ICSpec(kind="multiplier", log_offset=(s, -s), log_slope=(2 * s, -2 * s))
                ts = to_transformed(ic_from_spec(spec, setup.eq), setup.eq, setup.adj)
                return v_full(ts.eta, ts.psi1, ts.psi2, cfg, setup.eq)

            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if v_of(mid) <= 0.9 * c_star:
                    lo = mid
                else:
                    hi = mid
            return ICSpec(kind="multiplier", log_offset=(lo, -lo), log_slope=(2 * lo, -2 * lo))
        return self._get(("scaled_ic", mode), build)


def _skip_if_coarse(ctx: VerifyContext, cid: str, name: str) -> CriterionResult | None:
    if ctx.n_cells < MIN_CELLS:
        return CriterionResult(
            cid, name, passed=False, skipped=True,
            detail=f"resolution too low (n_cells={ctx.n_cells} < {MIN_CELLS}); "
            f"rerun with model.n_cells >= {MIN_CELLS}",
        )
    return None


def criterion_01_lotka_sharpe(ctx: VerifyContext) -> CriterionResult:
    name = "lotka-sharpe-exponent"
    skip = _skip_if_coarse(ctx, "01", name)
    if skip:
        return skip
    eq = ctx.setup().eq
    ok = abs(eq.zeta1 - 1.17) <= 0.01 and abs(eq.zeta2 - 1.17) <= 0.01
    return CriterionResult(
        "01", name, ok,
        f"zeta1={eq.zeta1:.6f}, zeta2={eq.zeta2:.6f} (target 1.17 +/- 0.01)",
    )


def criterion_02_equilibrium(ctx: VerifyContext) -> CriterionResult:
    name = "equilibrium-values"
    skip = _skip_if_coarse(ctx, "02", name)
    if skip:
        return skip
    eq = ctx.setup().eq
    checks = [
        abs(eq.lambda1 - 0.98) <= 0.01,
        abs(eq.lambda2 - 1.02) <= 0.01,
        abs(eq.x0_star[0] - 33.81) <= 0.1,
        abs(eq.x0_star[1] - 35.19) <= 0.1,
        abs(eq.zeta1 - eq.lambda2 - eq.u_star) <= 1e-6,
        abs(eq.zeta2 - 1.0 / eq.lambda1 - eq.u_star) <= 1e-6,
    ]
    return CriterionResult(
        "02", name, all(checks),
        f"lambda=({eq.lambda1:.4f}, {eq.lambda2:.4f}), "
        f"x*(0)=({eq.x0_star[0]:.3f}, {eq.x0_star[1]:.3f}), "
        f"identity defects=({abs(eq.zeta1 - eq.lambda2 - eq.u_star):.2e}, "
        f"{abs(eq.zeta2 - 1 / eq.lambda1 - eq.u_star):.2e})",
    )


def criterion_03_conservation(ctx: VerifyContext) -> CriterionResult:
    name = "open-loop-conservation"
    skip = _skip_if_coarse(ctx, "03", name)
    if skip:
        return skip
    setup = ctx.setup()
    eta0 = to_transformed(
        ic_from_spec(ICSpec(kind="FQ"), setup.eq), setup.eq, setup.adj
    ).eta
    traj = simulate_transformed(
        setup,
        SimConfig(t_final=20.0, controller=ControllerSpec(kind="open_loop"),
                  ic=ICSpec(kind="eta", eta0=tuple(eta0))),
    ).finalize_lyapunov(setup.eq)
    drift = float(np.max(np.abs(traj.V0 - traj.V0[0])) / traj.V0[0])

    orbit = ctx.direct_run("open_loop", "FQ")
    dist = np.linalg.norm(orbit.eta - orbit.eta[0], axis=1)
    # estimated period: first local minimum of the return distance after the
    # initial excursion
    start = int(np.searchsorted(orbit.times, 3.0))
    interior = np.where(
        (dist[start + 1 : -1] <= dist[start:-2]) & (dist[start + 1 : -1] <= dist[start + 2 :])
    )[0]
    j = start + 1 + int(interior[0]) if interior.size else int(np.argmin(dist[start:])) + start
    ret = float(dist[j])
    period = float(orbit.times[j])
    ok = drift < 1e-3 and ret < 0.05
    return CriterionResult(
        "03", name, ok,
        f"V0 drift {drift:.2e} (< 1e-3); orbit return {ret:.4f} at estimated "
        f"period t={period:.2f} (< 0.05)",
    )


def criterion_04_linearization(ctx: VerifyContext) -> CriterionResult:
    name = "open-loop-linearization"
    setup = ctx.setup()
    kernels = setup.kernels
    eigs_closed = open_loop_jacobian_eigs(setup.eq)
    eigs_solve = np.linalg.eigvals(open_loop_jacobian(setup.eq))
    err = min(
        abs(eigs_closed[0] - eigs_solve[0]) + abs(eigs_closed[1] - eigs_solve[1]),
        abs(eigs_closed[0] - eigs_solve[1]) + abs(eigs_closed[1] - eigs_solve[0]),
    )
    omegas = []
    for us in (0.05, 0.10, 0.15):
        eq_us = compute_equilibrium(kernels, us)
        omegas.append(abs(open_loop_jacobian_eigs(eq_us)[0].imag))
    decreasing = omegas[0] > omegas[1] > omegas[2]
    ok = err <= 1e-6 and decreasing
    return CriterionResult(
        "04", name, ok,
        f"eig defect {err:.2e} (<= 1e-6); omega(u*)={[f'{w:.4f}' for w in omegas]} decreasing",
    )


def criterion_05_control_a_fq(ctx: VerifyContext) -> CriterionResult:
    name = "control-a-prey-surplus"
    skip = _skip_if_coarse(ctx, "05", name)
    if skip:
        return skip
    traj = ctx.direct_run("control_a", "FQ")
    nrm = np.linalg.norm(traj.eta, axis=1)
    tail = float(nrm[traj.times >= 10.0].max())
    u_min = float(traj.u.min())
    ok = tail <= 0.05 and u_min > 0.0
    return CriterionResult(
        "05", name, ok,
        f"max|eta| for t>=10 is {tail:.4f} (<= 0.05); min u {u_min:.4f} (> 0)",
    )


def criterion_06_control_a_sq(ctx: VerifyContext) -> CriterionResult:
    name = "control-a-predator-surplus"
    skip = _skip_if_coarse(ctx, "06", name)
    if skip:
        return skip
    traj = ctx.direct_run("control_a", "SQ")
    u_min = float(traj.u.min())
    final = float(np.linalg.norm(traj.eta[-1]))
    ok = u_min < 0.0 and final <= 0.05
    return CriterionResult(
        "06", name, ok,
        f"min u {u_min:.4f} (< 0, dilution goes negative); |eta(20)|={final:.2e} (<= 0.05)",
    )


def criterion_07_control_b_positive(ctx: VerifyContext) -> CriterionResult:
    name = "control-b-positivity"
    skip = _skip_if_coarse(ctx, "07", name)
    if skip:
        return skip
    eq = ctx.setup().eq
    gains = GainsB(**REFERENCE_GAINS_B)
    floor = eq.u_star - gains.eps * eq.lambda2 - gains.beta
    mins = {}
    for ic in ("FQ", "SQ"):
        traj = ctx.direct_run("control_b", ic)
        mins[ic] = float(traj.u.min())
    traj_sq = ctx.direct_run("control_b", "SQ")
    final = float(np.linalg.norm(traj_sq.eta[-1]))
    ok = all(v >= floor for v in mins.values()) and floor > 0 and final <= 0.1
    return CriterionResult(
        "07", name, ok,
        f"min u FQ={mins['FQ']:.4f}, SQ={mins['SQ']:.4f} (>= floor {floor:.4f} > 0); "
        f"|eta(20)| SQ={final:.2e} (<= 0.1)",
    )


def criterion_08_lambda_min(ctx: VerifyContext) -> CriterionResult:
    name = "lambda-min-closed-form"
    worst_special = 0.0
    worst_value = 0.0
    for eps in (0.1, 0.2, 1.0):
        beta = eps / (2.0 * (1.0 + eps))
        lam = lambda_min_q(eps, beta)
        eigs = np.sort(np.linalg.eigvalsh(q_matrix(eps, beta)))
        # Q is diagonal at this beta: eigenvalues are exactly
        # {eps/(2(1+eps)), eps(1+eps)/2}, the smaller being the first.
        worst_special = max(worst_special, abs(lam - eigs[0]))
        worst_value = max(
            worst_value,
            abs(lam - eps / (2.0 * (1.0 + eps))),
            abs(eigs[1] - eps * (1.0 + eps) / 2.0),
        )
    worst_grid = 0.0
    for eps in np.linspace(0.05, 2.0, 50):
        for beta in np.linspace(1.01, 4.0, 50) * (eps / (4 * (1 + eps))):
            lam = lambda_min_q(eps, beta)
            ev = np.linalg.eigvalsh(q_matrix(eps, beta))[0]
            worst_grid = max(worst_grid, abs(lam - ev))
    ok = worst_special <= 1e-12 and worst_value <= 1e-12 and worst_grid <= 1e-12
    return CriterionResult(
        "08", name, ok,
        f"special-beta defect {worst_special:.2e}, eigenvalue-pair defect "
        f"{worst_value:.2e}, 50x50 grid defect {worst_grid:.2e} (all <= 1e-12)",
    )


def criterion_09_equivalence(ctx: VerifyContext) -> CriterionResult:
    name = "representation-equivalence"
    skip = _skip_if_coarse(ctx, "09", name)
    if skip:
        return skip
    discs = {}
    for n in (200, 400):
        setup = ctx.setup(n_cells=n)
        discs[n] = cross_validate(
            setup,
            SimConfig(t_final=10.0, controller=ControllerSpec(kind="open_loop"),
                      ic=ICSpec(kind="FQ")),
        )
    ok = discs[200] < 1e-2 and discs[400] < discs[200]
    return CriterionResult(
        "09", name, ok,
        f"discrepancy n=200: {discs[200]:.2e} (< 1e-2), n=400: {discs[400]:.2e} (smaller)",
    )


def criterion_10_roundtrip(ctx: VerifyContext) -> CriterionResult:
    name = "transform-roundtrip-and-membership"
    skip = _skip_if_coarse(ctx, "10", name)
    if skip:
        return skip
    setup = ctx.setup()
    eq, grid = setup.eq, setup.grid
    worst_rt = 0.0
    worst_p = 0.0
    worst_renewal_evolved = 0.0
    min_psi = np.inf
    bc_link = 0.0
    for ick in ("FQ", "SQ"):
        state = ic_from_spec(ICSpec(kind=ick), eq)
        ts = to_transformed(state, eq, setup.adj)
        back = reconstruct(ts, eq)
        worst_rt = max(
            worst_rt,
            float(np.max(np.abs(back.x1 - state.x1) / state.x1)),
            float(np.max(np.abs(back.x2 - state.x2) / state.x2)),
        )
        min_psi = min(min_psi, float(ts.psi1.samples.min()), float(ts.psi2.samples.min()))
        for i, psi in ((1, ts.psi1), (2, ts.psi2)):
            p_res, renewal = check_S(psi, eq.ktilde(i), grid)
            worst_p = max(worst_p, p_res)
            x = state.x1 if i == 1 else state.x2
            predicted = bc_residual(x, eq.kernels.k(i), grid) / (
                eq.x0_star[i - 1] * np.exp(ts.eta[i - 1])
            )
            bc_link = max(bc_link, abs(renewal - predicted))
        # after evolving past one age window the renewal identity is enforced
        traj = simulate_transformed(
            setup,
            SimConfig(t_final=1.5, controller=ControllerSpec(kind="open_loop"),
                      ic=ICSpec(kind=ick), snapshot_times=(1.5,)),
        )
        t_snap, x1s, x2s = traj.snapshots[-1]
        ts_late = to_transformed(
            ic_from_spec(ICSpec(kind="table", x1=x1s, x2=x2s), eq), eq, setup.adj
        )
        for i, psi in ((1, ts_late.psi1), (2, ts_late.psi2)):
            _, renewal = check_S(psi, eq.ktilde(i), grid)
            worst_renewal_evolved = max(worst_renewal_evolved, renewal)
    ok = (
        worst_rt < 1e-10
        and min_psi > -1.0
        and worst_p < 1e-3
        and worst_renewal_evolved < 1e-8
        and bc_link < 1e-9
    )
    return CriterionResult(
        "10", name, ok,
        f"roundtrip {worst_rt:.2e} (< 1e-10); min psi {min_psi:.3f} (> -1); "
        f"P residual {worst_p:.2e} (< 1e-3); renewal residual after one window "
        f"{worst_renewal_evolved:.2e} (< 1e-8); the t=0 renewal residual equals "
        f"the IC's own birth-condition defect to {bc_link:.2e} (these ICs do not "
        "satisfy the renewal condition, so it is O(1) at t=0 by design)",
    )


def criterion_11_decrease(ctx: VerifyContext) -> CriterionResult:
    name = "lyapunov-decrease"
    skip = _skip_if_coarse(ctx, "11", name)
    if skip:
        return skip
    setup = ctx.setup()
    eq = setup.eq
    details = []
    ok = True
    for mode, kind in (("gradient", "control_a"), ("saturated", "control_b")):
        cfg = ctx.lyap_config(mode)
        ic = ctx.scaled_ic_inside(mode)
        traj = simulate_transformed(
            setup, SimConfig(t_final=12.0, controller=ctx._controller(kind), ic=ic)
        ).finalize_lyapunov(eq, cfg)
        if traj.V[0] > ctx.roa(mode).c_star:
            ok = False
            details.append(f"{mode}: initial V outside the level set")
            continue
        viol = dini_check(traj, cfg, eq)
        ok = ok and viol <= 1e-2
        details.append(f"{mode} dini violation {viol:.2e} (<= 1e-2)")

    rng = np.random.default_rng(42)
    gains = GainsA(**REFERENCE_GAINS_A)
    q = q_matrix(gains.eps, gains.beta)
    worst = 0.0
    for eta in rng.uniform(-2.0, 2.0, size=(100, 2)):
        p1, p2 = phi(eta, eq)
        u = control_A(eta, gains, eq)
        v1dot = p1 * (eq.u_star - u - p2) + (1 + gains.eps) * p2 * (eq.u_star - u + p1)
        pv = np.array([p1, p2])
        worst = max(worst, abs(v1dot + pv @ q @ pv))
    ok = ok and worst <= 1e-10
    details.append(f"reduced-model identity defect {worst:.2e} (<= 1e-10)")
    return CriterionResult("11", name, ok, "; ".join(details))


def criterion_12_damping(ctx: VerifyContext) -> CriterionResult:
    name = "control-b-damping"
    eq = ctx.setup().eq
    g_small = GainsB(eps=0.01, beta=0.13, delta=0.01)
    g_ref = GainsB(**REFERENCE_GAINS_B)
    g_zero = GainsB(eps=0.01, beta=0.0, delta=0.2)
    _, eig_small = closed_loop_jacobian("control_b", g_small, eq)
    _, eig_ref = closed_loop_jacobian("control_b", g_ref, eq)
    _, eig_zero = closed_loop_jacobian("control_b", g_zero, eq)
    disc_small = control_b_discriminant(g_small, eq)
    disc_ref = control_b_discriminant(g_ref, eq)
    checks = [
        disc_small > 0,
        np.all(np.abs(eig_small.imag) < 1e-12),
        np.all(eig_small.real < 0),
        disc_ref < 0,
        np.all(np.abs(eig_ref.imag) > 0),
        np.all(eig_ref.real < 0),
        np.all(eig_zero.real < 0),
    ]
    return CriterionResult(
        "12", name, bool(np.all(checks)),
        f"delta=0.01: eigs real negative (disc {disc_small:.1f} > 0); "
        f"delta=0.2: complex, Re={eig_ref[0].real:.3f} < 0; beta=0: Hurwitz "
        f"(Re={eig_zero[0].real:.4f})",
    )


def criterion_13_roa_geometry(ctx: VerifyContext) -> CriterionResult:
    name = "roa-level-set-geometry"
    skip = _skip_if_coarse(ctx, "13", name)
    if skip:
        return skip
    cfg = ctx.lyap_config("gradient")
    result = ctx.roa("gradient")
    violations = verify_level_set(result, cfg, ctx.setup().eq, n_grid=400)
    ok = violations == 0
    return CriterionResult(
        "13", name, ok,
        f"c*={result.c_star:.5f} attained on {result.active_piece}; "
        f"{violations} membership violations on a 400x400 grid (expect 0)",
    )


REGISTRY = (
    criterion_01_lotka_sharpe,
    criterion_02_equilibrium,
    criterion_03_conservation,
    criterion_04_linearization,
    criterion_05_control_a_fq,
    criterion_06_control_a_sq,
    criterion_07_control_b_positive,
    criterion_08_lambda_min,
    criterion_09_equivalence,
    criterion_10_roundtrip,
    criterion_11_decrease,
    criterion_12_damping,
    criterion_13_roa_geometry,
)


def run_all(ctx: VerifyContext) -> list[CriterionResult]:
    return [criterion(ctx) for criterion in REGISTRY]
