import numpy as np
import pytest

from predprey.controllers import ControllerSpec
from predprey.errors import NumericalError
from predprey.model import AgeGrid, PopulationState, bc_residual
from predprey.simulate import (
    ICSpec,
    SimConfig,
    _advance_profile,
    cross_validate,
    ic_from_spec,
    interaction_terms,
    simulate_direct,
    simulate_transformed,
    step_direct,
    step_transformed,
    transformed_ic,
)
from predprey.transform import to_transformed

from conftest import make_setup

OPEN = ControllerSpec(kind="open_loop")


def test_ic_fq_newborn_value(setup400):
    eq = setup400.eq
    state = ic_from_spec(ICSpec(kind="FQ"), eq)
    assert state.x1[0] == pytest.approx(eq.x0_star[0] * np.e, rel=1e-12)
    assert state.x1[0] == pytest.approx(91.9, abs=0.2)


def test_ic_unit_multiplier_is_equilibrium(setup400):
    eq = setup400.eq
    state = ic_from_spec(ICSpec(kind="multiplier"), eq)
    assert np.allclose(state.x1, eq.x1_star) and np.allclose(state.x2, eq.x2_star)


def test_ic_sq_transforms_to_second_quadrant(setup400):
    eq = setup400.eq
    ts = to_transformed(ic_from_spec(ICSpec(kind="SQ"), eq), eq, setup400.adj)
    assert ts.eta[0] == pytest.approx(-1.41, abs=0.01)
    assert ts.eta[1] == pytest.approx(1.57, abs=0.01)


def test_ic_table_requires_positive(setup400):
    eq = setup400.eq
    with pytest.raises(NumericalError):
        ic_from_spec(
            ICSpec(kind="table", x1=np.zeros(setup400.grid.n_nodes),
                   x2=eq.x2_star.copy()),
            eq,
        )


def test_interaction_terms_at_equilibrium(setup400):
    eq = setup400.eq
    state = PopulationState(t=0.0, x1=eq.x1_star.copy(), x2=eq.x2_star.copy())
    i1, i2 = interaction_terms(state, setup400.kernels)
    assert i1 == pytest.approx(eq.lambda2, rel=1e-10)
    assert i2 == pytest.approx(1.0 / eq.lambda1, rel=1e-10)
    assert (i1, i2) == pytest.approx((1.02, 1.0204), rel=0.01)


def test_interaction_terms_scalings(setup400):
    eq = setup400.eq
    doubled = PopulationState(t=0.0, x1=2.0 * eq.x1_star, x2=eq.x2_star.copy())
    _, i2 = interaction_terms(doubled, setup400.kernels)
    assert i2 == pytest.approx(1.0 / (2.0 * eq.lambda1), rel=1e-10)
    no_predators = PopulationState(t=0.0, x1=eq.x1_star.copy(),
                                   x2=np.zeros_like(eq.x2_star))
    i1, _ = interaction_terms(no_predators, setup400.kernels)
    assert i1 == 0.0


def test_interaction_terms_prey_collapse(setup400):
    eq = setup400.eq
    collapsed = PopulationState(t=1.0, x1=np.zeros_like(eq.x1_star),
                                x2=eq.x2_star.copy())
    with pytest.raises(NumericalError, match="collapse"):
        interaction_terms(collapsed, setup400.kernels)


def test_step_direct_fixed_point(setup400):
    eq, grid = setup400.eq, setup400.grid
    state = PopulationState(t=0.0, x1=eq.x1_star.copy(), x2=eq.x2_star.copy())
    nxt = step_direct(state, eq.u_star, setup400.kernels, grid.da)
    assert np.max(np.abs(nxt.x1 - eq.x1_star) / eq.x1_star) < 1e-4
    assert np.max(np.abs(nxt.x2 - eq.x2_star) / eq.x2_star) < 1e-4


def test_advance_profile_no_births():
    grid = AgeGrid(A=1.0, n_cells=16)
    x = np.linspace(1.0, 2.0, grid.n_nodes)
    out = _advance_profile(x, np.zeros(grid.n_nodes), np.zeros(grid.n_nodes),
                           0.0, grid, grid.da)
    assert out[0] == 0.0  # no birth kernel, no newborns


def test_advance_profile_pure_transport():
    grid = AgeGrid(A=1.0, n_cells=16)
    x = np.linspace(1.0, 2.0, grid.n_nodes)
    out = _advance_profile(x, np.zeros(grid.n_nodes), np.zeros(grid.n_nodes),
                           0.0, grid, grid.da)
    assert np.array_equal(out[1:], x[:-1])


def test_advance_profile_rejects_coarse_renewal():
    grid = AgeGrid(A=1.0, n_cells=2)
    k = np.full(grid.n_nodes, 5.0)  # w0*k0 = 0.25*5 > 1
    with pytest.raises(NumericalError, match="coarse"):
        _advance_profile(np.ones(grid.n_nodes), np.zeros(grid.n_nodes), k,
                         0.0, grid, grid.da)


def test_step_transformed_zero_history_is_invariant(setup200):
    eq, grid = setup200.eq, setup200.grid
    ts = transformed_ic(ICSpec(kind="eta", eta0=(0.4, -0.3)), setup200)
    nxt = step_transformed(ts, eq.u_star, eq, grid.da)
    assert np.max(np.abs(nxt.psi1.samples)) < 1e-14
    assert np.max(np.abs(nxt.psi2.samples)) < 1e-14


def test_step_transformed_origin_fixed_point(setup200):
    eq, grid = setup200.eq, setup200.grid
    ts = transformed_ic(ICSpec(kind="eta", eta0=(0.0, 0.0)), setup200)
    nxt = step_transformed(ts, eq.u_star, eq, grid.da)
    assert np.max(np.abs(nxt.eta)) < 1e-12


def test_history_sup_decays(setup200):
    # the shape deviations of the prey-surplus start shrink between t=0 and t=5
    traj = simulate_transformed(
        setup200, SimConfig(t_final=5.0, controller=OPEN, ic=ICSpec(kind="FQ"),
                            snapshot_times=()),
    )
    assert traj.G1[-1] < 0.05 * traj.G1[0]
    assert traj.G2[-1] < 0.05 * traj.G2[0]


def test_history_exponential_envelope(setup200):
    # log of the weighted sup decreases essentially affinely in t
    traj = simulate_transformed(
        setup200, SimConfig(t_final=4.0, controller=OPEN, ic=ICSpec(kind="FQ")),
    )
    mask = traj.G1 > 1e-10
    t = traj.times[mask]
    logs = np.log(traj.G1[mask])
    slope = np.polyfit(t, logs, 1)[0]
    assert slope < -0.5


def test_simulate_direct_positivity_and_bc(setup400):
    traj = simulate_direct(
        setup400,
        SimConfig(t_final=20.0, controller=OPEN, ic=ICSpec(kind="FQ"),
                  snapshot_times=tuple(np.linspace(0, 20, 21))),
    )
    ks, grid = setup400.kernels, setup400.grid
    for t_snap, x1, x2 in traj.snapshots:
        assert np.all(x1 > 0) and np.all(x2 > 0)
        if t_snap > 0:  # the initial profiles deliberately violate the BC
            assert bc_residual(x1, ks.k1, grid) / x1[0] < 1e-3
            assert bc_residual(x2, ks.k2, grid) / x2[0] < 1e-3
    assert np.all(traj.psi_min > -1.0)


def test_simulate_records_monotone_times(setup100):
    traj = simulate_direct(
        setup100, SimConfig(t_final=1.0, controller=OPEN, ic=ICSpec(kind="FQ"),
                            record_every=7),
    )
    dt = np.diff(traj.times)
    assert np.all(dt > 0)
    assert len(traj.times) == len(traj.u) == len(traj.eta)
    # the final step is recorded even when it falls off the stride
    assert traj.times[-1] == pytest.approx(1.0, abs=1e-12)
    both = simulate_transformed(
        setup100, SimConfig(t_final=1.0, controller=OPEN, ic=ICSpec(kind="FQ"),
                            record_every=7),
    )
    assert both.times[-1] == pytest.approx(1.0, abs=1e-12)


def test_simulate_deterministic(setup100):
    cfg = SimConfig(t_final=2.0, controller=ControllerSpec(kind="control_a"),
                    ic=ICSpec(kind="FQ"))
    t1 = simulate_direct(setup100, cfg)
    t2 = simulate_direct(setup100, cfg)
    assert np.array_equal(t1.eta, t2.eta)
    assert np.array_equal(t1.u, t2.u)


def test_transformed_renewal_identity_enforced(setup200):
    # the newest history sample satisfies the discrete renewal sum exactly
    eq, grid = setup200.eq, setup200.grid
    ts = to_transformed(ic_from_spec(ICSpec(kind="FQ"), eq), eq, setup200.adj)
    w = grid.weights
    cur = ts
    for _ in range(30):
        cur = step_transformed(cur, eq.u_star, eq, grid.da)
    for i, psi in ((1, cur.psi1), (2, cur.psi2)):
        wk = w * eq.ktilde(i)
        resid = abs(psi.samples[0] - wk @ psi.samples)
        assert resid < 1e-8


def test_heun_second_order():
    # halving dt cuts the eta error against a fine reference by about 4
    def final_eta(n):
        setup = make_setup(n)
        traj = simulate_transformed(
            setup, SimConfig(t_final=5.0, controller=OPEN,
                             ic=ICSpec(kind="eta", eta0=(1.0, -1.0))),
        )
        return traj.eta[-1]

    ref = final_eta(800)
    e_coarse = np.max(np.abs(final_eta(100) - ref))
    e_fine = np.max(np.abs(final_eta(200) - ref))
    assert e_coarse / e_fine == pytest.approx(4.0, rel=0.25)


def test_cross_validate_small_grid(setup100):
    disc = cross_validate(
        setup100, SimConfig(t_final=5.0, controller=OPEN, ic=ICSpec(kind="FQ")),
    )
    assert disc < 1e-2


def test_cross_validate_equilibrium_start(setup400, setup100):
    # both solvers hold the fixed point; the residual drift is the direct
    # solver's O(dt^2) transport error, about 9e-7 at n=400
    cfg = SimConfig(t_final=5.0, controller=OPEN, ic=ICSpec(kind="equilibrium"))
    assert cross_validate(setup400, cfg) < 1e-6
    assert cross_validate(setup100, cfg) < 16 * 1e-6 * 1.5  # same at (dt*4)^2


def test_open_loop_conservation_short(setup200):
    traj = simulate_transformed(
        setup200,
        SimConfig(t_final=10.0, controller=OPEN, ic=ICSpec(kind="eta", eta0=(1.0, -1.0))),
    ).finalize_lyapunov(setup200.eq)
    drift = np.max(np.abs(traj.V0 - traj.V0[0])) / traj.V0[0]
    assert drift < 1e-3


def test_measured_controller_run(setup100):
    # the sensor-based approximation steers the state toward equilibrium too
    cfg = SimConfig(
        t_final=8.0,
        controller=ControllerSpec(kind="measured", sensor="interaction"),
        ic=ICSpec(kind="FQ"),
    )
    for run in (simulate_direct, simulate_transformed):
        traj = run(setup100, cfg)
        assert np.all(np.isfinite(traj.u))
        assert np.linalg.norm(traj.eta[-1]) < 0.1 * np.linalg.norm(traj.eta[0])


def test_controller_negative_dilution_recorded(setup200):
    cfg = SimConfig(t_final=6.0, controller=ControllerSpec(kind="control_a"),
                    ic=ICSpec(kind="SQ"))
    assert simulate_direct(setup200, cfg).u.min() < 0.0
    assert simulate_transformed(setup200, cfg).u.min() < 0.0
