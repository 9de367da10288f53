import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from predprey.controllers import (
    BoundController,
    ControllerSpec,
    GainsA,
    GainsB,
    big_phi,
    control_A,
    control_B,
    control_B_floor,
    control_fblin,
    control_in_x,
    control_measured,
    phi,
    sensor_equilibrium,
    sensor_equilibrium_closed_form,
)
from predprey.errors import GainConstraintError
from predprey.model import PopulationState, quad
from predprey.simulate import ICSpec, SimConfig, ic_from_spec, simulate_transformed
from predprey.transform import to_transformed

GAINS_A = GainsA(eps=0.2, beta=0.6)
GAINS_B = GainsB(eps=0.01, beta=0.13, delta=0.2)


def test_phi_at_origin(eq400):
    p1, p2 = phi(np.zeros(2), eq400)
    assert p1 == 0.0 and p2 == 0.0


def test_phi_reference_value(eq400):
    _, p2 = phi(np.array([0.0, -1.41]), eq400)
    assert p2 == pytest.approx(eq400.lambda2 * (np.exp(-1.41) - 1.0), abs=1e-12)
    assert p2 == pytest.approx(-0.7710, abs=1e-3)


def test_phi_saturates(eq400):
    p1, _ = phi(np.array([20.0, 0.0]), eq400)
    assert p1 == pytest.approx(1.0 / eq400.lambda1, abs=1e-8)
    _, p2 = phi(np.array([0.0, -50.0]), eq400)
    assert p2 == pytest.approx(-eq400.lambda2, abs=1e-8)


def test_phi_survives_absurd_arguments(eq400):
    # the exponent clamp keeps evaluation finite even for absurd states
    p1, p2 = phi(np.array([-1e6, 1e6]), eq400)
    assert np.isfinite(p1) and np.isfinite(p2)


def test_big_phi_values(eq400):
    p1, p2 = big_phi(np.array([1.0, 1.0]), eq400)
    assert p1 == pytest.approx(np.exp(-1.0) / eq400.lambda1, abs=1e-12)
    assert p2 == pytest.approx(eq400.lambda2 * (np.e - 2.0), abs=1e-12)
    assert p1 == pytest.approx(0.3753, abs=1e-3)
    assert p2 == pytest.approx(0.7328, abs=1e-3)


@given(st.floats(-5, 5))
@settings(max_examples=60)
def test_phi_big_phi_relations(r):
    # Phi1(r) = -phi1(r) + r/lambda1 and Phi2(r) = phi2(r) - lambda2*r
    lam1, lam2 = 0.98, 1.02

    class _E:
        lambda1, lambda2 = lam1, lam2

    eta = np.array([r, r])
    p1, p2 = phi(eta, _E)
    P1, P2 = big_phi(eta, _E)
    assert P1 == pytest.approx(-p1 + r / lam1, abs=1e-12, rel=1e-12)
    assert P2 == pytest.approx(p2 - lam2 * r, abs=1e-12, rel=1e-12)
    assert P1 >= 0 and P2 >= 0


def test_gains_a_validation_message():
    with pytest.raises(GainConstraintError, match="0.0416"):
        GainsA(eps=0.2, beta=0.01)
    with pytest.raises(GainConstraintError, match="eps > 0"):
        GainsA(eps=-0.1, beta=0.5)
    GainsA(eps=0.2, beta=0.042)  # just above the bound


def test_gains_b_validation(eq400):
    with pytest.raises(GainConstraintError, match="u_star"):
        GainsB(eps=0.2, beta=0.6, delta=0.2).validate(eq400)
    with pytest.raises(GainConstraintError, match="delta"):
        GainsB(eps=0.01, beta=0.13, delta=0.0)
    GAINS_B.validate(eq400)


def test_control_a_equilibrium_input(eq400):
    assert control_A(np.zeros(2), GAINS_A, eq400) == pytest.approx(eq400.u_star, abs=1e-15)


def test_control_a_hand_values(eq400):
    # hand arithmetic: u = u* + beta*(phi1 + 1.2*phi2)
    eta = np.array([1.57, -1.41])
    p1 = (1.0 - np.exp(-1.57)) / eq400.lambda1
    p2 = eq400.lambda2 * (np.exp(-1.41) - 1.0)
    expected = 0.15 + 0.6 * (p1 + 1.2 * p2)
    assert control_A(eta, GAINS_A, eq400) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.080, abs=1e-3)
    swapped = control_A(np.array([-1.41, 1.57]), GAINS_A, eq400)
    # the two-decimal display value 1.050 comes from rounding lambda to
    # (0.98, 1.02); with the converged lambdas the law gives 1.0511
    p1s = (1.0 - np.exp(1.41)) / eq400.lambda1
    p2s = eq400.lambda2 * (np.exp(1.57) - 1.0)
    assert swapped == pytest.approx(0.15 + 0.6 * (p1s + 1.2 * p2s), abs=1e-12)
    assert swapped == pytest.approx(1.050, abs=2e-3)


def test_control_a_monotone(eq400):
    rng = np.random.default_rng(0)
    for _ in range(50):
        eta = rng.uniform(-3, 3, size=2)
        base = control_A(eta, GAINS_A, eq400)
        assert control_A(eta + np.array([0.1, 0.0]), GAINS_A, eq400) > base
        assert control_A(eta + np.array([0.0, 0.1]), GAINS_A, eq400) > base


def test_control_b_equilibrium_input(eq400):
    assert control_B(np.zeros(2), GAINS_B, eq400) == pytest.approx(eq400.u_star, abs=1e-15)


def test_control_b_hand_value(eq400):
    # phi2 = 0 at eta2 = 0, so u = u* + beta*phi1/delta
    p1 = (1.0 - np.exp(-1.0)) / eq400.lambda1
    expected = 0.15 + 0.13 * p1 / 0.2
    assert control_B(np.array([1.0, 0.0]), GAINS_B, eq400) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.5693, abs=1e-3)


def test_control_b_floor(eq400):
    floor = control_B_floor(GAINS_B, eq400)
    assert floor == pytest.approx(0.0098, abs=1e-4)
    assert floor > 0


@given(
    st.floats(-10, 10), st.floats(-10, 10),
    st.floats(0.001, 0.1), st.floats(0.0, 0.09), st.floats(0.01, 1.0),
)
@settings(max_examples=300)
def test_control_b_stays_positive(e1, e2, eps, beta, delta):
    class _E:
        lambda1, lambda2, u_star = 0.98, 1.02, 0.15

    gains = GainsB(eps=eps, beta=beta, delta=delta)
    if eps * _E.lambda2 + beta >= _E.u_star:
        return  # constraint violated; positivity not claimed
    u = control_B(np.array([e1, e2]), gains, _E)
    assert u > 0.0
    assert u >= _E.u_star - eps * _E.lambda2 - beta - 1e-12


def test_control_b_positive_dense_grid(eq400):
    rng = np.random.default_rng(1)
    etas = rng.uniform(-10, 10, size=(100_000, 2))
    u = control_B(etas, GAINS_B, eq400)
    assert np.all(u > 0.0)
    assert u.min() >= control_B_floor(GAINS_B, eq400) - 1e-12


def test_fblin_equilibrium_input(eq400):
    assert control_fblin(np.zeros(2), 1.0, 2.0, eq400) == pytest.approx(eq400.u_star, abs=1e-14)


def test_fblin_second_implementation(eq400):
    # independent transcription of the linearizing law at a sample point
    eta = np.array([0.1, 0.1])
    k1, k2 = 1.0, 2.0
    lam1, lam2 = eq400.lambda1, eq400.lambda2
    p1 = (1.0 - np.exp(-0.1)) / lam1
    p2 = lam2 * (np.exp(0.1) - 1.0)
    den = lam2 * np.exp(0.1) + np.exp(-0.1) / lam1
    expected = eq400.u_star + (
        -k1 * (0.1 - 0.1) + k2 * (p1 + p2) + lam2 * np.exp(0.1) * p1
        - np.exp(-0.1) / lam1 * p2
    ) / den
    assert control_fblin(eta, k1, k2, eq400) == pytest.approx(expected, abs=1e-13)


def test_fblin_closed_loop_matches_linear_reference(setup400):
    # under the linearizing law, (y, z) = (eta1 - eta2, -phi1 - phi2) follows
    # dy/dt = z, dz/dt = -k1 y - k2 z; compare against the matrix exponential
    eq = setup400.eq
    k1, k2 = 1.0, 2.0
    traj = simulate_transformed(
        setup400,
        SimConfig(
            t_final=5.0,
            controller=ControllerSpec(kind="feedback_linearizing", k1=k1, k2=k2),
            ic=ICSpec(kind="eta", eta0=(0.5, -0.5)),
        ),
    )
    p1, p2 = phi(traj.eta, eq)
    y = traj.eta[:, 0] - traj.eta[:, 1]
    z = -p1 - p2
    a_mat = np.array([[0.0, 1.0], [-k1, -k2]])
    yz0 = np.array([y[0], z[0]])
    worst = 0.0
    for idx in range(0, len(traj.times), 250):
        ref = expm(a_mat * traj.times[idx]) @ yz0
        worst = max(worst, abs(y[idx] - ref[0]), abs(z[idx] - ref[1]))
    assert worst < 5e-3


def test_control_in_x_composes(setup400):
    eq = setup400.eq
    state = ic_from_spec(ICSpec(kind="FQ"), eq)
    ts = to_transformed(state, eq, setup400.adj)
    expected = control_A(ts.eta, GAINS_A, eq)
    assert control_in_x(state, setup400.adj, eq, GAINS_A) == pytest.approx(
        expected, abs=1e-6
    )
    at_eq = PopulationState(t=0.0, x1=eq.x1_star.copy(), x2=eq.x2_star.copy())
    assert control_in_x(at_eq, setup400.adj, eq, GAINS_A) == pytest.approx(
        eq.u_star, abs=1e-12
    )
    doubled = PopulationState(t=0.0, x1=2 * eq.x1_star, x2=2 * eq.x2_star)
    ln2 = np.log(2.0)
    assert control_in_x(doubled, setup400.adj, eq, GAINS_A) == pytest.approx(
        control_A(np.array([ln2, ln2]), GAINS_A, eq), abs=1e-12
    )


def test_sensor_equilibrium_pairings(setup400):
    eq, ks, grid = setup400.eq, setup400.kernels, setup400.grid
    # c1 = g2 collapses y1* to lambda1; c_i = k_i gives the newborn densities
    sens = sensor_equilibrium(ks.g2, ks.g1, eq)
    assert sens.y1_star == pytest.approx(eq.lambda1, rel=1e-12)
    assert sens.y2_star == pytest.approx(eq.lambda2, rel=1e-12)
    sens_birth = sensor_equilibrium(ks.k1, ks.k2, eq)
    assert sens_birth.y1_star == pytest.approx(eq.x0_star[0], rel=1e-9)
    assert sens_birth.y2_star == pytest.approx(eq.x0_star[1], rel=1e-9)


def test_sensor_equilibrium_both_routes_agree(setup400):
    eq, grid = setup400.eq, setup400.grid
    rng = np.random.default_rng(9)
    for _ in range(5):
        c1 = rng.uniform(0.0, 2.0, size=grid.n_nodes)
        c2 = rng.uniform(0.0, 2.0, size=grid.n_nodes)
        sens = sensor_equilibrium(c1, c2, eq)
        y1_cf, y2_cf = sensor_equilibrium_closed_form(c1, c2, eq)
        assert sens.y1_star == pytest.approx(y1_cf, rel=1e-8)
        assert sens.y2_star == pytest.approx(y2_cf, rel=1e-8)


def test_control_measured_values(setup400):
    eq, ks, grid = setup400.eq, setup400.kernels, setup400.grid
    sens = sensor_equilibrium(ks.g2, ks.g1, eq)
    assert control_measured(sens.y1_star, sens.y2_star, sens, GAINS_A, eq) == pytest.approx(
        eq.u_star, abs=1e-14
    )
    # exact-state case: with a flat shape history the approximation is exact
    eta = np.array([0.4, -0.3])
    x1 = eq.x1_star * np.exp(eta[0])
    x2 = eq.x2_star * np.exp(eta[1])
    y1 = quad(sens.c1 * x1, grid)
    y2 = quad(sens.c2 * x2, grid)
    assert control_measured(y1, y2, sens, GAINS_A, eq) == pytest.approx(
        control_A(eta, GAINS_A, eq), abs=1e-9
    )
    # saturation: y1 -> infinity drives the first term to beta/lambda1
    big = control_measured(1e12 * sens.y1_star, sens.y2_star, sens, GAINS_A, eq)
    assert big == pytest.approx(eq.u_star + GAINS_A.beta / eq.lambda1, abs=1e-9)
    with pytest.raises(ValueError, match="positive"):
        control_measured(-1.0, 1.0, sens, GAINS_A, eq)


def test_bound_controller_dispatch(setup400):
    eq = setup400.eq
    state = ic_from_spec(ICSpec(kind="FQ"), eq)
    for kind in ("open_loop", "control_a", "control_b", "feedback_linearizing", "measured"):
        spec = (
            ControllerSpec(kind=kind, eps=0.01, beta=0.13, delta=0.2)
            if kind == "control_b"
            else ControllerSpec(kind=kind)
        )
        bound = BoundController(spec, eq, setup400.adj)
        u = bound.u_from_state(state.x1, state.x2)
        assert np.isfinite(u)
    for sensor in ("interaction", "birth", "uniform"):
        bound = BoundController(ControllerSpec(kind="measured", sensor=sensor),
                                eq, setup400.adj)
        assert np.isfinite(bound.u_from_state(state.x1, state.x2))
        assert bound.sensors.y1_star > 0 and bound.sensors.y2_star > 0
    with pytest.raises(GainConstraintError, match="unknown controller kind"):
        ControllerSpec(kind="bogus")
    with pytest.raises(GainConstraintError, match="sensor"):
        BoundController(ControllerSpec(kind="measured", sensor="sonar"),
                        eq, setup400.adj)
