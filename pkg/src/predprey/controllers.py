"""Dilution feedback laws and their gain constraints.

All laws act on the log-abundance pair eta through the saturating functions
phi_1, phi_2; evaluation broadcasts over numpy arrays so sweeps and region
plots can run vectorized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import Equilibrium
from .errors import GainConstraintError
from .model import PopulationState, check_grid_fn, quad
from .transform import AdjointData, pi_functional

# Exponent clamp: keeps exp() finite for absurd eta without affecting any
# realistic state (phi saturates long before |eta| = 700).
_ETA_CLIP = 700.0


def _e_neg(eta1):
    return np.exp(-np.clip(eta1, -_ETA_CLIP, _ETA_CLIP))


def _e_pos(eta2):
    return np.exp(np.clip(eta2, -_ETA_CLIP, _ETA_CLIP))


def phi(eta, eq: Equilibrium):
    """Saturating state functions (phi_1, phi_2).

    phi_1 = (1 - exp(-eta1))/lambda1 <= 1/lambda1 and
    phi_2 = lambda2*(exp(eta2) - 1) >= -lambda2.
    """
    eta = np.asarray(eta, dtype=float)
    phi1 = -np.expm1(-np.clip(eta[..., 0], -_ETA_CLIP, _ETA_CLIP)) / eq.lambda1
    phi2 = eq.lambda2 * np.expm1(np.clip(eta[..., 1], -_ETA_CLIP, _ETA_CLIP))
    return phi1, phi2


def big_phi(eta, eq: Equilibrium):
    """Integrals of phi from 0: both nonnegative, zero only at zero.

    expm1 keeps the small-argument quadratic behavior accurate; the clamp to
    zero removes the last ulp of cancellation noise.
    """
    eta = np.asarray(eta, dtype=float)
    e1 = np.clip(eta[..., 0], -_ETA_CLIP, _ETA_CLIP)
    e2 = np.clip(eta[..., 1], -_ETA_CLIP, _ETA_CLIP)
    p1 = np.maximum(0.0, (np.expm1(-e1) + e1) / eq.lambda1)
    p2 = np.maximum(0.0, eq.lambda2 * (np.expm1(e2) - e2))
    return p1, p2


@dataclass(frozen=True)
class GainsA:
    """Gains of the unrestricted gradient feedback (control A)."""

    eps: float
    beta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise GainConstraintError(
                f"control A requires eps > 0, got eps={self.eps}"
            )
        bound = self.eps / (4.0 * (1.0 + self.eps))
        if not self.beta > bound:
            raise GainConstraintError(
                "control A requires beta > eps/(4*(1+eps)) = "
                f"{bound:.6g} for a positive definite decrease form; got beta={self.beta}"
            )


@dataclass(frozen=True)
class GainsB:
    """Gains of the saturated positive-dilution feedback (control B)."""

    eps: float
    beta: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise GainConstraintError(f"control B requires eps > 0, got eps={self.eps}")
        if self.beta < 0:
            raise GainConstraintError(f"control B requires beta >= 0, got beta={self.beta}")
        if not self.delta > 0:
            raise GainConstraintError(f"control B requires delta > 0, got delta={self.delta}")

    def validate(self, eq: Equilibrium) -> "GainsB":
        lhs = self.eps * eq.lambda2 + self.beta
        if not lhs < eq.u_star:
            raise GainConstraintError(
                "control B requires eps*lambda2 + beta < u_star to keep the "
                f"dilution positive; got {lhs:.6g} >= u_star = {eq.u_star:.6g}"
            )
        return self


def control_A(eta, gains: GainsA, eq: Equilibrium):
    """u = u_star + beta*(phi_1 + (1+eps)*phi_2); may go negative."""
    phi1, phi2 = phi(eta, eq)
    return eq.u_star + gains.beta * (phi1 + (1.0 + gains.eps) * phi2)


def control_B(eta, gains: GainsB, eq: Equilibrium):
    """Saturated law u = u_star + eps*phi_2 + beta*varphi/sqrt(delta^2 + min(0,varphi)^2).

    Under the gain constraint eps*lambda2 + beta < u_star the value stays
    above u_star - eps*lambda2 - beta > 0 for every state.
    """
    phi1, phi2 = phi(eta, eq)
    varphi = phi1 + (1.0 + gains.eps) * phi2
    neg = np.minimum(0.0, varphi)
    return eq.u_star + gains.eps * phi2 + gains.beta * varphi / np.sqrt(
        gains.delta**2 + neg**2
    )


def control_B_floor(gains: GainsB, eq: Equilibrium) -> float:
    """Analytic lower bound u_star - eps*lambda2 - beta of control B."""
    return eq.u_star - gains.eps * eq.lambda2 - gains.beta


def control_fblin(eta, k1: float, k2: float, eq: Equilibrium):
    """Exact feedback-linearizing law; kept for comparison runs only."""
    if not (k1 > 0 and k2 > 0):
        raise GainConstraintError(f"linearizing gains must be positive, got k1={k1}, k2={k2}")
    eta = np.asarray(eta, dtype=float)
    e1, e2 = eta[..., 0], eta[..., 1]
    phi1, phi2 = phi(eta, eq)
    den = eq.lambda2 * _e_pos(e2) + _e_neg(e1) / eq.lambda1
    num = (
        -k1 * (e1 - e2)
        + k2 * (phi1 + phi2)
        + eq.lambda2 * _e_pos(e2) * phi1
        - _e_neg(e1) / eq.lambda1 * phi2
    )
    return eq.u_star + num / den


def control_in_x(
    state: PopulationState,
    adj: tuple[AdjointData, AdjointData],
    eq: Equilibrium,
    gains: GainsA,
):
    """Control A evaluated on population profiles via the Pi functionals."""
    eta = np.array(
        [
            np.log(pi_functional(state.x1, adj[0], eq.grid)),
            np.log(pi_functional(state.x2, adj[1], eq.grid)),
        ]
    )
    return control_A(eta, gains, eq)


@dataclass(frozen=True)
class SensorSpec:
    """Sensor kernels with their equilibrium output values."""

    c1: np.ndarray
    c2: np.ndarray
    y1_star: float
    y2_star: float


def sensor_equilibrium(c1, c2, eq: Equilibrium) -> SensorSpec:
    """Equilibrium outputs y_i_star for sensor kernels c_i.

    Stored as quad(c_i * x_i_star); this agrees with the closed forms

        y1* = quad(c1*xt1) / ((zeta2 - u*) quad(g2*xt1)),
        y2* = (zeta1 - u*) quad(c2*xt2) / quad(g1*xt2),

    because the newborn densities are built from the same integrals.
    """
    grid = eq.grid
    c1 = check_grid_fn(c1, grid, "c1")
    c2 = check_grid_fn(c2, grid, "c2")
    for name, c in (("c1", c1), ("c2", c2)):
        if np.any(c < 0):
            raise ValueError(f"sensor kernel {name} must be nonnegative")
        if not quad(c, grid) > 0:
            raise ValueError(f"sensor kernel {name} must have a positive integral")
    y1 = quad(c1 * eq.x1_star, grid)
    y2 = quad(c2 * eq.x2_star, grid)
    return SensorSpec(c1=c1, c2=c2, y1_star=y1, y2_star=y2)


def sensor_equilibrium_closed_form(c1, c2, eq: Equilibrium) -> tuple[float, float]:
    """The y_i_star closed forms written on the unit-newborn profiles."""
    grid = eq.grid
    y1 = quad(np.asarray(c1, dtype=float) * eq.xtilde1, grid) / (
        (eq.zeta2 - eq.u_star) * quad(eq.kernels.g2 * eq.xtilde1, grid)
    )
    y2 = (eq.zeta1 - eq.u_star) * quad(np.asarray(c2, dtype=float) * eq.xtilde2, grid) / quad(
        eq.kernels.g1 * eq.xtilde2, grid
    )
    return y1, y2


def control_measured(y1, y2, sensors: SensorSpec, gains: GainsA, eq: Equilibrium):
    """Measurement-based approximation of control A from scalar outputs.

    Exact when the shape deviations vanish; otherwise it neglects their
    decaying contribution, so no stability guarantee is attached.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("measurements must be strictly positive")
    term1 = (1.0 - sensors.y1_star / y1) / eq.lambda1
    term2 = (1.0 + gains.eps) * eq.lambda2 * (1.0 - y2 / sensors.y2_star)
    return eq.u_star + gains.beta * (term1 - term2)


KINDS = ("open_loop", "control_a", "control_b", "feedback_linearizing", "measured")


@dataclass(frozen=True)
class ControllerSpec:
    """Tagged choice of feedback law plus its gains."""

    kind: str = "open_loop"
    eps: float = 0.2
    beta: float = 0.6
    delta: float = 0.2
    k1: float = 1.0
    k2: float = 2.0
    sensor: str = "interaction"  # interaction: c_i = g_j; birth: c_i = k_i; uniform
    u_const: float | None = None  # open-loop override; defaults to u_star

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GainConstraintError(
                f"unknown controller kind {self.kind!r}; expected one of {KINDS}"
            )


class BoundController:
    """A ControllerSpec bound to an equilibrium: callable on either state form.

    Gain constraints are checked here, once, so the per-step evaluations stay
    unguarded.
    """

    def __init__(self, spec: ControllerSpec, eq: Equilibrium,
                 adj: tuple[AdjointData, AdjointData]):
        self.spec = spec
        self.eq = eq
        self.adj = adj
        self.gains_a = None
        self.gains_b = None
        self.sensors = None
        if spec.kind in ("control_a", "measured"):
            self.gains_a = GainsA(eps=spec.eps, beta=spec.beta)
        if spec.kind == "control_b":
            self.gains_b = GainsB(eps=spec.eps, beta=spec.beta, delta=spec.delta).validate(eq)
        if spec.kind == "measured":
            self.sensors = sensor_equilibrium(*self._sensor_kernels(), eq)

    def _sensor_kernels(self):
        k = self.eq.kernels
        if self.spec.sensor == "interaction":
            return k.g2, k.g1
        if self.spec.sensor == "birth":
            return k.k1, k.k2
        if self.spec.sensor == "uniform":
            ones = np.ones(self.eq.grid.n_nodes)
            return ones, ones
        raise GainConstraintError(
            f"unknown sensor choice {self.spec.sensor!r}; expected "
            "interaction, birth or uniform"
        )

    @property
    def needs_profiles(self) -> bool:
        return self.spec.kind == "measured"

    def u_from_eta(self, eta) -> float:
        kind = self.spec.kind
        if kind == "open_loop":
            return self.eq.u_star if self.spec.u_const is None else self.spec.u_const
        if kind == "control_a":
            return float(control_A(eta, self.gains_a, self.eq))
        if kind == "control_b":
            return float(control_B(eta, self.gains_b, self.eq))
        if kind == "feedback_linearizing":
            return float(control_fblin(eta, self.spec.k1, self.spec.k2, self.eq))
        raise GainConstraintError(
            "the measurement-based law needs population profiles, not eta"
        )

    def u_from_state(self, x1, x2) -> float:
        kind = self.spec.kind
        if kind == "open_loop":
            return self.eq.u_star if self.spec.u_const is None else self.spec.u_const
        if kind == "measured":
            grid = self.eq.grid
            y1 = quad(self.sensors.c1 * x1, grid)
            y2 = quad(self.sensors.c2 * x2, grid)
            return float(control_measured(y1, y2, self.sensors, self.gains_a, self.eq))
        eta = np.array(
            [
                np.log(pi_functional(x1, self.adj[0], self.eq.grid)),
                np.log(pi_functional(x2, self.adj[1], self.eq.grid)),
            ]
        )
        return self.u_from_eta(eta)
