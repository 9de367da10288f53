"""Lyapunov functions, decrease certificates, and region-of-attraction estimates.

Two analysis modes are supported, one per feedback law:

* ``gradient`` (control A): quadratic-form decrease with matrix Q, constraint
  region cut by the eta box and the positivity of the feedback itself;
* ``saturated`` (control B): saturated decrease, constraint region cut by a
  tighter eta box and a lower bound on varphi = phi_1 + (1+eps)*phi_2.

Both modes share the composite functional
V = V1(eta) + sum_i (gamma_i/sigma_i) h(G_i(psi_i)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import golden

from .controllers import GainsA, GainsB, big_phi, control_A, phi
from .equilibrium import Equilibrium
from .errors import GainConstraintError, NumericalError
from .model import AgeGrid, check_grid_fn, cumulative, quad
from .transform import HistoryBuffer


# ---------------------------------------------------------------------------
# scalar Lyapunov functions on eta


def v0(eta, eq: Equilibrium):
    """Drift-free invariant of the uncontrolled reduced dynamics."""
    p1, p2 = big_phi(eta, eq)
    return p1 + p2


def v1(eta, eps: float, eq: Equilibrium):
    """Weighted candidate V1 = Phi_1 + (1+eps)*Phi_2."""
    p1, p2 = big_phi(eta, eq)
    return p1 + (1.0 + eps) * p2


def q_matrix(eps: float, beta: float) -> np.ndarray:
    """Symmetric decrease form of control A on the reduced model.

    Defined by the identity dV1/dt = -[phi1 phi2] Q [phi1 phi2]^T along the
    closed loop, which fixes the off-diagonal as (2*beta*(1+eps) - eps)/2;
    the spectrum is insensitive to the sign of that entry.
    """
    GainsA(eps=eps, beta=beta)  # validates positivity constraints
    off = (2.0 * beta * (1.0 + eps) - eps) / 2.0
    return np.array([[beta, off], [off, beta * (1.0 + eps) ** 2]])


def lambda_min_q(eps: float, beta: float) -> float:
    """Smaller eigenvalue of the decrease form, by rationalized closed form."""
    GainsA(eps=eps, beta=beta)
    c = 1.0 + (1.0 + eps) ** 2
    num = eps * (4.0 * (1.0 + eps) * beta - eps)
    disc = beta * beta * c * c - num
    return 0.5 * num / (beta * c + math.sqrt(disc))


# ---------------------------------------------------------------------------
# h and the history functionals


def _h_integrand(z):
    # (e^z - 1)^2 / z with the removable zero at z = 0; overflows to inf for
    # arguments beyond the double range, which h propagates.
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    nz = z != 0.0
    with np.errstate(over="ignore"):
        out[nz] = np.expm1(z[nz]) ** 2 / z[nz]
    return out


# Relative floor on the Simpson acceptance test: for O(1) integrals the
# absolute tolerance governs; for the astronomically large values h takes at
# big arguments (integrand ~ e^{2p}/p) an absolute target is unreachable in
# floating point and the recursion must switch to relative accuracy.
H_REL_TOL = 1e-12


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if not np.isfinite(left + right):
        return left + right
    tol_eff = max(tol, H_REL_TOL * abs(left + right))
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol_eff:
        return left + right + (left + right - whole) / 15.0
    return _adaptive_simpson(
        f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1
    ) + _adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)


def _integrate_segment(a, b, tol):
    f = lambda z: float(_h_integrand(z))
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48)


H_TOL = 1e-9


def h_fn(p: float, tol: float = H_TOL) -> float:
    """Radially unbounded weight h(p) = integral_0^p (e^z - 1)^2 / z dz."""
    if p < 0:
        raise ValueError(f"h is defined for nonnegative arguments, got {p}")
    if p == 0.0:
        return 0.0
    return _integrate_segment(0.0, float(p), tol)


def h_fn_many(ps, tol: float = H_TOL) -> np.ndarray:
    """Vectorized h: integrates once over the sorted values and maps back."""
    ps = np.asarray(ps, dtype=float)
    flat = ps.ravel()
    if flat.size == 0:
        return np.zeros_like(ps)
    if np.any(flat < 0):
        raise ValueError("h is defined for nonnegative arguments")
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.empty_like(uniq)
    prev_p, prev_h = 0.0, 0.0
    for j, p in enumerate(uniq):
        if p == prev_p:
            vals[j] = prev_h
        else:
            prev_h = prev_h + _integrate_segment(prev_p, float(p), tol)
            prev_p = float(p)
            vals[j] = prev_h
    return vals[inv].reshape(ps.shape)


def g_fn(psi: HistoryBuffer, sigma: float) -> float:
    """Exponentially weighted sup of the history, penalized by its worst dip.

    G = max_a |psi(-a)| e^{sigma (A - a)} / (1 + min(0, min psi)).
    """
    s = psi.samples
    floor = min(0.0, float(s.min()))
    if 1.0 + floor <= 0.0:
        raise ValueError("history contains a sample <= -1; G is undefined")
    weights = np.exp(sigma * (psi.grid.A - psi.grid.nodes))
    return float(np.max(np.abs(s) * weights) / (1.0 + floor))


def g_fn_weights(grid: AgeGrid, sigma: float) -> np.ndarray:
    """Precomputed weights for evaluating G in a tight loop."""
    return np.exp(sigma * (grid.A - grid.nodes))


# ---------------------------------------------------------------------------
# birth-kernel contraction constants (kappa, sigma)


class AssumptionUnverifiable(NumericalError):
    """The birth-kernel contraction could not be certified at this resolution."""


def find_sigma(
    ktilde,
    grid: AgeGrid,
    sigma_max: float = 50.0,
    kappa_range: tuple[float, float] = (1e-3, 1e3),
    rel_gap: float = 1e-6,
) -> tuple[float, float]:
    """Certify the birth-kernel contraction and its decay exponent.

    Minimizes J(kappa) = quad(|ktilde - z*kappa*int_a^A ktilde|) by
    golden-section search (multi-start over log-spaced windows, since only
    unimodality is guaranteed locally).  If the minimum is below one, the
    largest sigma with the exp(sigma*a)-weighted integral still below one is
    located by bisection; the weighted integral at the returned sigma lies in
    [1 - rel_gap, 1).
    """
    ktilde = check_grid_fn(ktilde, grid, "ktilde")
    a = grid.nodes
    kc = cumulative(ktilde, grid)
    tail = kc[-1] - kc
    z = 1.0 / quad(a * ktilde, grid)

    def J(kappa: float, sigma: float = 0.0) -> float:
        return quad(np.abs(ktilde - z * kappa * tail) * np.exp(sigma * a), grid)

    lo, hi = kappa_range
    edges = np.geomspace(lo, hi, 5)
    best_kappa, best_val = None, np.inf
    for wlo, whi in zip(edges[:-1], edges[1:]):
        kap = float(golden(J, brack=(wlo, whi), tol=1e-10))
        val = J(kap)
        if val < best_val:
            best_kappa, best_val = kap, val
    if not best_val < 1.0:
        raise AssumptionUnverifiable(
            "birth-kernel contraction unverifiable at this resolution: "
            f"min J(kappa) = {best_val:.6g} >= 1",
            reason="contraction_unverifiable",
        )

    if J(best_kappa, sigma_max) < 1.0:
        return best_kappa, sigma_max
    s_lo, s_hi = 0.0, sigma_max
    while J(best_kappa, s_lo) < 1.0 - rel_gap:
        s_mid = 0.5 * (s_lo + s_hi)
        if J(best_kappa, s_mid) < 1.0:
            s_lo = s_mid
        else:
            s_hi = s_mid
    if s_lo == 0.0:
        raise AssumptionUnverifiable(
            "no positive decay exponent found: weighted integral exceeds one "
            "immediately",
            reason="contraction_unverifiable",
        )
    return best_kappa, s_lo


# ---------------------------------------------------------------------------
# composite functional and regions

SIGMA_SAFETY = 0.9
GAMMA_SAFETY = 2.0


@dataclass(frozen=True)
class LyapConfig:
    """Weights and constants for the composite functional and its region.

    mode ``gradient`` pairs with control A gains, ``saturated`` with control B gains
    (which add delta and the analysis constant varpi).
    """

    mode: str
    eps: float
    beta: float
    gamma1: float
    gamma2: float
    sigma1: float
    sigma2: float
    kappa1: float
    kappa2: float
    delta: float | None = None
    varpi: float | None = None

    def __post_init__(self):
        if self.mode not in ("gradient", "saturated"):
            raise GainConstraintError(f"unknown analysis mode {self.mode!r}")
        for name in ("gamma1", "gamma2", "sigma1", "sigma2", "kappa1", "kappa2"):
            if not getattr(self, name) > 0:
                raise GainConstraintError(f"{name} must be positive")


def gamma_circ(eps: float, beta: float) -> float:
    """Reference weight (1+eps) / (2*lambda_min(Q)) of the gradient mode."""
    return (1.0 + eps) / (2.0 * lambda_min_q(eps, beta))


def gamma_lower_bounds(mode: str, eps: float, beta: float, eq: Equilibrium,
                       varpi: float | None = None) -> tuple[float, float]:
    if mode == "gradient":
        gc = gamma_circ(eps, beta)
        return gc / eq.lambda1**2, eq.lambda2**2 * gc
    if varpi is None:
        raise GainConstraintError("saturated gamma bounds need the analysis constant varpi")
    lo1 = 2.0 * (1.0 + eps) / (eps * eq.lambda1**2)
    lo2 = 2.0 * eq.lambda2**2 * (1.0 + eps) / eps + 1.0 / varpi
    return lo1, lo2


def validate_lyap_config(cfg: LyapConfig, eq: Equilibrium) -> LyapConfig:
    """Enforce the strict weight inequalities of the active mode."""
    if cfg.mode == "gradient":
        GainsA(eps=cfg.eps, beta=cfg.beta)
        lo1, lo2 = gamma_lower_bounds("gradient", cfg.eps, cfg.beta, eq)
    else:
        if cfg.delta is None or cfg.varpi is None:
            raise GainConstraintError("saturated mode needs delta and varpi")
        GainsB(eps=cfg.eps, beta=cfg.beta, delta=cfg.delta)
        if not cfg.beta > 0:
            raise GainConstraintError("saturated mode requires beta > 0")
        if not 0.0 < cfg.varpi < cfg.beta / cfg.delta:
            raise GainConstraintError(
                f"saturated mode requires 0 < varpi < beta/delta = "
                f"{cfg.beta / cfg.delta:.6g}; got varpi={cfg.varpi}"
            )
        lo1, lo2 = gamma_lower_bounds("saturated", cfg.eps, cfg.beta, eq, cfg.varpi)
    if not cfg.gamma1 > lo1:
        raise GainConstraintError(
            f"gamma1 must exceed its lower bound {lo1:.6g} strictly; got {cfg.gamma1:.6g}"
        )
    if not cfg.gamma2 > lo2:
        raise GainConstraintError(
            f"gamma2 must exceed its lower bound {lo2:.6g} strictly; got {cfg.gamma2:.6g}"
        )
    return cfg


def default_lyap_config(
    mode: str,
    eps: float,
    beta: float,
    eq: Equilibrium,
    sigma: tuple[float, float],
    kappa: tuple[float, float],
    delta: float | None = None,
    varpi: float | None = None,
    gamma1: float | None = None,
    gamma2: float | None = None,
) -> LyapConfig:
    """Fill unspecified weights: gammas at twice their lower bounds; in the
    saturated mode the analysis constant varpi defaults to beta/(2*delta)."""
    if mode == "saturated" and varpi is None:
        if delta is None:
            raise GainConstraintError("saturated mode needs delta")
        varpi = beta / (2.0 * delta)
    lo1, lo2 = gamma_lower_bounds(mode, eps, beta, eq, varpi)
    cfg = LyapConfig(
        mode=mode,
        eps=eps,
        beta=beta,
        gamma1=gamma1 if gamma1 is not None else GAMMA_SAFETY * lo1,
        gamma2=gamma2 if gamma2 is not None else GAMMA_SAFETY * lo2,
        sigma1=sigma[0],
        sigma2=sigma[1],
        kappa1=kappa[0],
        kappa2=kappa[1],
        delta=delta,
        varpi=varpi,
    )
    return validate_lyap_config(cfg, eq)


def v_full(eta, psi1: HistoryBuffer, psi2: HistoryBuffer, cfg: LyapConfig, eq: Equilibrium) -> float:
    """V = V1(eta) + (gamma1/sigma1) h(G1) + (gamma2/sigma2) h(G2)."""
    val = float(v1(eta, cfg.eps, eq))
    val += cfg.gamma1 / cfg.sigma1 * h_fn(g_fn(psi1, cfg.sigma1))
    val += cfg.gamma2 / cfg.sigma2 * h_fn(g_fn(psi2, cfg.sigma2))
    return val


def bounds_H(cfg: LyapConfig, eq: Equilibrium) -> tuple[float, float]:
    """Positive box bounds: membership requires eta1 >= -H1 and eta2 <= H2."""
    if cfg.mode == "gradient":
        gc = gamma_circ(cfg.eps, cfg.beta)
        h1 = math.log(eq.lambda1 * math.sqrt(cfg.gamma1 / gc))
        h2 = math.log(math.sqrt(cfg.gamma2 / gc) / eq.lambda2)
    else:
        scale = cfg.eps / (2.0 * (1.0 + cfg.eps))
        h1 = math.log(eq.lambda1 * math.sqrt(scale * cfg.gamma1))
        h2 = math.log(math.sqrt(scale * (cfg.gamma2 - 1.0 / cfg.varpi)) / eq.lambda2)
    if not (h1 > 0 and h2 > 0):
        raise GainConstraintError(
            f"region bounds must be positive, got H1={h1:.6g}, H2={h2:.6g}; "
            "increase gamma1/gamma2"
        )
    return h1, h2


def phi_lower_bound(cfg: LyapConfig) -> float:
    """Saturated-mode constraint: varphi >= -sqrt(beta^2/varpi^2 - delta^2)."""
    return -math.sqrt(cfg.beta**2 / cfg.varpi**2 - cfg.delta**2)


def region_gradient(eta, cfg: LyapConfig, eq: Equilibrium):
    """Membership in the gradient region (broadcasts over eta[..., 2]).

    The constraints depend on eta only; histories never enter.
    """
    h1, h2 = bounds_H(cfg, eq)
    eta = np.asarray(eta, dtype=float)
    u_val = control_A(eta, GainsA(cfg.eps, cfg.beta), eq)
    return (eta[..., 0] >= -h1) & (eta[..., 1] <= h2) & (u_val > 0.0)


def region_saturated(eta, cfg: LyapConfig, eq: Equilibrium):
    """Membership in the saturated region (broadcasts over eta[..., 2])."""
    h1, h2 = bounds_H(cfg, eq)
    eta = np.asarray(eta, dtype=float)
    phi1, phi2 = phi(eta, eq)
    varphi = phi1 + (1.0 + cfg.eps) * phi2
    return (eta[..., 0] >= -h1) & (eta[..., 1] <= h2) & (varphi > phi_lower_bound(cfg))


def region_membership(eta, cfg: LyapConfig, eq: Equilibrium):
    return region_gradient(eta, cfg, eq) if cfg.mode == "gradient" else region_saturated(eta, cfg, eq)


def u_zero_curve(eta1, cfg: LyapConfig, eq: Equilibrium):
    """eta2 on which control A vanishes; nan where u > 0 for every eta2."""
    eta1 = np.asarray(eta1, dtype=float)
    arg = 1.0 + (
        np.exp(-eta1) - 1.0 - eq.lambda1 * eq.u_star / cfg.beta
    ) / ((1.0 + cfg.eps) * eq.lambda1 * eq.lambda2)
    out = np.full_like(arg, np.nan)
    ok = arg > 0
    out[ok] = np.log(arg[ok])
    return out


def phi_bound_curve(eta1, cfg: LyapConfig, eq: Equilibrium):
    """eta2 on which varphi equals its saturated lower bound; nan where undefined."""
    eta1 = np.asarray(eta1, dtype=float)
    phi1 = (1.0 - np.exp(-eta1)) / eq.lambda1
    arg = 1.0 + (phi_lower_bound(cfg) - phi1) / ((1.0 + cfg.eps) * eq.lambda2)
    out = np.full_like(arg, np.nan)
    ok = arg > 0
    out[ok] = np.log(arg[ok])
    return out


def hyperbola_boundary(q1, cfg: LyapConfig, eq: Equilibrium):
    """saturated boundary in exponentiated variables q_i = e^{eta_i} - 1."""
    q1 = np.asarray(q1, dtype=float)
    s = -phi_lower_bound(cfg)
    return (1.0 / (1.0 + q1) - (1.0 + eq.lambda1 * s)) / (
        (1.0 + cfg.eps) * eq.lambda1 * eq.lambda2
    )


# ---------------------------------------------------------------------------
# region-of-attraction level set


@dataclass
class RoaResult:
    mode: str
    c_star: float
    argmin_eta: np.ndarray
    active_piece: str
    pieces: dict  # label -> (eta array (m,2), V1 values (m,))
    H1: float
    H2: float


def _refine_min(param_eval, s_lo, s_hi, rounds=4, n=2001):
    """Dense-sample a parametric boundary piece and zoom on its V1 minimum."""
    best = (np.inf, None)
    for _ in range(rounds):
        s = np.linspace(s_lo, s_hi, n)
        eta, vals = param_eval(s)
        if vals.size == 0 or np.all(np.isnan(vals)):
            return best
        j = int(np.nanargmin(vals))
        if vals[j] < best[0]:
            best = (float(vals[j]), eta[j])
        lo_j, hi_j = max(j - 1, 0), min(j + 1, len(s) - 1)
        s_lo, s_hi = s[lo_j], s[hi_j]
    return best


def roa_estimate(cfg: LyapConfig, eq: Equilibrium, n_samples: int = 10_000) -> RoaResult:
    """Largest invariant level of V1 inside the mode's region.

    The region constraints involve eta only (asserted by construction of the
    membership evaluators), and the history terms of V are nonnegative, so the
    level follows from minimizing V1 over the three eta-boundary pieces: the
    two box lines and the feedback-positivity (gradient) or varphi-bound (saturated)
    curve.  Each piece is densely sampled with local refinement.
    """
    validate_lyap_config(cfg, eq)
    h1, h2 = bounds_H(cfg, eq)
    span = 4.0 + 2.0 * max(h1, h2)

    def mask_other(eta, skip):
        keep = np.ones(eta.shape[0], dtype=bool)
        if skip != "H1":
            keep &= eta[:, 0] >= -h1 - 1e-12
        if skip != "H2":
            keep &= eta[:, 1] <= h2 + 1e-12
        if skip != "curve":
            if cfg.mode == "gradient":
                u_val = control_A(eta, GainsA(cfg.eps, cfg.beta), eq)
                keep &= u_val >= -1e-12
            else:
                p1, p2 = phi(eta, eq)
                keep &= p1 + (1.0 + cfg.eps) * p2 >= phi_lower_bound(cfg) - 1e-12
        return keep

    curve_fn = u_zero_curve if cfg.mode == "gradient" else phi_bound_curve
    curve_label = "u_zero" if cfg.mode == "gradient" else "phi_bound"

    def eval_h1_line(s):
        eta = np.column_stack([np.full_like(s, -h1), s])
        vals = np.asarray(v1(eta, cfg.eps, eq), dtype=float)
        vals[~mask_other(eta, "H1")] = np.nan
        return eta, vals

    def eval_h2_line(s):
        eta = np.column_stack([s, np.full_like(s, h2)])
        vals = np.asarray(v1(eta, cfg.eps, eq), dtype=float)
        vals[~mask_other(eta, "H2")] = np.nan
        return eta, vals

    def eval_curve(s):
        e2 = curve_fn(s, cfg, eq)
        eta = np.column_stack([s, e2])
        vals = np.asarray(v1(eta, cfg.eps, eq), dtype=float)
        vals[np.isnan(e2)] = np.nan
        vals[~mask_other(eta, "curve")] = np.nan
        return eta, vals

    n_coarse = max(101, n_samples // 3)
    pieces = {}
    best = (np.inf, None, None)
    for label, ev, (s_lo, s_hi) in (
        ("H1", eval_h1_line, (-span, min(h2, span))),
        ("H2", eval_h2_line, (-h1, span)),
        (curve_label, eval_curve, (-h1, span)),
    ):
        s = np.linspace(s_lo, s_hi, n_coarse)
        eta, vals = ev(s)
        keep = ~np.isnan(vals)
        pieces[label] = (eta[keep], vals[keep])
        val, arg = _refine_min(ev, s_lo, s_hi)
        if arg is not None and val < best[0]:
            best = (val, arg, label)

    if best[1] is None:
        raise GainConstraintError("the constraint region is empty; bad Lyapunov weights")
    return RoaResult(
        mode=cfg.mode,
        c_star=best[0],
        argmin_eta=np.asarray(best[1]),
        active_piece=best[2],
        pieces=pieces,
        H1=h1,
        H2=h2,
    )


def level_contour(c: float, eps: float, eq: Equilibrium, n_rays: int = 400) -> np.ndarray:
    """Closed polyline of V1 = c, traced by radial bisection from the origin."""
    if not c > 0:
        raise ValueError(f"level must be positive, got {c}")
    angles = np.linspace(0.0, 2.0 * np.pi, n_rays, endpoint=False)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    r_hi = np.full(n_rays, 1.0)
    # V1 is convex with minimum 0 at the origin: push radii out until outside.
    for _ in range(60):
        vals = v1(r_hi[:, None] * dirs, eps, eq)
        inside = vals < c
        if not np.any(inside):
            break
        r_hi[inside] *= 2.0
    r_lo = np.zeros(n_rays)
    for _ in range(60):
        r_mid = 0.5 * (r_lo + r_hi)
        vals = v1(r_mid[:, None] * dirs, eps, eq)
        inside = vals < c
        r_lo = np.where(inside, r_mid, r_lo)
        r_hi = np.where(inside, r_hi, r_mid)
    r = 0.5 * (r_lo + r_hi)
    pts = r[:, None] * dirs
    return np.vstack([pts, pts[:1]])


def verify_level_set(result: RoaResult, cfg: LyapConfig, eq: Equilibrium,
                     n_grid: int = 400) -> int:
    """Count grid points with V1 < c_star that fall outside the region.

    Zero violations certifies the level-set construction on an n_grid^2 mesh
    covering the sublevel set.
    """
    contour = level_contour(result.c_star, cfg.eps, eq, n_rays=200)
    lo = contour.min(axis=0) * 1.3 - 0.1
    hi = contour.max(axis=0) * 1.3 + 0.1
    e1 = np.linspace(lo[0], hi[0], n_grid)
    e2 = np.linspace(lo[1], hi[1], n_grid)
    E1, E2 = np.meshgrid(e1, e2)
    eta = np.stack([E1, E2], axis=-1)
    vals = v1(eta, cfg.eps, eq)
    member = region_membership(eta, cfg, eq)
    return int(np.count_nonzero((vals < result.c_star) & ~member))


# ---------------------------------------------------------------------------
# decrease checks along trajectories

DINI_ALLOWANCE = 5.0


def decrease_rate(eta, g1_val, g2_val, cfg: LyapConfig, eq: Equilibrium):
    """Certified decrease W(eta, G) >= -D+V of the active mode."""
    phi1, phi2 = phi(eta, eq)
    eg1 = np.expm1(np.asarray(g1_val, dtype=float))
    eg2 = np.expm1(np.asarray(g2_val, dtype=float))
    tail = 0.5 * cfg.gamma1 * eg1**2 + 0.5 * cfg.gamma2 * eg2**2
    if cfg.mode == "gradient":
        lam = lambda_min_q(cfg.eps, cfg.beta)
        return 0.5 * lam * (phi1**2 + phi2**2) + tail
    varphi = phi1 + (1.0 + cfg.eps) * phi2
    neg = np.minimum(0.0, varphi)
    sat = varphi**2 / np.sqrt(cfg.delta**2 + neg**2)
    return cfg.eps / (2.0 * (1.0 + cfg.eps)) * phi2**2 + 0.5 * cfg.beta * sat + tail


def dini_check(traj, cfg: LyapConfig, eq: Equilibrium) -> float:
    """Worst forward-difference violation of D+V <= -W along a trajectory.

    Returns max over steps of dV/dt + W minus the O(dt) allowance
    DINI_ALLOWANCE * dt * (1 + |V|); nonpositive (up to a small tolerance)
    certifies the decrease numerically.
    """
    if traj.V is None or traj.G1 is None:
        raise ValueError("trajectory lacks recorded Lyapunov series")
    t = traj.times
    dt = np.diff(t)
    dV = np.diff(traj.V) / dt
    w = decrease_rate(traj.eta[:-1], traj.G1[:-1], traj.G2[:-1], cfg, eq)
    allowance = DINI_ALLOWANCE * dt * (1.0 + np.abs(traj.V[:-1]))
    return float(np.max(dV + w - allowance))


def conservation_check(traj) -> float:
    """Max relative drift rate |dV0/dt| / V0(0) along an open-loop run."""
    if traj.V0 is None:
        raise ValueError("trajectory lacks a V0 series")
    ref = abs(traj.V0[0])
    if ref == 0.0:
        ref = 1.0
    dV = np.abs(np.diff(traj.V0) / np.diff(traj.times))
    return float(np.max(dV) / ref)


G_DEFECT_ALLOWANCE = 10.0


def g_decrease_violations(traj, cfg: LyapConfig, tol_frac: float = 0.1,
                          defect_allowance: float = G_DEFECT_ALLOWANCE) -> tuple[int, int]:
    """Count steps where G_i fails its exponential decrease within tolerance.

    The bound G(t+dt) <= G(t)*(1 - sigma*(1 - tol_frac)*dt) carries an
    additive allowance defect_allowance*dt^2*G(0) per step: the trapezoid
    renewal leaks its conserved projection at O(dt^2) per step, which
    accumulates into a small persistent floor that the multiplicative bound
    alone would flag forever.
    """
    dt = np.diff(traj.times)
    counts = []
    for series, sigma in ((traj.G1, cfg.sigma1), (traj.G2, cfg.sigma2)):
        if series is None:
            raise ValueError("trajectory lacks recorded G series")
        atol = defect_allowance * dt**2 * (series[0] if series[0] > 0 else 1.0)
        bound = series[:-1] * (1.0 + (-sigma + tol_frac * sigma) * dt) + atol
        counts.append(int(np.count_nonzero(series[1:] > bound)))
    return counts[0], counts[1]


# ---------------------------------------------------------------------------
# closed-loop linearizations


def closed_loop_jacobian(kind: str, gains, eq: Equilibrium) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian at the origin of the reduced closed loop, with eigenvalues.

    control A: d/deta of (-beta*phi1 - (1+beta(1+eps))*phi2,
                          (1-beta)*phi1 - beta(1+eps)*phi2);
    control B: the saturated law linearizes with slope k = beta/delta.
    """
    lam1, lam2 = eq.lambda1, eq.lambda2
    if kind == "control_a":
        eps, beta = gains.eps, gains.beta
        jac = np.array(
            [
                [-beta / lam1, -(1.0 + beta * (1.0 + eps)) * lam2],
                [(1.0 - beta) / lam1, -beta * (1.0 + eps) * lam2],
            ]
        )
    elif kind == "control_b":
        eps = gains.eps
        k = gains.beta / gains.delta
        jac = np.array(
            [
                [-k / lam1, -(1.0 + eps) * lam2 * (1.0 + k)],
                [(1.0 - k) / lam1, -eps * lam2 - k * (1.0 + eps) * lam2],
            ]
        )
    else:
        raise ValueError(f"no closed-loop Jacobian for controller kind {kind!r}")
    tr = jac[0, 0] + jac[1, 1]
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    disc = complex(tr * tr - 4.0 * det)
    root = np.sqrt(disc)
    eigs = np.array([(tr + root) / 2.0, (tr - root) / 2.0])
    return jac, eigs


def control_b_discriminant(gains: GainsB, eq: Equilibrium) -> float:
    """Damping indicator of the saturated loop; positive means real poles."""
    k = gains.beta / gains.delta
    lam1, lam2 = eq.lambda1, eq.lambda2
    s_coeff = k * (1.0 / lam1 + lam2) + gains.eps * lam2 * (1.0 + k)
    return s_coeff**2 - 4.0 * (1.0 + gains.eps * (1.0 + k)) * lam2 / lam1


def closed_loop_rhs(kind: str, gains, eq: Equilibrium):
    """Vector field of the reduced closed loop, for cross-checks."""
    from .controllers import control_B

    def f(eta):
        eta = np.asarray(eta, dtype=float)
        phi1, phi2 = phi(eta, eq)
        if kind == "control_a":
            u = control_A(eta, gains, eq)
        elif kind == "control_b":
            u = control_B(eta, gains, eq)
        else:
            raise ValueError(f"unsupported controller kind {kind!r}")
        return np.stack([eq.u_star - u - phi2, eq.u_star - u + phi1], axis=-1)

    return f


def fd_jacobian(f, x0, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian for validating the closed forms."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    cols = []
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = h
        cols.append((np.asarray(f(x0 + dx)) - np.asarray(f(x0 - dx))) / (2.0 * h))
    return np.column_stack(cols)
