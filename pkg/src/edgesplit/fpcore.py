"""Quadratic-transform surrogate of the weighted objective and its gradients.

For a fixed association the objective H contains ratios (compute cost over
frequency, payload over rate) and products of decision variables.  Each such
term x*y is replaced by the majorizer x^2*t + y^2/(4t) in an auxiliary
variable t > 0, giving a surrogate K that is jointly convex in
(alpha, p, b, f_user, f_edge) for fixed auxiliaries and satisfies

    K(dec, aux) >= H(dec)      for every positive aux,
    K(dec, aux*(dec)) = H(dec) with aux* in closed form.

Both gradients are transcribed analytically; with aux = aux*(dec) they agree
componentwise, which is what makes the alternating loop land on a stationary
point of the original problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PoleError
from .model import Decision, EdgeServer, LlmConfig, UserDevice, Weights, Workspace

LN2 = math.log(2.0)

# Floor applied to closed-form auxiliaries so that degenerate zero-weight
# instances (A or B identically zero) keep the surrogate finite.
AUX_FLOOR = 1e-300

# An edge share (Upsilon - alpha) below this is treated as "no edge work":
# the corresponding surrogate terms and auxiliaries are skipped.
EDGE_EPS = 1e-12


@dataclass
class AuxVars:
    """Closed-form auxiliary variables; entries on inactive pairs are 1."""

    z: np.ndarray
    nu: np.ndarray
    q: np.ndarray


@dataclass
class GradientBundle:
    """Partial derivatives by decision block; zero on non-associated pairs."""

    d_alpha: np.ndarray
    d_p: np.ndarray
    d_b: np.ndarray
    d_f_user: np.ndarray
    d_f_edge: np.ndarray

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(g))) for g in
                   (self.d_alpha, self.d_p, self.d_b, self.d_f_user, self.d_f_edge))


def a_of(user: UserDevice, f: float, llm: LlmConfig, weights: Weights) -> float:
    """Weighted per-layer local cost A(f): delay term + cubic-power energy term."""
    if f <= 0:
        raise DomainError("frequency must be > 0")
    wt, we, _ = weights.effective()
    psi = float(np.asarray(
        72 * llm.batch_size * user.tokens * llm.hidden_dim**2
        + 12 * llm.batch_size * user.tokens**2 * llm.hidden_dim, dtype=float))
    cd = user.cores * user.flops_per_cycle
    return wt * psi / (f * cd) + we * user.kappa1 * f**2 * psi / cd


def b_of(server: EdgeServer, f: float, d: int, llm: LlmConfig, weights: Weights) -> float:
    """Weighted per-layer edge cost B(f), the server-side analog of A(f)."""
    if f <= 0:
        raise DomainError("frequency must be > 0")
    wt, we, _ = weights.effective()
    psi = float(72 * llm.batch_size * d * llm.hidden_dim**2
                + 12 * llm.batch_size * d**2 * llm.hidden_dim)
    cd = server.cores * server.flops_per_cycle
    return wt * psi / (f * cd) + we * server.kappa2 * f**2 * psi / cd


def _masks(ws: Workspace, dec: Decision):
    active = dec.chi > 0
    edge_active = active & ((ws.ups - dec.alpha)[:, None] > EDGE_EPS)
    return active, edge_active


def _check_interior(ws: Workspace, dec: Decision, active: np.ndarray) -> np.ndarray:
    if np.any(dec.p <= 0) or np.any(dec.f_user <= 0):
        raise DomainError("power and user frequency must be strictly positive")
    if np.any(dec.b[active] <= 0) or np.any(dec.f_edge[active] <= 0):
        raise DomainError("bandwidth and edge frequency must be positive on associated pairs")
    r = ws.rates(dec.p, dec.b)
    if np.any(r[active] <= 0):
        raise PoleError("zero uplink rate on an associated pair")
    return r


def aux_optimal(scenario_or_ws, dec: Decision) -> AuxVars:
    """Closed-form auxiliary update: the unique minimizer of K over aux.

    z_n = A(f_n)/(2 alpha_n), nu_nm = 1/(2 p_n s_n r_nm),
    q_nm = B(f_nm)/(2 (Upsilon - alpha_n)).
    """
    ws = scenario_or_ws if isinstance(scenario_or_ws, Workspace) else Workspace(scenario_or_ws)
    active, edge_active = _masks(ws, dec)
    r = _check_interior(ws, dec, active)

    z = np.maximum(ws.local_per_layer(dec.f_user) / (2.0 * dec.alpha), AUX_FLOOR)
    nu = np.ones_like(dec.chi)
    nu[active] = 1.0 / (2.0 * (dec.p[:, None] * ws.payload[:, None] * r)[active])
    q = np.ones_like(dec.chi)
    if np.any(edge_active):
        bmat = ws.edge_per_layer(np.where(edge_active, dec.f_edge, 1.0))
        gap = (ws.ups - dec.alpha)[:, None]
        q[edge_active] = np.maximum(
            bmat[edge_active] / (2.0 * gap.repeat(ws.m, axis=1)[edge_active]), AUX_FLOOR)
    return AuxVars(z, nu, q)


def surrogate_value(scenario_or_ws, dec: Decision, aux: AuxVars) -> float:
    """K(dec, aux): the convex majorizer of the objective at fixed aux."""
    ws = scenario_or_ws if isinstance(scenario_or_ws, Workspace) else Workspace(scenario_or_ws)
    if np.any(aux.z <= 0) or np.any(aux.nu <= 0) or np.any(aux.q <= 0):
        raise DomainError("auxiliary variables must be strictly positive")
    active, edge_active = _masks(ws, dec)
    r = _check_interior(ws, dec, active)

    a = ws.local_per_layer(dec.f_user)
    total = float(np.sum(dec.alpha**2 * aux.z + a**2 / (4.0 * aux.z)))

    ps = dec.p[:, None] * ws.payload[:, None]
    nu_term = (ps**2 * aux.nu + 1.0 / np.where(active, 4.0 * r**2 * aux.nu, 1.0))
    total += ws.we * float(np.sum((dec.chi * nu_term)[active]))

    if np.any(edge_active):
        bmat = ws.edge_per_layer(np.where(edge_active, dec.f_edge, 1.0))
        gap = (ws.ups - dec.alpha)[:, None]
        q_term = gap**2 * aux.q + bmat**2 / (4.0 * aux.q)
        total += float(np.sum((dec.chi * q_term)[edge_active]))

    if ws.ws > 0:
        total += ws.ws * float(np.sum(ws.stability_bounds(dec.alpha)))
    return total


def _pole_grad(ws: Workspace, alpha: np.ndarray) -> np.ndarray:
    if ws.ws == 0:
        return np.zeros_like(alpha)
    frac = 1.0 - alpha / ws.ups
    return 2.0 * ws.lipschitz**2 * ws.ws / (ws.k_samples * ws.ups * frac**2)


def grad_surrogate(scenario_or_ws, dec: Decision, aux: AuxVars) -> GradientBundle:
    """Analytic gradient of K with respect to the five decision blocks."""
    ws = scenario_or_ws if isinstance(scenario_or_ws, Workspace) else Workspace(scenario_or_ws)
    active, edge_active = _masks(ws, dec)
    r = _check_interior(ws, dec, active)

    chi_q_gap = np.where(edge_active, dec.chi * aux.q, 0.0) * (ws.ups - dec.alpha)[:, None]
    d_alpha = _pole_grad(ws, dec.alpha) + 2.0 * aux.z * dec.alpha - 2.0 * chi_q_gap.sum(axis=1)

    b = np.where(active, dec.b, 1.0)
    u = ws.gain * dec.p[:, None] / (ws.sigma2 * b)
    lnu = np.log1p(u)
    s = ws.payload[:, None]
    quad = 2.0 * s**2 * aux.nu * dec.p[:, None]
    recip = np.zeros_like(u)
    recip[active] = (LN2**2 * ws.gain / (2.0 * b**3 * aux.nu * ws.sigma2
                                         * (u + 1.0) * lnu**3))[active]
    d_p = (np.where(active, dec.chi, 0.0) * ws.we * (quad - recip)).sum(axis=1)

    d_b = np.zeros_like(u)
    inner = np.zeros_like(u)
    inner[active] = (ws.gain * dec.p[:, None] / (ws.sigma2 * lnu * (u + 1.0) * b))[active] - 1.0
    d_b[active] = (dec.chi * ws.we * LN2**2
                   / (2.0 * aux.nu * lnu**2 * b**3))[active] * inner[active]

    f = dec.f_user
    d_f_user = (ws.psi**2 * (ws.kappa1 * ws.we * f**3 + ws.wt)
                * (2.0 * ws.kappa1 * ws.we * f**3 - ws.wt)
                / (2.0 * aux.z * f**3 * ws.cu_du**2))

    d_f_edge = np.zeros_like(u)
    if np.any(edge_active):
        fe = np.where(edge_active, dec.f_edge, 1.0)
        k2 = ws.kappa2[None, :]
        cd = ws.ce_de[None, :]
        d_f_edge[edge_active] = (dec.chi * ws.psi[:, None]**2
                                 * (k2 * ws.we * fe**3 + ws.wt)
                                 * (2.0 * k2 * ws.we * fe**3 - ws.wt)
                                 / (2.0 * aux.q * fe**3 * cd**2))[edge_active]
    return GradientBundle(d_alpha, d_p, d_b, d_f_user, d_f_edge)


def grad_objective(scenario_or_ws, dec: Decision) -> GradientBundle:
    """Analytic gradient of H with respect to the five decision blocks."""
    ws = scenario_or_ws if isinstance(scenario_or_ws, Workspace) else Workspace(scenario_or_ws)
    active, _ = _masks(ws, dec)
    r = _check_interior(ws, dec, active)

    a = ws.local_per_layer(dec.f_user)
    bmat = ws.edge_per_layer(np.where(active, dec.f_edge, 0.0))
    d_alpha = a + _pole_grad(ws, dec.alpha) - (dec.chi * bmat).sum(axis=1)

    g, s2 = ws.gain, ws.sigma2
    b = np.where(active, dec.b, 1.0)
    u = g * dec.p[:, None] / (s2 * b)
    lnu = np.log1p(u)
    s = ws.payload[:, None]
    gp = g * dec.p[:, None]
    bs2 = b * s2
    d_p_mat = np.zeros_like(u)
    d_p_mat[active] = (LN2 * ws.we * dec.chi * s
                       * ((gp + bs2) * lnu - gp)
                       / (b * (gp + bs2) * lnu**2))[active]
    d_p = d_p_mat.sum(axis=1)

    d_b = np.zeros_like(u)
    d_b[active] = (ws.we * LN2 * dec.chi * s * g * dec.p[:, None]**2
                   / (s2 * lnu**2 * (u + 1.0) * b**3)
                   - ws.we * LN2 * dec.chi * s * dec.p[:, None]
                   / (lnu * b**2))[active]

    f = dec.f_user
    d_f_user = (-dec.alpha * ws.wt * ws.psi / (ws.cu_du * f**2)
                + 2.0 * dec.alpha * ws.we * ws.kappa1 * f * ws.psi / ws.cu_du)

    d_f_edge = np.zeros_like(u)
    fe = np.where(active, dec.f_edge, 1.0)
    gap = (ws.ups - dec.alpha)[:, None]
    d_f_edge[active] = (dec.chi * gap
                        * (2.0 * ws.we * ws.kappa2[None, :] * fe * ws.psi[:, None] / ws.ce_de[None, :]
                           - ws.wt * ws.psi[:, None] / (ws.ce_de[None, :] * fe**2)))[active]
    return GradientBundle(d_alpha, d_p, d_b, d_f_user, d_f_edge)
