"""Physical cost model of the collaborative fine-tuning system.

An instance consists of N mobile users and M edge servers.  User n trains the
first alpha_n transformer layers of a shared LLM locally, ships the
intermediate activations uplink to one associated edge server, and the server
trains the remaining (Upsilon - alpha_n) layers.  Every quantity is tracked in
SI units (seconds, joules, hertz, watts); token and layer counts are
dimensionless.

The weighted objective evaluated here combines
  * local compute delay/energy (cubic GPU power law),
  * uplink transmission energy over FDMA links (Shannon rate),
  * edge compute delay/energy, and
  * a per-user model-stability bound 2 L^2 / (k_n (1 - alpha_n/Upsilon))
    that diverges as the split approaches fully-local training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    InfeasibleDecisionError,
    InfeasibleLinkError,
    PoleError,
    Violation,
)

# Upper clamp on the continuous layer split: alpha <= Upsilon * (1 - ALPHA_MARGIN_FRAC).
# The stability term has a pole at alpha = Upsilon; an integer alpha = Upsilon is
# only admitted when the stability weight is zero.
ALPHA_MARGIN_FRAC = 1e-3

# Relative slack accepted when validating box and capacity constraints.
FEAS_RTOL = 1e-8


@dataclass(frozen=True)
class LlmConfig:
    """Architecture knobs of the model being fine-tuned."""

    total_layers: int
    batch_size: int
    hidden_dim: int
    lipschitz: float

    def __post_init__(self):
        if self.total_layers < 2:
            raise DomainError("total_layers must be >= 2")
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise DomainError("batch_size and hidden_dim must be >= 1")
        if not self.lipschitz > 0:
            raise DomainError("lipschitz must be > 0")


@dataclass(frozen=True)
class UserDevice:
    """A mobile user: token load, GPU capability, power budget, dataset size."""

    tokens: int
    cores: float
    flops_per_cycle: float
    f_max: float
    p_max: float
    kappa1: float
    dataset_size: float
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.tokens < 1:
            raise DomainError("tokens must be >= 1")
        if self.dataset_size < 1:
            raise DomainError("dataset_size must be >= 1")
        for name in ("cores", "flops_per_cycle", "f_max", "p_max", "kappa1"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")


@dataclass(frozen=True)
class EdgeServer:
    """An edge server: GPU capability and bandwidth budget."""

    cores: float
    flops_per_cycle: float
    f_max: float
    b_max: float
    kappa2: float
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("cores", "flops_per_cycle", "f_max", "b_max", "kappa2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")


@dataclass(frozen=True)
class Channel:
    """Uplink channel: linear power gains, noise power, payload scale.

    ``payload_scale`` (bits/token) maps a user's token count d_n to the size
    of the intermediate results s(d_n) = payload_scale * d_n.
    """

    gain: np.ndarray
    noise_power: float
    payload_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gain", np.asarray(self.gain, dtype=float))
        if self.gain.ndim != 2:
            raise DomainError("gain must be a 2-D (users x servers) array")
        if not np.all(self.gain > 0):
            raise DomainError("channel gains must be > 0 elementwise")
        if not self.noise_power > 0:
            raise DomainError("noise_power must be > 0")
        if not self.payload_scale > 0:
            raise DomainError("payload_scale must be > 0")


@dataclass(frozen=True)
class Weights:
    """Objective weights plus the reference values that make them unitless.

    The effective coefficient applied to a raw quantity is weight/reference,
    so "weight 1" means each normalized term enters the objective at
    comparable magnitude.  References default to 1 (raw units).
    """

    wt: float = 1.0
    we: float = 1.0
    ws: float = 1.0
    t_ref: float = 1.0
    e_ref: float = 1.0
    s_ref: float = 1.0

    def __post_init__(self):
        if self.wt < 0 or self.we < 0 or self.ws < 0:
            raise DomainError("weights must be nonnegative")
        if self.wt == self.we == self.ws == 0:
            raise DomainError("at least one weight must be positive")
        for name in ("t_ref", "e_ref", "s_ref"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")

    def effective(self) -> tuple[float, float, float]:
        """(omega_t, omega_e, omega_s) actually multiplied into the objective."""
        return self.wt / self.t_ref, self.we / self.e_ref, self.ws / self.s_ref


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one problem instance."""

    llm: LlmConfig
    users: tuple[UserDevice, ...]
    servers: tuple[EdgeServer, ...]
    channel: Channel
    weights: Weights

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "servers", tuple(self.servers))
        n, m = len(self.users), len(self.servers)
        if self.channel.gain.shape != (n, m):
            raise DomainError(
                f"gain matrix shape {self.channel.gain.shape} != ({n}, {m})"
            )

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    def alpha_cap(self) -> float:
        """Largest continuous layer split admitted by the pole clamp."""
        ups = self.llm.total_layers
        return ups * (1.0 - ALPHA_MARGIN_FRAC)


@dataclass
class Decision:
    """One candidate allocation.

    ``chi`` may be fractional during the association step; solver outputs are
    row-binary.  ``b`` and ``f_edge`` are full N x M matrices: entries on
    non-associated pairs are candidate allocations used when re-deciding the
    association, and only chi-weighted entries enter the objective.
    """

    alpha: np.ndarray
    p: np.ndarray
    b: np.ndarray
    f_user: np.ndarray
    f_edge: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "p", "b", "f_user", "f_edge", "chi"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def copy(self) -> "Decision":
        return Decision(*(getattr(self, f).copy()
                          for f in ("alpha", "p", "b", "f_user", "f_edge", "chi")))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Weighted objective split into its three groups; parts sum to total."""

    user_cost: float
    edge_cost: float
    stability_cost: float
    total: float


class Workspace:
    """Vectorized, read-only view of a scenario used by the numeric kernels."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        llm = scenario.llm
        self.ups = float(llm.total_layers)
        self.lipschitz = llm.lipschitz
        self.alpha_cap = scenario.alpha_cap()

        us = scenario.users
        self.d = np.array([u.tokens for u in us], dtype=float)
        self.payload = scenario.channel.payload_scale * self.d
        self.cu_du = np.array([u.cores * u.flops_per_cycle for u in us])
        self.kappa1 = np.array([u.kappa1 for u in us])
        self.f_max_user = np.array([u.f_max for u in us])
        self.p_max = np.array([u.p_max for u in us])
        self.k_samples = np.array([u.dataset_size for u in us])
        self.psi = np.array(
            [float(flops_per_layer(u.tokens, llm)) for u in us]
        )

        sv = scenario.servers
        self.ce_de = np.array([s.cores * s.flops_per_cycle for s in sv])
        self.kappa2 = np.array([s.kappa2 for s in sv])
        self.f_max_edge = np.array([s.f_max for s in sv])
        self.b_max = np.array([s.b_max for s in sv])

        self.gain = scenario.channel.gain
        self.sigma2 = scenario.channel.noise_power
        self.wt, self.we, self.ws = scenario.weights.effective()
        self.n, self.m = scenario.n_users, scenario.n_servers

    # -- vectorized pieces -------------------------------------------------

    def rates(self, p: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Uplink rate matrix; zero wherever bandwidth or power is zero."""
        out = np.zeros_like(b)
        mask = (b > 0) & (p[:, None] > 0)
        if np.any(mask):
            b_safe = np.where(mask, b, 1.0)
            u = self.gain * p[:, None] / (self.sigma2 * b_safe)
            out[mask] = b[mask] * np.log1p(u[mask]) / math.log(2.0)
        return out

    def local_per_layer(self, f_user: np.ndarray) -> np.ndarray:
        """A(f_n): weighted local delay+energy of one layer, per user."""
        base = self.psi / self.cu_du
        return self.wt * base / f_user + self.we * self.kappa1 * f_user**2 * base

    def edge_per_layer(self, f_edge: np.ndarray) -> np.ndarray:
        """B(f_{n,m}): weighted edge delay+energy of one layer, per pair."""
        base = self.psi[:, None] / self.ce_de[None, :]
        out = np.zeros_like(f_edge)
        mask = f_edge > 0
        out[mask] = (self.wt * base / np.where(mask, f_edge, 1.0)
                     + self.we * self.kappa2[None, :] * f_edge**2 * base)[mask]
        return out

    def stability_bounds(self, alpha: np.ndarray) -> np.ndarray:
        """Raw per-user stability bound 2 L^2 / (k_n (1 - alpha_n/Upsilon))."""
        frac = 1.0 - alpha / self.ups
        out = np.full_like(alpha, np.inf)
        ok = frac > 0
        out[ok] = 2.0 * self.lipschitz**2 / (self.k_samples[ok] * frac[ok])
        return out

    def objective(self, dec: Decision) -> float:
        """H(dec) without feasibility checks (hot path for solvers)."""
        return self.breakdown(dec).total

    def breakdown(self, dec: Decision) -> ObjectiveBreakdown:
        a = self.local_per_layer(dec.f_user)
        user = float(np.dot(dec.alpha, a)) + self.we * self._uplink_energy_total(dec)
        active = dec.chi > 0
        bmat = self.edge_per_layer(np.where(active, dec.f_edge, 0.0))
        edge = float(np.sum(dec.chi * (self.ups - dec.alpha)[:, None] * bmat))
        if self.ws > 0:
            stab = self.ws * float(np.sum(self.stability_bounds(dec.alpha)))
        else:
            stab = 0.0
        return ObjectiveBreakdown(user, edge, stab, user + edge + stab)

    def _uplink_energy_total(self, dec: Decision) -> float:
        """Sum over users/servers of chi * s(d) * p / r (raw joules)."""
        active = dec.chi > 0
        if not np.any(active):
            return 0.0
        r = self.rates(dec.p, dec.b)
        bad = active & (r <= 0) & (self.payload[:, None] > 0)
        if np.any(bad):
            n, m = map(int, np.argwhere(bad)[0])
            raise InfeasibleLinkError(
                f"user {n} associated with server {m} has zero uplink rate"
            )
        e = np.zeros_like(r)
        e[active] = (dec.chi * self.payload[:, None] * dec.p[:, None])[active] / r[active]
        return float(e.sum())

    def raw_metrics(self, dec: Decision) -> tuple[float, float, float, float]:
        """(energy_J, compute_delay_s, stability_bound, avg_end_to_end_delay_s).

        ``compute_delay_s`` is the aggregate the delay weight multiplies inside
        the objective (sum of per-layer compute delays, no transmission term);
        ``avg_end_to_end_delay_s`` is the reporting metric: mean over users of
        local delay + transmission time + edge delay.
        """
        t_local = self.psi / (dec.f_user * self.cu_du)
        e_local = self.kappa1 * dec.f_user**2 * self.psi / self.cu_du
        active = dec.chi > 0
        fe = np.where(active, dec.f_edge, 1.0)
        t_edge = np.where(active, self.psi[:, None] / (fe * self.ce_de[None, :]), 0.0)
        e_edge = np.where(active, self.kappa2[None, :] * fe**2 * self.psi[:, None]
                          / self.ce_de[None, :], 0.0)
        layers_edge = (self.ups - dec.alpha)[:, None]

        energy = (float(np.dot(dec.alpha, e_local))
                  + self._uplink_energy_total(dec)
                  + float(np.sum(dec.chi * layers_edge * e_edge)))
        delay = (float(np.dot(dec.alpha, t_local))
                 + float(np.sum(dec.chi * layers_edge * t_edge)))
        stability = float(np.sum(self.stability_bounds(dec.alpha)))

        r = self.rates(dec.p, dec.b)
        tx = np.zeros_like(r)
        ok = active & (r > 0)
        tx[ok] = (dec.chi * self.payload[:, None])[ok] / r[ok]
        per_user = (dec.alpha * t_local + tx.sum(axis=1)
                    + np.sum(dec.chi * layers_edge * t_edge, axis=1))
        return energy, delay, stability, float(per_user.mean())


# ---------------------------------------------------------------------------
# Scalar operations
# ---------------------------------------------------------------------------

def flops_per_layer(d, llm: LlmConfig):
    """FLOPs to train one transformer layer on d tokens.

    Exact integer arithmetic when the inputs are ints, so values stay
    overflow-safe for d up to 1e6 and batch*hidden up to 1e9.
    """
    if d <= 0:
        raise DomainError("token count must be positive")
    B, h = llm.batch_size, llm.hidden_dim
    return 72 * B * d * h * h + 12 * B * d * d * h


def local_layer_cost(user: UserDevice, f: float, llm: LlmConfig) -> tuple[float, float]:
    """(delay, energy) for one layer trained locally at GPU frequency f."""
    if f <= 0:
        raise DomainError("frequency must be > 0")
    psi = float(flops_per_layer(user.tokens, llm))
    delay = psi / (f * user.cores * user.flops_per_cycle)
    energy = user.kappa1 * f**2 * psi / (user.cores * user.flops_per_cycle)
    return delay, energy


def edge_layer_cost(server: EdgeServer, f: float, d: int, llm: LlmConfig) -> tuple[float, float]:
    """(delay, energy) for one layer trained at an edge server at frequency f."""
    if f <= 0:
        raise DomainError("frequency must be > 0")
    psi = float(flops_per_layer(d, llm))
    delay = psi / (f * server.cores * server.flops_per_cycle)
    energy = server.kappa2 * f**2 * psi / (server.cores * server.flops_per_cycle)
    return delay, energy


def uplink_rate(gain: float, p: float, b: float, noise_power: float) -> float:
    """Shannon rate b*log2(1 + gain*p / (noise*b)) in bits/s."""
    if b <= 0:
        raise DomainError("bandwidth must be > 0")
    if p < 0:
        raise DomainError("power must be >= 0")
    return b * math.log2(1.0 + gain * p / (noise_power * b))


def uplink_energy(scenario: Scenario, dec: Decision, n: int) -> float:
    """Transmission energy of user n over its associated servers (joules)."""
    ws = Workspace(scenario)
    row = np.zeros_like(dec.chi)
    row[n, :] = dec.chi[n, :]
    sub = Decision(dec.alpha, dec.p, dec.b, dec.f_user, dec.f_edge, row)
    return ws._uplink_energy_total(sub)


def as_bound(lipschitz: float, k: float, alpha: float, total_layers: float) -> float:
    """Stability bound 2 L^2 / (k (1 - alpha/Upsilon)) for one user.

    Strictly increasing and convex in alpha; the pole at alpha = Upsilon is
    rejected (use the raw Workspace path if an infinite value is wanted).
    """
    if alpha < 1:
        raise DomainError("alpha must be >= 1")
    if alpha > total_layers * (1.0 - ALPHA_MARGIN_FRAC):
        raise PoleError("alpha too close to the total layer count")
    return 2.0 * lipschitz**2 / (k * (1.0 - alpha / total_layers))


def check_decision(scenario: Scenario, dec: Decision) -> list[Violation]:
    """Collect all constraint violations of a decision (empty when feasible)."""
    ws = Workspace(scenario)
    v: list[Violation] = []
    tol = FEAS_RTOL

    def over(x, hi, scale):
        return x - hi > tol * scale

    ups = ws.ups
    ws_zero = ws.ws == 0.0
    for n in range(ws.n):
        a = dec.alpha[n]
        if a < 1 - tol * ups:
            v.append(Violation("alpha_min", (n,), float(1 - a)))
        cap = ups if ws_zero else ws.alpha_cap
        if over(a, cap, ups):
            v.append(Violation("alpha_max", (n,), float(a - cap)))
        if dec.p[n] <= 0:
            v.append(Violation("p_min", (n,), float(-dec.p[n])))
        if over(dec.p[n], ws.p_max[n], ws.p_max[n]):
            v.append(Violation("p_max", (n,), float(dec.p[n] - ws.p_max[n])))
        if dec.f_user[n] <= 0:
            v.append(Violation("f_user_min", (n,), float(-dec.f_user[n])))
        if over(dec.f_user[n], ws.f_max_user[n], ws.f_max_user[n]):
            v.append(Violation("f_user_max", (n,),
                               float(dec.f_user[n] - ws.f_max_user[n])))
        rowsum = dec.chi[n].sum()
        if abs(rowsum - 1.0) > tol:
            v.append(Violation("assoc_row_sum", (n,), float(abs(rowsum - 1.0))))
        if np.any(dec.chi[n] < -tol) or np.any(dec.chi[n] > 1 + tol):
            v.append(Violation("assoc_box", (n,), float(np.max(np.abs(dec.chi[n] - 0.5)) - 0.5)))

    for m in range(ws.m):
        used_b = float(np.dot(dec.chi[:, m], dec.b[:, m]))
        if over(used_b, ws.b_max[m], ws.b_max[m]):
            v.append(Violation("bandwidth_cap", (m,), used_b - ws.b_max[m]))
        used_f = float(np.dot(dec.chi[:, m], dec.f_edge[:, m]))
        if over(used_f, ws.f_max_edge[m], ws.f_max_edge[m]):
            v.append(Violation("edge_freq_cap", (m,), used_f - ws.f_max_edge[m]))
        for n in range(ws.n):
            if dec.chi[n, m] > 0 and dec.b[n, m] <= 0:
                v.append(Violation("bandwidth_positive", (n, m), float(-dec.b[n, m])))
            if dec.chi[n, m] > 0 and dec.f_edge[n, m] <= 0:
                v.append(Violation("edge_freq_positive", (n, m), float(-dec.f_edge[n, m])))
    return v


def total_objective(scenario: Scenario, dec: Decision) -> ObjectiveBreakdown:
    """Evaluate the weighted objective of a feasible decision.

    Raises InfeasibleDecisionError with the full violation report otherwise.
    """
    violations = check_decision(scenario, dec)
    if violations:
        raise InfeasibleDecisionError(violations)
    return Workspace(scenario).breakdown(dec)


def random_interior_decision(scenario: Scenario, rng: np.random.Generator,
                             chi: np.ndarray | None = None,
                             p_min_frac: float = 1e-2) -> Decision:
    """A random strictly-interior feasible decision (row-binary association).

    Per-server capacities hold with equality over the associated users, and
    non-associated pairs carry equal-split candidate allocations.
    """
    ws = Workspace(scenario)
    n, m = ws.n, ws.m
    if chi is None:
        chi = np.zeros((n, m))
        chi[np.arange(n), rng.integers(0, m, size=n)] = 1.0
    chi = np.asarray(chi, dtype=float)

    alpha = rng.uniform(1.0, ws.alpha_cap, size=n)
    p = rng.uniform(p_min_frac * ws.p_max, ws.p_max)
    f_user = rng.uniform(0.3 * ws.f_max_user, ws.f_max_user)

    b = np.tile(ws.b_max / n, (n, 1))
    f_edge = np.tile(ws.f_max_edge / n, (n, 1))
    for j in range(m):
        users = np.flatnonzero(chi[:, j] > 0)
        if users.size == 0:
            continue
        wb = rng.uniform(0.2, 1.0, size=users.size)
        b[users, j] = ws.b_max[j] * wb / (chi[users, j] @ wb)
        wf = rng.uniform(0.2, 1.0, size=users.size)
        f_edge[users, j] = ws.f_max_edge[j] * wf / (chi[users, j] @ wf)
    return Decision(alpha, p, b, f_user, f_edge, chi)
