"""Seeded scenario generation and (de)serialization.

Default sampling ranges model a metropolitan deployment: users and servers
placed uniformly in a square, cellular log-distance path loss
128.1 + 37.6*log10(d_km) with a 1 m minimum distance, noise power -134 dBm,
per-server bandwidth 20 MHz, phone-class GPUs with 4-6 cores at 0.5-1 GHz,
datacenter GPUs with 2560-5120 cores at 1-3 GHz, token loads of 512-1024,
batch size 512, hidden width 1024 and 32 transformer layers.  GPU power
coefficients and the stability parameters carry overridable defaults.

Scenario and solution files are JSON with a version tag; loading validates
structure and rejects non-finite numbers with the offending field path.
Writes are whole-file atomic (temp file + rename).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    Channel,
    Decision,
    EdgeServer,
    LlmConfig,
    ObjectiveBreakdown,
    Scenario,
    UserDevice,
    Weights,
    Workspace,
)
from .orchestrator import Solution

SCHEMA_VERSION = "1"

RESULT_COLUMNS = [
    "seed", "method", "N", "M", "omega_t", "omega_e", "omega_s",
    "energy_J", "delay_s", "stability_bound", "objective",
    "outer_rounds", "ao_iters", "cccp_iters", "kkt_residual", "runtime_ms",
    "avg_delay_s",
]

TRACE_COLUMNS = [
    "seed", "method", "N", "M", "iteration", "rho",
    "penalized_objective", "assoc_objective", "binarity_gap",
]


class ParseError(ValueError):
    """Structured load failure: carries the JSON path of the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class GenParams:
    """Sampling ranges for seeded scenario generation."""

    n_users: int = 50
    n_servers: int = 10
    area_size: float = 500.0
    rng_seed: int = 0
    p_max_range: tuple = (1.0, 2.0)
    f_user_range: tuple = (0.5e9, 1.0e9)
    f_edge_range: tuple = (1.0e9, 3.0e9)
    b_max: float = 20e6
    tokens_range: tuple = (512, 1024)
    user_cores: tuple = (4, 5, 6)
    user_flops_per_cycle: float = 1.0
    edge_cores_range: tuple = (2560, 5120)
    edge_flops_per_cycle: tuple = (1, 2)
    batch_size: int = 512
    hidden_dim: int = 1024
    total_layers: int = 32
    kappa1: float = 1e-27
    kappa2: float = 1e-27
    lipschitz: float = 1.0
    dataset_range: tuple = (1000, 5000)
    payload_scale: float = 1.0
    weights: tuple = (1.0, 1.0, 1.0)
    min_distance_m: float = 1.0

    def __post_init__(self):
        if self.n_users < 1 or self.n_servers < 1:
            raise ValueError("need at least one user and one server")


def path_loss_gain(distance_m: float, min_distance_m: float = 1.0) -> float:
    """Linear channel gain from the log-distance path-loss model."""
    d_km = max(distance_m, min_distance_m) / 1000.0
    pl_db = 128.1 + 37.6 * math.log10(d_km)
    return 10.0 ** (-pl_db / 10.0)


def noise_power_watts(dbm: float = -134.0) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def generate(gp: GenParams) -> Scenario:
    """Deterministically sample one scenario and compute weight normalizers."""
    rng = np.random.default_rng(gp.rng_seed)
    n, m = gp.n_users, gp.n_servers

    user_pos = rng.uniform(0.0, gp.area_size, size=(n, 2))
    server_pos = rng.uniform(0.0, gp.area_size, size=(m, 2))

    llm = LlmConfig(gp.total_layers, gp.batch_size, gp.hidden_dim, gp.lipschitz)
    users = tuple(
        UserDevice(
            tokens=int(rng.integers(gp.tokens_range[0], gp.tokens_range[1] + 1)),
            cores=float(rng.choice(gp.user_cores)),
            flops_per_cycle=gp.user_flops_per_cycle,
            f_max=float(rng.uniform(*gp.f_user_range)),
            p_max=float(rng.uniform(*gp.p_max_range)),
            kappa1=gp.kappa1,
            dataset_size=float(rng.integers(gp.dataset_range[0], gp.dataset_range[1] + 1)),
            position=(float(user_pos[i, 0]), float(user_pos[i, 1])),
        )
        for i in range(n)
    )
    servers = tuple(
        EdgeServer(
            cores=float(rng.integers(gp.edge_cores_range[0], gp.edge_cores_range[1] + 1)),
            flops_per_cycle=float(rng.choice(gp.edge_flops_per_cycle)),
            f_max=float(rng.uniform(*gp.f_edge_range)),
            b_max=gp.b_max,
            kappa2=gp.kappa2,
            position=(float(server_pos[j, 0]), float(server_pos[j, 1])),
        )
        for j in range(m)
    )

    dist = np.linalg.norm(user_pos[:, None, :] - server_pos[None, :, :], axis=2)
    gains = np.array([[path_loss_gain(dist[i, j], gp.min_distance_m)
                       for j in range(m)] for i in range(n)])
    channel = Channel(gains, noise_power_watts(), gp.payload_scale)

    wt, we, ws_ = gp.weights
    raw = Scenario(llm, users, servers, channel, Weights(wt, we, ws_))
    t_ref, e_ref, s_ref = _normalizers(raw)
    return Scenario(llm, users, servers, channel,
                    Weights(wt, we, ws_, t_ref, e_ref, s_ref))


def _normalizers(scenario: Scenario) -> tuple[float, float, float]:
    """Max single-user delay/energy/bound at a midpoint decision under
    max-gain association with equal capacity splits."""
    ws = Workspace(scenario)
    assign = np.argmax(ws.gain, axis=1)
    counts = np.bincount(assign, minlength=ws.m).astype(float)

    alpha = 0.5 * (1.0 + ws.alpha_cap)
    p = 0.5 * ws.p_max
    f_user = 0.5 * ws.f_max_user
    b = ws.b_max[assign] / counts[assign]
    f_edge = ws.f_max_edge[assign] / counts[assign]

    rows = np.arange(ws.n)
    g = ws.gain[rows, assign]
    r = b * np.log1p(g * p / (ws.sigma2 * b)) / math.log(2.0)

    t_local = ws.psi / (f_user * ws.cu_du)
    e_local = ws.kappa1 * f_user**2 * ws.psi / ws.cu_du
    cd_e = ws.ce_de[assign]
    t_edge = ws.psi / (f_edge * cd_e)
    e_edge = ws.kappa2[assign] * f_edge**2 * ws.psi / cd_e

    delay = alpha * t_local + ws.payload / r + (ws.ups - alpha) * t_edge
    energy = alpha * e_local + ws.payload * p / r + (ws.ups - alpha) * e_edge
    bound = 2.0 * ws.lipschitz**2 / (ws.k_samples * (1.0 - alpha / ws.ups))
    return float(delay.max()), float(energy.max()), float(bound.max())


# ---------------------------------------------------------------------------
# JSON (de)serialization
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _need(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ParseError(path, "expected an object")
    if key not in obj:
        raise ParseError(f"{path}.{key}", "missing field")
    return obj[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise ParseError(path, f"non-finite number {value!r}")
    return float(value)


def _num_list(values, path: str) -> list[float]:
    if not isinstance(values, list):
        raise ParseError(path, "expected an array")
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(values)]


def scenario_to_dict(scenario: Scenario) -> dict:
    w = scenario.weights
    return {
        "version": SCHEMA_VERSION,
        "llm": {
            "layers": scenario.llm.total_layers,
            "batch": scenario.llm.batch_size,
            "hidden": scenario.llm.hidden_dim,
            "L": scenario.llm.lipschitz,
        },
        "users": [
            {"d": u.tokens, "cores": u.cores, "fpc": u.flops_per_cycle,
             "fmax": u.f_max, "pmax": u.p_max, "kappa1": u.kappa1,
             "k": u.dataset_size, "pos": list(u.position)}
            for u in scenario.users
        ],
        "servers": [
            {"cores": s.cores, "fpc": s.flops_per_cycle, "fmax": s.f_max,
             "bmax": s.b_max, "kappa2": s.kappa2, "pos": list(s.position)}
            for s in scenario.servers
        ],
        "channel": {
            "gains": scenario.channel.gain.tolist(),
            "sigma2": scenario.channel.noise_power,
            "eta": scenario.channel.payload_scale,
        },
        "weights": {
            "wt": w.wt, "we": w.we, "ws": w.ws,
            "normalizers": {"t_ref": w.t_ref, "e_ref": w.e_ref, "s_ref": w.s_ref},
        },
    }


def scenario_from_dict(data: dict) -> Scenario:
    version = _need(data, "version", "$")
    if version != SCHEMA_VERSION:
        raise ParseError("$.version", f"unsupported schema version {version!r}")

    llm_d = _need(data, "llm", "$")
    llm = LlmConfig(
        total_layers=int(_num(_need(llm_d, "layers", "$.llm"), "$.llm.layers")),
        batch_size=int(_num(_need(llm_d, "batch", "$.llm"), "$.llm.batch")),
        hidden_dim=int(_num(_need(llm_d, "hidden", "$.llm"), "$.llm.hidden")),
        lipschitz=_num(_need(llm_d, "L", "$.llm"), "$.llm.L"),
    )

    users = []
    users_d = _need(data, "users", "$")
    if not isinstance(users_d, list) or not users_d:
        raise ParseError("$.users", "expected a nonempty array")
    for i, u in enumerate(users_d):
        p = f"$.users[{i}]"
        pos = _num_list(_need(u, "pos", p), f"{p}.pos")
        users.append(UserDevice(
            tokens=int(_num(_need(u, "d", p), f"{p}.d")),
            cores=_num(_need(u, "cores", p), f"{p}.cores"),
            flops_per_cycle=_num(_need(u, "fpc", p), f"{p}.fpc"),
            f_max=_num(_need(u, "fmax", p), f"{p}.fmax"),
            p_max=_num(_need(u, "pmax", p), f"{p}.pmax"),
            kappa1=_num(_need(u, "kappa1", p), f"{p}.kappa1"),
            dataset_size=_num(_need(u, "k", p), f"{p}.k"),
            position=(pos[0], pos[1]),
        ))

    servers = []
    servers_d = _need(data, "servers", "$")
    if not isinstance(servers_d, list) or not servers_d:
        raise ParseError("$.servers", "expected a nonempty array")
    for j, s in enumerate(servers_d):
        p = f"$.servers[{j}]"
        pos = _num_list(_need(s, "pos", p), f"{p}.pos")
        servers.append(EdgeServer(
            cores=_num(_need(s, "cores", p), f"{p}.cores"),
            flops_per_cycle=_num(_need(s, "fpc", p), f"{p}.fpc"),
            f_max=_num(_need(s, "fmax", p), f"{p}.fmax"),
            b_max=_num(_need(s, "bmax", p), f"{p}.bmax"),
            kappa2=_num(_need(s, "kappa2", p), f"{p}.kappa2"),
            position=(pos[0], pos[1]),
        ))

    ch = _need(data, "channel", "$")
    gains_raw = _need(ch, "gains", "$.channel")
    if not isinstance(gains_raw, list):
        raise ParseError("$.channel.gains", "expected an array of arrays")
    gains = [_num_list(row, f"$.channel.gains[{i}]") for i, row in enumerate(gains_raw)]
    channel = Channel(np.array(gains),
                      _num(_need(ch, "sigma2", "$.channel"), "$.channel.sigma2"),
                      _num(_need(ch, "eta", "$.channel"), "$.channel.eta"))

    w = _need(data, "weights", "$")
    norm = _need(w, "normalizers", "$.weights")
    weights = Weights(
        wt=_num(_need(w, "wt", "$.weights"), "$.weights.wt"),
        we=_num(_need(w, "we", "$.weights"), "$.weights.we"),
        ws=_num(_need(w, "ws", "$.weights"), "$.weights.ws"),
        t_ref=_num(_need(norm, "t_ref", "$.weights.normalizers"), "$.weights.normalizers.t_ref"),
        e_ref=_num(_need(norm, "e_ref", "$.weights.normalizers"), "$.weights.normalizers.e_ref"),
        s_ref=_num(_need(norm, "s_ref", "$.weights.normalizers"), "$.weights.normalizers.s_ref"),
    )
    return Scenario(llm, tuple(users), tuple(servers), channel, weights)


def save_scenario(scenario: Scenario, path: str) -> None:
    _atomic_write(path, json.dumps(scenario_to_dict(scenario), indent=1,
                                   allow_nan=False))


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        try:
            data = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as e:
            raise ParseError("$", f"invalid JSON: {e}") from e
    return scenario_from_dict(data)


def _reject_constant(token: str):
    raise ParseError("$", f"non-finite number {token!r}")


def solution_to_dict(sol: Solution, canonical: bool = False) -> dict:
    """Serializable form; ``canonical=True`` drops wall-clock fields so that
    identical (scenario, config, seed) runs produce byte-identical output."""
    d = sol.decision
    out = {
        "version": SCHEMA_VERSION,
        "decision": {
            "alpha": d.alpha.tolist(), "p": d.p.tolist(), "b": d.b.tolist(),
            "f_user": d.f_user.tolist(), "f_edge": d.f_edge.tolist(),
            "chi": d.chi.tolist(),
        },
        "breakdown": asdict(sol.breakdown),
        "ao_traces": [
            {"k_values": t.k_values, "h_values": t.h_values, "sweeps": t.sweeps,
             "iterations": t.iterations, "converged": t.converged,
             "wall_time": t.wall_time}
            for t in sol.ao_traces
        ],
        "cccp_traces": [
            {"rho": t.rho, "penalized": t.penalized, "assoc_cost": t.assoc_cost,
             "binarity_gap": t.binarity_gap, "movement": t.movement,
             "iterations": t.iterations, "converged": t.converged,
             "final_gap": t.final_gap}
            for t in sol.cccp_traces
        ],
        "kkt_residual": sol.kkt_residual,
        "binarity_gap": sol.binarity_gap,
        "outer_rounds": sol.outer_rounds,
        "converged": sol.converged,
        "wall_time": sol.wall_time,
        "outer_objectives": sol.outer_objectives,
    }
    if canonical:
        out.pop("wall_time")
        for t in out["ao_traces"]:
            t.pop("wall_time")
    return out


def solution_fingerprint(sol: Solution) -> bytes:
    """Canonical bytes of a solution (timing excluded): the determinism contract."""
    return json.dumps(solution_to_dict(sol, canonical=True),
                      sort_keys=True, allow_nan=False).encode()


def save_solution(sol: Solution, path: str) -> None:
    _atomic_write(path, json.dumps(solution_to_dict(sol), indent=1,
                                   allow_nan=False))


def load_solution(path: str) -> Solution:
    """Load a solution; traces come back as plain dicts."""
    with open(path) as fh:
        try:
            data = json.load(fh, parse_constant=_reject_constant)
        except json.JSONDecodeError as e:
            raise ParseError("$", f"invalid JSON: {e}") from e
    version = _need(data, "version", "$")
    if version != SCHEMA_VERSION:
        raise ParseError("$.version", f"unsupported schema version {version!r}")
    dd = _need(data, "decision", "$")
    dec = Decision(*(np.array(_need(dd, k, "$.decision"))
                     for k in ("alpha", "p", "b", "f_user", "f_edge", "chi")))
    bd = _need(data, "breakdown", "$")
    breakdown = ObjectiveBreakdown(
        user_cost=_num(_need(bd, "user_cost", "$.breakdown"), "$.breakdown.user_cost"),
        edge_cost=_num(_need(bd, "edge_cost", "$.breakdown"), "$.breakdown.edge_cost"),
        stability_cost=_num(_need(bd, "stability_cost", "$.breakdown"), "$.breakdown.stability_cost"),
        total=_num(_need(bd, "total", "$.breakdown"), "$.breakdown.total"),
    )
    return Solution(
        decision=dec, breakdown=breakdown,
        ao_traces=data.get("ao_traces", []),
        cccp_traces=data.get("cccp_traces", []),
        kkt_residual=_num(_need(data, "kkt_residual", "$"), "$.kkt_residual"),
        binarity_gap=_num(_need(data, "binarity_gap", "$"), "$.binarity_gap"),
        outer_rounds=int(_num(_need(data, "outer_rounds", "$"), "$.outer_rounds")),
        converged=bool(_need(data, "converged", "$")),
        wall_time=_num(_need(data, "wall_time", "$"), "$.wall_time"),
        outer_objectives=list(data.get("outer_objectives", [])),
    )


# ---------------------------------------------------------------------------
# Results CSV
# ---------------------------------------------------------------------------

def format_csv(rows: list[dict], columns: list[str]) -> str:
    """Fixed-order CSV text; every row must carry exactly the declared columns."""
    lines = [",".join(columns)]
    for i, row in enumerate(rows):
        missing = [c for c in columns if c not in row]
        extra = [c for c in row if c not in columns]
        if missing or extra:
            raise ValueError(f"row {i}: missing {missing}, unexpected {extra}")
        lines.append(",".join(_csv_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(path: str, rows: list[dict]) -> None:
    _atomic_write(path, format_csv(rows, RESULT_COLUMNS))


def write_trace_csv(path: str, rows: list[dict]) -> None:
    _atomic_write(path, format_csv(rows, TRACE_COLUMNS))
