"""Tour of the cost model: rates, per-layer costs, and the weighted objective.

Builds one small scenario, evaluates every physical quantity for a candidate
allocation, and shows that the objective decomposes exactly into its user,
edge and stability parts.
"""

import numpy as np

from edgesplit import (
    Workspace,
    flops_per_layer,
    local_layer_cost,
    edge_layer_cost,
    uplink_rate,
    as_bound,
    total_objective,
    random_interior_decision,
)
from edgesplit.scenario_io import GenParams, generate

sc = generate(GenParams(n_users=4, n_servers=2, rng_seed=1))
u, s = sc.users[0], sc.servers[0]

print("== one transformer layer ==")
psi = flops_per_layer(u.tokens, sc.llm)
print(f"tokens d={u.tokens}  ->  {psi:.3e} FLOPs per layer")
t_loc, e_loc = local_layer_cost(u, u.f_max, sc.llm)
print(f"locally at f_max:  {t_loc:8.1f} s   {e_loc:8.1f} J")
t_edge, e_edge = edge_layer_cost(s, s.f_max, u.tokens, sc.llm)
print(f"at the edge:       {t_edge:8.3f} s   {e_edge:8.3f} J")
print(f"edge speedup: {t_loc / t_edge:.0f}x  (server GPU has "
      f"{s.cores * s.flops_per_cycle / (u.cores * u.flops_per_cycle):.0f}x the FLOP rate)")

print("\n== uplink ==")
g = sc.channel.gain[0, 0]
for p in (0.02, 0.5, 2.0):
    r = uplink_rate(g, p, s.b_max / 4, sc.channel.noise_power)
    print(f"p = {p:4.2f} W  ->  rate {r/1e6:8.2f} Mbit/s, "
          f"energy per payload {u.tokens * p / r * 1e6:.3f} uJ")
print("(energy per bit keeps rising with power: the solver will sit at the floor)")

print("\n== stability bound ==")
for alpha in (1, 8, 16, 24, 31):
    print(f"alpha = {alpha:2d}/32 local layers -> bound "
          f"{as_bound(sc.llm.lipschitz, u.dataset_size, alpha, 32):.3e}")

print("\n== objective breakdown ==")
dec = random_interior_decision(sc, np.random.default_rng(0))
bd = total_objective(sc, dec)
print(f"user cost      {bd.user_cost:10.4f}")
print(f"edge cost      {bd.edge_cost:10.4f}")
print(f"stability cost {bd.stability_cost:10.4f}")
print(f"total          {bd.total:10.4f}")
assert abs(bd.user_cost + bd.edge_cost + bd.stability_cost - bd.total) < 1e-12 * bd.total
print("parts sum to the total exactly")
