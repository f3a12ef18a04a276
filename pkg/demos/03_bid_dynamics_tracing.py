"""Bid dynamics under drifting preferences.

Buyers re-split budgets in proportion to the utility each good delivered
last round.  Statically the bid-space potential falls to zero; when the
utility coefficients breathe by a factor e^{+/-0.005} each round, the KL
distance to the per-round equilibrium obeys a one-round recurrence
q2 KL' <= q1 KL + jump, which compounds into a geometric tracking bound.
"""

import numpy as np

from eqtracer import (
    ScheduleSpec,
    generate_schedule,
    proportional_bids,
    run_prd_trace,
    solve_equilibrium,
    prd_potential_g,
    prd_step,
)
from eqtracer.instances import random_market

market = random_market(42, m=4, n=5, unit_supplies=True)

# Static warm-up: watch the potential gap collapse.
eq = solve_equilibrium(market, tolerance=1e-10)
g_star = prd_potential_g(market, eq.bids)
bids = proportional_bids(market)
print("static run, potential gap to equilibrium:")
for t in range(61):
    if t % 10 == 0:
        gap = prd_potential_g(market, bids) - g_star
        print(f"  round {t:>3}: {gap:.3e}")
    bids = prd_step(bids, market)

# Dynamic run: coefficients drift, constants fitted from a fresh warm-up.
schedule = generate_schedule(
    ScheduleSpec(channel="utility-multiplicative", magnitude=0.005, seed=5),
    market,
    600,
)
records = run_prd_trace(market, proportional_bids(market), schedule, None, 600)

recurrence = np.mean([r.recurrence_ok for r in records])
dominated = np.mean([r.potential <= r.bound + 1e-9 for r in records])
print(f"\ndynamic run, 600 rounds of coefficient drift (log-magnitude 0.005):")
print(f"  KL recurrence satisfied on {recurrence:.1%} of rounds")
print(f"  measured gap under the cumulative bound on {dominated:.1%} of rounds")
print(f"  final gap {records[-1].potential:.3e}, "
      f"final KL to the moving equilibrium {records[-1].kl_to_equilibrium:.3e}")
print("\nSupply changes need no separate analysis: fold each good's scale "
      "into the\ncoefficients (a <- a * w^rho) and the trajectories match "
      "entry for entry.")
