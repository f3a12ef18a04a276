"""Gradient descent chasing a minimiser that moves every round.

On a smooth, strongly convex objective, plain descent contracts the distance
to the minimiser geometrically.  When the minimiser drifts by at most d per
round the distance settles inside a radius of 2d / delta, and cumulative
suboptimality grows only linearly in the horizon.
"""

import numpy as np

from eqtracer import (
    ShiftingQuadratic,
    gd_regret_bound,
    gd_steady_state,
    simulate_shifting_quadratic,
)

rng = np.random.default_rng(11)
dims, horizon, shift = 5, 800, 0.01
curvatures = rng.uniform(0.5, 3.0, dims)
directions = rng.normal(size=(horizon + 1, dims))
directions /= np.linalg.norm(directions, axis=1, keepdims=True)
optima = np.cumsum(shift * directions, axis=0)

problem = ShiftingQuadratic(
    curvatures=curvatures,
    optima=optima,
    eta=2.0 / (curvatures.min() + curvatures.max()),
)
print(f"curvatures in [{problem.alpha:.2f}, {problem.beta_smooth:.2f}], "
      f"step size {problem.eta:.4f}, contraction rate {problem.delta:.4f}")

trace = simulate_shifting_quadratic(problem, optima[0] + rng.normal(size=dims))

radius = gd_steady_state(problem.delta, shift)
print(f"\n{'round':>6} {'distance':>10} {'envelope':>10}")
for t in (0, 5, 20, 100, 400, 800):
    print(f"{t:>6} {trace.distances[t]:>10.4f} {trace.bounds[t]:>10.4f}")

print(f"\ntracking radius 2 d / delta = {radius:.4f}")
print(f"late-round distances stay below it: "
      f"{bool(np.all(trace.distances[200:] <= radius + 1e-9))}")

cap = gd_regret_bound(trace.distances[0], problem.delta, shift,
                      problem.beta_smooth, horizon)
print(f"cumulative suboptimality {trace.regret:.3f} <= cap {cap:.3f} "
      f"(linear in the horizon)")
print(f"per-round average late in the run: "
      f"{(trace.regret / horizon):.5f}, a constant once inside the radius")
