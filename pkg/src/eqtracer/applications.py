"""Two non-market instantiations of the tracking framework.

Gradient descent on smooth, strongly convex objectives whose minimiser moves
every round, and diffusive load balancing on a machine network whose speeds
drift.  Both supply a per-step contraction factor (from curvature or from the
diffusion matrix's second eigenvalue) and a per-round jump cap, which combine
into the same geometric tracking envelopes used for markets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ---------------------------------------------------------------------------
# Gradient descent with a shifting optimum.
# ---------------------------------------------------------------------------


def gd_step(x, gradient_at_x, eta: float) -> np.ndarray:
    """Plain descent update x - eta * gradient."""
    return np.asarray(x, dtype=float) - eta * np.asarray(gradient_at_x, dtype=float)


def gd_contraction(alpha: float, beta_smooth: float, eta: float) -> float:
    """Squared-distance decay rate 2 eta alpha beta / (alpha + beta).

    Valid for step sizes up to 2 / (alpha + beta); at the largest step the
    rate is 4 alpha beta / (alpha + beta)^2, and alpha == beta contracts to
    the optimum in a single step.
    """
    if not 0 < alpha <= beta_smooth:
        raise ValueError("need 0 < alpha <= beta")
    if not 0 < eta <= 2.0 / (alpha + beta_smooth):
        raise ValueError("step size must lie in (0, 2/(alpha+beta)]")
    return 2.0 * eta * alpha * beta_smooth / (alpha + beta_smooth)


def gd_tracking_bound(
    phi0: float, delta: float, shift_deltas, T: int
) -> float:
    """(1-delta)^(T/2) phi0 + sum_t (1-delta)^((T-t)/2) shift_t.

    Distance envelope: the per-step contraction acts on squared distances, so
    the distance itself decays by sqrt(1-delta) per round while each optimum
    shift adds linearly.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    shifts = list(shift_deltas)
    if len(shifts) != T:
        raise ValueError(f"need exactly {T} shifts, got {len(shifts)}")
    if any(s < 0 for s in shifts):
        raise ValueError("shifts must be non-negative")
    root = (1.0 - delta) ** 0.5
    value = root**T * phi0
    for t, shift in enumerate(shifts, start=1):
        value += root ** (T - t) * shift
    return float(value)


def gd_steady_state(delta: float, shift: float) -> float:
    """Long-run tracking radius 2 * shift / delta for constant per-round drift."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    return 2.0 * shift / delta


def gd_regret_bound(
    phi0: float, delta: float, d: float, beta_smooth: float, T: int
) -> float:
    """Cumulative suboptimality cap for T rounds of drift at most d per round.

    Smoothness turns the distance envelope (1-delta)^(t/2) phi0 + 2d/delta
    into per-round gaps; summing the squares gives
    beta/delta * phi0^2 + beta T (2d/delta)^2.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if d < 0 or beta_smooth <= 0 or T < 0:
        raise ValueError("need d >= 0, beta > 0, T >= 0")
    return float(beta_smooth / delta * phi0**2 + beta_smooth * T * (2.0 * d / delta) ** 2)


@dataclass(frozen=True)
class ShiftingQuadratic:
    """Separable quadratic test objective with a prescribed optimum path.

    f_t(x) = 0.5 * sum_k curvatures_k (x_k - optima[t, k])^2, so the strong
    convexity and smoothness constants are the extreme curvatures and the
    minimiser is known exactly at every round.
    """

    curvatures: np.ndarray   # (d,) positive
    optima: np.ndarray       # (T+1, d) optimum per round
    eta: float

    def __post_init__(self):
        c = np.asarray(self.curvatures, dtype=float)
        path = np.asarray(self.optima, dtype=float)
        if c.ndim != 1 or np.any(c <= 0):
            raise ValueError("curvatures must be a positive vector")
        if path.ndim != 2 or path.shape[1] != c.size:
            raise ValueError("optimum path must be (rounds + 1, dims)")
        if not 0 < self.eta <= 2.0 / (c.min() + c.max()):
            raise ValueError("step size must lie in (0, 2/(alpha+beta)]")
        object.__setattr__(self, "curvatures", c)
        object.__setattr__(self, "optima", path)

    @property
    def alpha(self) -> float:
        return float(self.curvatures.min())

    @property
    def beta_smooth(self) -> float:
        return float(self.curvatures.max())

    @property
    def delta(self) -> float:
        return gd_contraction(self.alpha, self.beta_smooth, self.eta)

    def gradient(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.curvatures * (x - self.optima[t])

    def gap(self, t: int, x: np.ndarray) -> float:
        """f_t(x) - f_t(minimiser)."""
        return float(0.5 * np.sum(self.curvatures * (x - self.optima[t]) ** 2))


@dataclass
class GdTrace:
    distances: np.ndarray     # (T+1,) distance to the current optimum
    shifts: np.ndarray        # (T,) optimum movement per round
    bounds: np.ndarray        # (T+1,) tracking envelope, bounds[0] = distances[0]
    regret: float             # cumulative suboptimality over rounds 1..T


def simulate_shifting_quadratic(problem: ShiftingQuadratic, x0) -> GdTrace:
    """Descend while the optimum moves; record distances against the envelope.

    Round t: step against f_{t-1}, then the optimum shifts to optima[t] and
    the distance is measured there, so each round contracts first and absorbs
    the shift afterwards, exactly the envelope's recursion.
    """
    x = np.asarray(x0, dtype=float)
    T = problem.optima.shape[0] - 1
    root = (1.0 - problem.delta) ** 0.5
    distances = np.empty(T + 1)
    bounds = np.empty(T + 1)
    shifts = np.empty(T)
    distances[0] = bounds[0] = float(np.linalg.norm(x - problem.optima[0]))
    regret = 0.0
    for t in range(1, T + 1):
        x = gd_step(x, problem.gradient(t - 1, x), problem.eta)
        shifts[t - 1] = float(np.linalg.norm(problem.optima[t] - problem.optima[t - 1]))
        distances[t] = float(np.linalg.norm(x - problem.optima[t]))
        bounds[t] = root * bounds[t - 1] + shifts[t - 1]
        regret += problem.gap(t, x)
    return GdTrace(distances=distances, shifts=shifts, bounds=bounds, regret=regret)


# ---------------------------------------------------------------------------
# Diffusion load balancing with drifting machine speeds.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadNetwork:
    """Machines with speeds and divisible load, coupled by a diffusion matrix.

    The matrix must be symmetric, stochastic, with diagonal at least 1/2 and
    positive entries exactly on the network's edges.
    """

    speeds: np.ndarray       # (n,) positive
    loads: np.ndarray        # (n,) non-negative
    diffusivity: np.ndarray  # (n, n)

    def __post_init__(self):
        s = np.asarray(self.speeds, dtype=float)
        l = np.asarray(self.loads, dtype=float)
        P = np.asarray(self.diffusivity, dtype=float)
        n = s.size
        if s.ndim != 1 or np.any(s <= 0):
            raise ValueError("speeds must be a positive vector")
        if l.shape != (n,) or np.any(l < 0):
            raise ValueError("loads must be a non-negative vector of matching length")
        if P.shape != (n, n):
            raise ValueError("diffusivity must be square and match the machine count")
        if not np.allclose(P, P.T, rtol=0, atol=1e-12):
            raise ValueError("diffusivity must be symmetric")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("diffusivity rows must be non-negative and sum to one")
        if np.any(np.diag(P) < 0.5 - 1e-12):
            raise ValueError("diffusivity diagonal must be at least 1/2")
        for name, arr in (("speeds", s), ("loads", l), ("diffusivity", P)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def total_load(self) -> float:
        return float(self.loads.sum())

    @property
    def finishing_times(self) -> np.ndarray:
        return self.loads / self.speeds

    def with_speeds(self, speeds) -> "LoadNetwork":
        return LoadNetwork(speeds=np.asarray(speeds, dtype=float), loads=self.loads,
                           diffusivity=self.diffusivity)


def diffusion_step(network: LoadNetwork) -> LoadNetwork:
    """One round of pairwise transfers toward equal finishing times.

    The machine with the longer finishing time on edge (i, j) sends
    P_ij * (f_i - f_j) * s_i load to its neighbour.  Transfers are pairwise,
    so total load is conserved; the half-lazy diagonal keeps loads
    non-negative.  With uniform speeds the finishing times evolve exactly as
    f' = P f.
    """
    f = network.finishing_times
    gap = np.maximum(f[:, None] - f[None, :], 0.0)
    sent = network.diffusivity * gap * network.speeds[:, None]
    new_loads = network.loads - sent.sum(axis=1) + sent.sum(axis=0)
    return LoadNetwork(
        speeds=network.speeds, loads=new_loads, diffusivity=network.diffusivity
    )


def balanced_state(network: LoadNetwork) -> tuple[np.ndarray, float]:
    """Loads proportional to speed and the common finishing time M / sum(s)."""
    total_speed = float(network.speeds.sum())
    finish = network.total_load / total_speed
    return network.speeds * finish, finish


def second_eigenvalue(P, tol: float = 1e-10, max_iters: int = 10_000) -> float:
    """|second-largest eigenvalue| of a diffusion matrix, by power iteration.

    Iterates on the complement of the uniform eigenvector (eigenvalue one) and
    estimates the magnitude from the iterate's growth, which converges even
    when the subdominant eigenvalues come in +/- pairs.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if n == 1:
        return 0.0
    uniform = np.full(n, 1.0 / np.sqrt(n))
    v = np.arange(1.0, n + 1.0)
    v -= (v @ uniform) * uniform
    norm = np.linalg.norm(v)
    if norm == 0:
        return 0.0
    v /= norm
    estimate = 0.0
    for _ in range(max_iters):
        w = P @ v
        w -= (w @ uniform) * uniform
        norm = float(np.linalg.norm(w))
        if norm < 1e-300:
            return 0.0
        previous, estimate = estimate, norm
        v = w / norm
        if abs(estimate - previous) <= tol * max(1.0, estimate):
            break
    return estimate


def diffusion_tracking_bound(
    phi0: float, lambda2: float, speed_path, M: float, n: int, T: int
) -> float:
    """|lambda2|^T phi0 + M n sum_t |lambda2|^(T-t) |1/||s^t|| - 1/||s^(t-1)|||.

    All norms are L1; speed_path must hold T+1 speed vectors (rounds 0..T).
    A speed change moves the balanced finishing time by M/||s|| per machine,
    hence the M n factor on each jump.
    """
    lam = abs(lambda2)
    if lam >= 1:
        raise ValueError("the diffusion matrix must mix: |lambda2| < 1")
    path = [np.asarray(s, dtype=float) for s in speed_path]
    if len(path) < T + 1:
        raise ValueError(f"need {T + 1} speed vectors, got {len(path)}")
    if any(np.any(s <= 0) for s in path):
        raise ValueError("speeds must stay positive")
    inv = [1.0 / float(np.abs(s).sum()) for s in path]
    value = lam**T * phi0
    for t in range(1, T + 1):
        value += lam ** (T - t) * M * n * abs(inv[t] - inv[t - 1])
    return float(value)


@dataclass
class DiffusionTrace:
    potentials: np.ndarray    # (T+1,) L1 distance of finishing times to balanced
    jumps: np.ndarray         # (T,) M n |1/||s^t|| - 1/||s^(t-1)|||
    bounds: np.ndarray        # (T+1,) tracking envelope
    contractions: np.ndarray  # (T,) per-step L2 error ratio at fixed speeds


def simulate_diffusion(network: LoadNetwork, speed_path, T: int) -> DiffusionTrace:
    """Diffuse while speeds drift; record the imbalance against the envelope.

    Round t: one diffusion step at the old speeds, then speeds move to
    speed_path[t] (loads persist), then the L1 imbalance of finishing times
    against the balanced state is measured.  speed_path[0] must equal the
    network's speeds.
    """
    path = [np.asarray(s, dtype=float) for s in speed_path]
    if len(path) < T + 1:
        raise ValueError(f"need {T + 1} speed vectors, got {len(path)}")
    if not np.array_equal(path[0], network.speeds):
        raise ValueError("speed_path[0] must match the network's speeds")
    lam = second_eigenvalue(network.diffusivity)
    M = network.total_load
    n = network.speeds.size

    def imbalance(net):
        _, finish = balanced_state(net)
        return float(np.abs(net.finishing_times - finish).sum())

    potentials = np.empty(T + 1)
    bounds = np.empty(T + 1)
    jumps = np.empty(T)
    contractions = np.empty(T)
    potentials[0] = bounds[0] = imbalance(network)
    for t in range(1, T + 1):
        _, finish = balanced_state(network)
        error_before = np.linalg.norm(network.finishing_times - finish)
        network = diffusion_step(network)
        error_after = np.linalg.norm(network.finishing_times - finish)
        # Once the error is within a few orders of rounding noise the ratio
        # is meaningless; mark it NaN.
        noise_floor = 1e-7 * max(1.0, finish)
        contractions[t - 1] = (
            error_after / error_before if error_before > noise_floor else np.nan
        )
        inv_new = 1.0 / float(path[t].sum())
        inv_old = 1.0 / float(path[t - 1].sum())
        jumps[t - 1] = M * n * abs(inv_new - inv_old)
        network = network.with_speeds(path[t])
        potentials[t] = imbalance(network)
        bounds[t] = lam * bounds[t - 1] + jumps[t - 1]
    return DiffusionTrace(
        potentials=potentials, jumps=jumps, bounds=bounds, contractions=contractions
    )
