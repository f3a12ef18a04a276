"""Generic tracking bounds for linearly converging dynamics under drift.

A system exposes an evolution rule for its control variables and a
non-negative potential over (system parameters, control variables).  When
every static update contracts the potential by a factor (1 - delta) and each
parameter change raises it by at most a known jump, the potential stays under
an explicit envelope: geometric decay of the initial value plus a discounted
sum of the jumps.  A divergence-based variant replaces the contraction factor
with a pair of constants (q1, q2) driving a one-round recurrence on the
divergence to the moving fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log
from typing import Callable, Protocol, Sequence, runtime_checkable

from .trace import TraceRecord


def _check_delta(delta: float):
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")


def _check_deltas(deltas: Sequence[float], T: int):
    if len(deltas) != T:
        raise ValueError(f"need exactly {T} jump values, got {len(deltas)}")
    if any(d < 0 for d in deltas):
        raise ValueError("jump values must be non-negative")


def meta_bound(phi0: float, delta: float, deltas: Sequence[float], T: int) -> float:
    """(1-delta)^T phi0 + sum_t (1-delta)^(T-t) jump_t, t = 1..T."""
    _check_delta(delta)
    if T < 0:
        raise ValueError("horizon must be non-negative")
    _check_deltas(deltas, T)
    decay = 1.0 - delta
    value = decay**T * phi0
    for t, jump in enumerate(deltas, start=1):
        value += decay ** (T - t) * jump
    return float(value)


def windowed_bound(
    phi0: float, delta: float, deltas: Sequence[float], T: int, t: int
) -> float:
    """Split the jump sum at round t: recent jumps exactly, older ones capped.

    Recent rounds tau = t+1..T contribute their discounted jumps; everything
    older collapses into (1-delta)^(T-t)/delta times the largest jump.  Always
    at least as large as meta_bound on the same inputs.
    """
    _check_delta(delta)
    if not 0 <= t <= T:
        raise ValueError("split index must lie in [0, T]")
    _check_deltas(deltas, T)
    decay = 1.0 - delta
    worst = max(deltas, default=0.0)
    recent = sum(decay ** (T - tau) * deltas[tau - 1] for tau in range(t + 1, T + 1))
    return float(recent + decay ** (T - t) / delta * worst + decay**T * phi0)


def dominant_window(delta: float, T: int, alpha: float, beta: float) -> int:
    """Number of recent rounds that dominate the bound when jumps sum to O(T^alpha).

    ceil((alpha + beta) / delta * ln T); the remaining terms decay as T^-beta.
    """
    _check_delta(delta)
    if T < 2:
        raise ValueError("window needs a horizon of at least 2")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    return ceil((alpha + beta) / delta * log(T))


def bregman_bound(
    d0: float, q1: float, q2: float, deltas: Sequence[float], T: int
) -> float:
    """q1 (q1/q2)^(T-1) d0 + sum_{i=0}^{T-1} (q1/q2)^i jump_{T-i}.

    Envelope for the potential after T rounds when each round satisfies
    potential_t <= q1 d(target_{t-1}, p_{t-1}) - q2 d(target_t, p_t) + jump_t
    for a divergence d and drifting targets.
    """
    if not 0 < q1 < q2:
        raise ValueError("constants must satisfy 0 < q1 < q2")
    if d0 < 0:
        raise ValueError("initial divergence must be non-negative")
    if T < 1:
        raise ValueError("horizon must be at least 1")
    _check_deltas(deltas, T)
    ratio = q1 / q2
    value = q1 * ratio ** (T - 1) * d0
    for i in range(T):
        value += ratio**i * deltas[T - 1 - i]
    return float(value)


@runtime_checkable
class LyapunovSystem(Protocol):
    """Evolution rule plus potential; optionally a fixed point and divergence.

    initial_state / initial_control seed the tracker; evolve(state, control)
    applies one round of the dynamics using the current parameters.
    """

    initial_state: object
    initial_control: object

    def evolve(self, state, control): ...

    def potential(self, state, control) -> float: ...


@dataclass
class LyapunovTrace:
    """Tracker output: per-round records plus the constants that shaped them."""

    records: list
    phi0: float
    delta: float | None = None
    q1: float | None = None
    q2: float | None = None


def track(
    system: LyapunovSystem,
    perturbations: Sequence[Callable | None],
    horizon: int,
    delta: float | None = None,
    q1: float | None = None,
    q2: float | None = None,
) -> LyapunovTrace:
    """Run the generic loop: evolve control, perturb parameters, measure.

    perturbations[t-1] (when given and non-None) maps the current state to
    (new state, jump cap) at round t.  With `delta` the recorded bound is the
    contraction envelope anchored at the initial potential; with (q1, q2) the
    system must expose fixed_point(state) and divergence(target, control),
    and the bound is the divergence-recurrence envelope.  The t=0 record is
    always included.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if delta is not None:
        _check_delta(delta)
    elif q1 is not None or q2 is not None:
        if q1 is None or q2 is None or not 0 < q1 < q2:
            raise ValueError("constants must satisfy 0 < q1 < q2")
        if not hasattr(system, "fixed_point") or not hasattr(system, "divergence"):
            raise ValueError(
                "divergence tracking needs fixed_point and divergence on the system"
            )
    else:
        raise ValueError("supply either delta or the pair (q1, q2)")

    state = system.initial_state
    control = system.initial_control
    phi0 = system.potential(state, control)

    divergence_mode = delta is None
    d_env = None
    d_meas = None
    if divergence_mode:
        target = system.fixed_point(state)
        d_env = d_meas = system.divergence(target, control)

    records = [
        TraceRecord(
            round=0,
            potential=phi0,
            delta=0.0,
            bound=phi0,
            kl_to_equilibrium=d_meas,
        )
    ]
    bound = phi0
    for t in range(1, horizon + 1):
        control = system.evolve(state, control)
        pert = perturbations[t - 1] if t - 1 < len(perturbations) else None
        jump = 0.0
        if pert is not None:
            state, jump = pert(state)
        phi = system.potential(state, control)
        if divergence_mode:
            bound = q1 * d_env + jump
            d_env = (q1 / q2) * d_env + jump / q2
            target = system.fixed_point(state)
            d_meas = system.divergence(target, control)
        else:
            bound = (1.0 - delta) * bound + jump
        records.append(
            TraceRecord(
                round=t,
                potential=phi,
                delta=jump,
                bound=bound,
                kl_to_equilibrium=d_meas,
            )
        )
    return LyapunovTrace(records=records, phi0=phi0, delta=delta, q1=q1, q2=q2)


class MarketPriceSystem:
    """Tatonnement as a trackable system: state is the market, control the prices."""

    def __init__(self, market, prices, config):
        from .market import check_prices, misspending_potential
        from .tatonnement import CPF, _CpfPotential, _step

        self.initial_state = market
        self.initial_control = check_prices(market, prices)
        self._config = config
        self._step = _step
        self._potential = (
            _CpfPotential(market) if config.variant == CPF else misspending_potential
        )

    def evolve(self, market, prices):
        return self._step(prices, market, self._config)

    def potential(self, market, prices) -> float:
        return self._potential(market, prices)


def schedule_perturbations(schedule, horizon: int, config) -> list:
    """Per-round callables applying the schedule's events with their jump caps."""
    from .tatonnement import apply_round_events

    def make(t):
        events = schedule.events_at(t)
        if not events:
            return None

        def perturb(market):
            return apply_round_events(market, events, config)

        return perturb

    return [make(t) for t in range(1, horizon + 1)]
