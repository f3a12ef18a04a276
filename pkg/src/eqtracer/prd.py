"""Proportional bid dynamics in the substitutes regime.

Buyers split budgets across goods, each good is allocated in proportion to
the bids on it, and next round's bids are proportional to the utility each
good contributed.  The dynamics minimise a convex bid-space potential whose
progress per round is measured by KL divergence to the equilibrium spending
matrix; the trace runner turns the per-round KL recurrence into cumulative
tracking bounds under drifting utility coefficients and supplies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import solve_equilibrium
from .market import CesMarket
from .perturbation import (
    BUDGET,
    SUPPLY,
    PerturbationSchedule,
    _min_coefficient_share,
    _prd_delta_from_parts,
    apply_event,
)
from .trace import TraceRecord


def _check_substitutes(market: CesMarket):
    if np.any((market.rho <= 0) | (market.rho >= 1)):
        raise ValueError("bid dynamics require rho in (0, 1) for every buyer")


def proportional_bids(market: CesMarket) -> np.ndarray:
    """Default initial bids: budgets split in proportion to coefficients.

    Guarantees positive bids exactly on the coefficient support, which the
    update then preserves, and keeps every bid above the contraction floor.
    """
    a = market.coefficients
    return market.budgets[:, None] * a / a.sum(axis=1, keepdims=True)


def check_bids(market: CesMarket, bids) -> np.ndarray:
    bids = np.asarray(bids, dtype=float)
    if bids.shape != market.coefficients.shape:
        raise ValueError(
            f"bids shape {bids.shape} does not match market "
            f"{market.coefficients.shape}"
        )
    if np.any(bids < 0):
        raise ValueError("bids must be non-negative")
    rows = bids.sum(axis=1)
    if not np.allclose(rows, market.budgets, rtol=1e-9, atol=0):
        raise ValueError("each buyer's bids must sum to the budget")
    support_mismatch = (bids > 0) != (market.coefficients > 0)
    if np.any(support_mismatch):
        raise ValueError("bids must be positive exactly where coefficients are")
    return bids


def prd_step(bids, market: CesMarket) -> np.ndarray:
    """One bid update: allocate goods pro rata, re-split budgets by utility.

    The quantity buyer i receives of good j is supplies_j * b_ij / p_j with
    p_j the money on good j; new bids are proportional to
    a_ij * quantity^rho_i and each row is renormalised to the buyer's budget
    so row sums are preserved exactly.
    """
    _check_substitutes(market)
    bids = np.asarray(bids, dtype=float)
    if bids.shape != market.coefficients.shape:
        raise ValueError("bids shape does not match the market")
    if np.any(bids < 0):
        raise ValueError("bids must be non-negative")
    a = market.coefficients
    prices = bids.sum(axis=0)
    dead = prices <= 0
    if np.any(dead) and np.any(a[:, dead] > 0):
        raise ValueError(
            "a good with zero total bids still carries positive "
            "coefficients; its allocation share is undefined"
        )
    safe_prices = np.where(dead, 1.0, prices)
    quantity = market.supplies[None, :] * bids / safe_prices[None, :]
    weights = a * quantity ** market.rho[:, None]
    norms = weights.sum(axis=1)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        raise ValueError("a buyer's bid normaliser is zero or non-finite")
    new = market.budgets[:, None] * (weights / norms[:, None])
    # Pin row sums to the budgets (to the last rounding unit, so sums cannot
    # drift over long runs); the residue goes to the largest entry, which
    # never disturbs the zero pattern.
    for _ in range(4):
        residue = market.budgets - new.sum(axis=1)
        if not residue.any():
            break
        new[np.arange(new.shape[0]), new.argmax(axis=1)] += residue
    return new


def kl_divergence(x, y) -> float:
    """sum over x > 0 of x * ln(x / y) for equal-mass non-negative arrays.

    Requires matching masses (1e-12 relative) and y > 0 wherever x > 0;
    tiny negative rounding is clamped to zero.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("arrays must have matching shapes")
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("arrays must be non-negative")
    mass_x, mass_y = float(x.sum()), float(y.sum())
    if abs(mass_x - mass_y) > 1e-12 * max(abs(mass_x), abs(mass_y), 1.0):
        raise ValueError(f"mass mismatch: {mass_x!r} vs {mass_y!r}")
    active = x > 0
    if np.any(y[active] <= 0):
        raise ValueError("support violation: y must be positive wherever x is")
    value = float(np.sum(x[active] * np.log(x[active] / y[active])))
    return max(value, 0.0)


def prd_potential_g(market: CesMarket, bids) -> float:
    """Convex bid-space potential minimised exactly at equilibrium spending.

    g(B) = - sum over bids > 0 of (b_ij / rho_i) ln(a_ij b_ij^(rho_i - 1)
    / p_j^rho_i); zero bids contribute nothing (x ln x limit).
    """
    _check_substitutes(market)
    bids = np.asarray(bids, dtype=float)
    if bids.shape != market.coefficients.shape:
        raise ValueError("bids shape does not match the market")
    a = market.coefficients
    active = bids > 0
    if np.any(active & (a <= 0)):
        raise ValueError("positive bid on a zero coefficient makes g non-finite")
    prices = bids.sum(axis=0)
    rho = market.rho[:, None]
    log_term = np.zeros_like(bids)
    np.log(a, out=log_term, where=active)
    log_bids = np.zeros_like(bids)
    np.log(bids, out=log_bids, where=active)
    log_prices = np.log(np.where(prices > 0, prices, 1.0))
    inner = log_term + (rho - 1.0) * log_bids - rho * log_prices[None, :]
    contrib = np.where(active, bids / rho * inner, 0.0)
    return float(-contrib.sum())


def prd_normalized_potential(market: CesMarket, bids, g_star: float) -> float:
    """Potential gap to the equilibrium value; non-negative up to solver tolerance."""
    return prd_potential_g(market, bids) - g_star


def reduce_supply_to_utility(market: CesMarket, supply_log_changes) -> CesMarket:
    """Absorb supply scale into coefficients, returning a unit-supply market.

    Good j's log-supply change eps_j (plus any non-unit current supply) is
    folded in as a_ij <- a_ij * exp((eps_j + ln w_j) * rho_i); bid dynamics
    on the original and reduced markets coincide entrywise.
    """
    eps = np.asarray(supply_log_changes, dtype=float)
    if eps.shape != (market.num_goods,):
        raise ValueError("need one log change per good")
    total_log = eps + np.log(market.supplies)
    factors = np.exp(market.rho[:, None] * total_log[None, :])
    return market.replace(
        coefficients=market.coefficients * factors,
        supplies=np.ones(market.num_goods),
    )


@dataclass(frozen=True)
class PrdBoundConfig:
    """Recurrence constants 0 < q1 < q2 for the KL tracking bound."""

    q1: float
    q2: float

    def __post_init__(self):
        if not 0 < self.q1 < self.q2:
            raise ValueError("constants must satisfy 0 < q1 < q2")

    @property
    def ratio(self) -> float:
        return self.q1 / self.q2


def fit_prd_constants(
    market: CesMarket,
    bids,
    rounds: int = 200,
    solver_tolerance: float = 1e-10,
) -> tuple[PrdBoundConfig, np.ndarray]:
    """Fit (q1, q2) from a static run and return them with the final bids.

    The ratio q1/q2 is set halfway between the worst observed per-round KL
    ratio and 1; the scale is the smallest q2 for which
    potential gap_{t+1} <= q1 KL_t - q2 KL_{t+1} holds at every observed
    round.  Callers should report the constants as fitted, not derived.
    """
    if rounds < 2:
        raise ValueError("need at least two warm-up rounds to fit constants")
    _check_substitutes(market)
    eq = solve_equilibrium(market, tolerance=solver_tolerance)
    g_star = prd_potential_g(market, eq.bids)
    bids = np.asarray(bids, dtype=float)
    kl = kl_divergence(eq.bids, bids)
    # Stop fitting once the KL distance sinks toward the solver's own
    # accuracy plateau, where per-round ratios are rounding noise.
    floor = max(kl * 1e-12, 1e-13 * market.total_budget)
    triples = []
    for _ in range(rounds):
        bids = prd_step(bids, market)
        kl_next = kl_divergence(eq.bids, bids)
        gap_next = prd_potential_g(market, bids) - g_star
        if kl > floor:
            triples.append((kl, kl_next, gap_next))
        kl = kl_next
    if not triples:
        raise ValueError("warm-up started at a converged state; nothing to fit")
    worst_ratio = max(nxt / cur for cur, nxt, _ in triples)
    if worst_ratio >= 1:
        raise ValueError(
            f"KL distance failed to contract during warm-up (ratio {worst_ratio:.6f})"
        )
    ratio = (1.0 + worst_ratio) / 2.0
    q2 = max(
        max(gap / (ratio * cur - nxt) for cur, nxt, gap in triples),
        1e-9,
    )
    return PrdBoundConfig(q1=ratio * q2, q2=q2), bids


def run_prd_trace(
    market0: CesMarket,
    bids0,
    schedule: PerturbationSchedule,
    bound: PrdBoundConfig | None,
    horizon: int,
    warmup_rounds: int = 200,
    solver_tolerance: float = 1e-10,
) -> list[TraceRecord]:
    """Simulate bid dynamics while supplies and utility coefficients drift.

    Supply events are first folded into utility coefficients (unit-supply
    normalisation), budget events are rejected.  Round t: update bids against
    the previous market, apply events, re-solve the per-round equilibrium
    (warm-started; cached on static rounds), then record the potential gap,
    the KL distance to equilibrium, the per-round jump cap (with the
    coefficient-share floor taken over rounds seen so far), the cumulative
    geometric KL bound, and whether the one-round KL recurrence held.

    With bound=None the constants are fitted from a static warm-up and the
    trace continues from the warmed bids.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if schedule.max_round > horizon:
        raise ValueError("schedule contains events beyond the horizon")
    if BUDGET in schedule.channels():
        raise ValueError(
            "budget events are unsupported: the bid domain itself would move"
        )
    _check_substitutes(market0)

    market = reduce_supply_to_utility(market0, np.zeros(market0.num_goods))
    bids = check_bids(market, bids0)

    if bound is None:
        bound, bids = fit_prd_constants(
            market, bids, rounds=warmup_rounds, solver_tolerance=solver_tolerance
        )

    eq = solve_equilibrium(market, tolerance=solver_tolerance)
    g_star = prd_potential_g(market, eq.bids)
    kl_prev = kl_divergence(eq.bids, bids)
    kl_anchor = kl_prev
    min_share = _min_coefficient_share([market])
    budgets, rho = market.budgets, market.rho
    total = market.total_budget
    recurrence_slack = 1e-12 * max(total, 1.0)

    records: list[TraceRecord] = []
    delta_max = 0.0
    for t in range(1, horizon + 1):
        bids = prd_step(bids, market)
        events = schedule.events_at(t)
        eps_t = 0.0
        if events:
            logs = np.zeros_like(market.coefficients)
            for event in events:
                if event.channel == SUPPLY:
                    perturbed = apply_event(market, event)
                    logs += rho[:, None] * np.log(perturbed.supplies)[None, :]
                    market = reduce_supply_to_utility(
                        perturbed, np.zeros(market.num_goods)
                    )
                else:
                    logs += np.log(event.payload)
                    market = apply_event(market, event)
            eps_t = float(np.abs(logs).max())
            min_share = np.minimum(min_share, _min_coefficient_share([market]))
            eq = solve_equilibrium(
                market, tolerance=solver_tolerance, initial_prices=eq.prices
            )
            g_star = prd_potential_g(market, eq.bids)
        delta_t = _prd_delta_from_parts(budgets, rho, min_share, eps_t)
        delta_max = max(delta_max, delta_t)
        gap = prd_potential_g(market, bids) - g_star
        kl = kl_divergence(eq.bids, bids)
        geo = bound.q1 * bound.ratio ** (t - 1) * kl_anchor
        cumulative = geo + bound.q2 / (bound.q2 - bound.q1) * delta_max
        recurrence_ok = bool(
            bound.q2 * kl <= bound.q1 * kl_prev + delta_t + recurrence_slack
        )
        prices = bids.sum(axis=0)
        records.append(
            TraceRecord(
                round=t,
                potential=gap,
                delta=delta_t,
                bound=cumulative,
                max_price=float(prices.max()),
                min_price=float(prices.min()),
                kl_to_equilibrium=kl,
                recurrence_ok=recurrence_ok,
            )
        )
        kl_prev = kl
    return records
