"""Static-market equilibrium solver.

Used to normalise potentials (the convex potential's minimum value) and to
seed bid-space dynamics with equilibrium spending matrices.  Two strategies,
both deterministic:

* all buyers in the substitutes regime (rho in (0, 1)): iterate the
  proportional bid update on the supply-normalised market and read prices
  off the bids.  The implied prices converge linearly to the clearing
  prices; raw iteration of the spending map itself can 2-cycle, see
  spending_map.
* otherwise: damped multiplicative price updates driven by absolute excess
  demand (step factor 0.05), which converge for every CES market.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import (
    CesMarket,
    check_prices,
    cpf_potential,
    demand,
    misspending_potential,
)

_FALLBACK_STEP = 0.05


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested residual; carries the last value."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class EquilibriumResult:
    """Equilibrium prices, spending matrix, potential minimum and residual."""

    prices: np.ndarray      # (n,) market-clearing prices
    bids: np.ndarray        # (m, n) equilibrium spending, rows sum to budgets
    psi_star: float         # minimum of the convex price potential
    residual: float         # misspending at the returned prices
    iterations: int


def _unit_supply_form(market: CesMarket) -> CesMarket:
    """Equivalent unit-supply market: supplies folded into the coefficients."""
    a = market.coefficients * market.supplies[None, :] ** market.rho[:, None]
    return market.replace(coefficients=a, supplies=np.ones(market.num_goods))


def spending_map(market: CesMarket, prices) -> np.ndarray:
    """One application of p <- money spent per good at prices p.

    Preserves sum(p) = total budget at every iterate.  Its fixed points are
    the clearing prices of the unit-supply form, but iterating it raw can
    cycle (spending overshoots), so the solver drives the underlying bid
    update instead and reads prices off the bids.
    """
    profile = demand(market, prices)
    return profile.spending.sum(axis=0)


def _bid_pass(unit: CesMarket, bids: np.ndarray, target: float, max_iters: int):
    """Iterate the proportional bid update until implied prices clear.

    Hand-rolled inner loop: the coefficient power a^(1-c) is constant across
    iterations, and unit supplies make quantities plain bid shares.
    """
    a = unit.coefficients
    b = unit.budgets[:, None]
    rho = unit.rho[:, None]
    c = unit.demand_exponent[:, None]
    a_pow = a ** (1.0 - c)
    residual = np.inf
    for it in range(max_iters):
        p = bids.sum(axis=0)
        weights = a_pow * p[None, :] ** c
        spend = b * weights / weights.sum(axis=1, keepdims=True)
        excess = (spend / p[None, :]).sum(axis=0) - 1.0
        residual = float(np.sum(p * np.abs(excess)))
        if residual <= target:
            return p, bids, residual, it
        utility = a * (bids / p[None, :]) ** rho
        bids = b * utility / utility.sum(axis=1, keepdims=True)
    return bids.sum(axis=0), bids, residual, max_iters


def _damped_pass(market: CesMarket, p: np.ndarray, target: float, max_iters: int):
    """Multiplicative updates p <- p * (1 + step * min(1, excess))."""
    residual = np.inf
    for it in range(max_iters):
        profile = demand(market, p)
        residual = float(np.sum(p * np.abs(profile.excess)))
        if residual <= target:
            return p, residual, it
        factors = 1.0 + _FALLBACK_STEP * np.minimum(profile.excess, 1.0)
        if np.any(factors <= 0):
            raise ConvergenceError(
                "price update would drive a price non-positive; "
                "the damping step is too large for this market",
                residual,
            )
        p = p * factors
    return p, residual, max_iters


def solve_equilibrium(
    market: CesMarket,
    tolerance: float = 1e-8,
    max_iters: int = 200_000,
    initial_prices=None,
) -> EquilibriumResult:
    """Find prices whose misspending is at most tolerance * total budget.

    `initial_prices` warm-starts the solve (defaults to uniform B/n).
    Raises ConvergenceError, reporting the final residual, if the iteration
    budget is exhausted.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    total = market.total_budget
    target = tolerance * total
    n = market.num_goods
    if np.any(market.coefficients.max(axis=0) == 0):
        raise ValueError(
            "invalid market: some good carries no positive coefficient, "
            "so its clearing price is zero and outside the price domain"
        )

    if initial_prices is not None:
        # A warm start that already clears is returned untouched, so re-solves
        # on an unchanged market reproduce the previous result bit for bit.
        warm = check_prices(market, initial_prices)
        residual = misspending_potential(market, warm)
        if residual <= target:
            profile = demand(market, warm)
            return EquilibriumResult(
                prices=warm.copy(),
                bids=profile.spending,
                psi_star=cpf_potential(market, warm),
                residual=residual,
                iterations=0,
            )

    substitutes = bool(np.all((market.rho > 0) & (market.rho < 1)))
    if substitutes:
        # Drive the proportional bid update on the unit-supply form; its
        # implied prices converge linearly to the clearing prices, which map
        # back to the original market through the supply factor.  The
        # residual transfers exactly up to rounding, so converge a bit past
        # the target and re-check on the original market.
        unit = _unit_supply_form(market)
        if initial_prices is None:
            a = unit.coefficients
            bids = unit.budgets[:, None] * a / a.sum(axis=1, keepdims=True)
        else:
            p0 = check_prices(market, initial_prices) * market.supplies
            bids = demand(unit, p0).spending
        iterations = 0
        inner_target = 0.9 * target
        for _ in range(3):
            p, bids, _, used = _bid_pass(unit, bids, inner_target, max_iters - iterations)
            iterations += used
            prices = p / market.supplies
            residual = misspending_potential(market, prices)
            if residual <= target or iterations >= max_iters:
                break
            inner_target *= 0.5
    else:
        if initial_prices is None:
            p = np.full(n, total / n)
        else:
            p = check_prices(market, initial_prices).copy()
        prices, residual, iterations = _damped_pass(market, p, target, max_iters)

    if residual > target:
        raise ConvergenceError(
            f"equilibrium solve stopped at residual {residual:.3e} "
            f"(target {target:.3e}) after {iterations} iterations",
            residual,
        )

    profile = demand(market, prices)
    return EquilibriumResult(
        prices=prices,
        bids=profile.spending,
        psi_star=cpf_potential(market, prices),
        residual=residual,
        iterations=iterations,
    )
