"""CES Fisher markets: demand, excess demand, and price-space potentials.

A market has m buyers with money budgets and n divisible goods with fixed
supplies.  Buyer i values bundles through a CES utility with coefficients
a[i, :] and curvature rho[i] (rho < 1, rho != 0; rho in (0, 1) is the
gross-substitutes regime, rho < 0 the complements regime).  All functions
here are pure: they never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LinearUtilityError(ValueError):
    """Demand is undefined for rho == 1 (no unique utility-maximising bundle)."""


class DegenerateDemandError(ValueError):
    """A buyer's demand denominator evaluated to zero or a non-finite value."""


def _as_vector(x, name: str) -> np.ndarray:
    # Copy so freezing the field never locks a caller-owned array.
    arr = np.array(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class CesMarket:
    """Immutable CES Fisher market.

    budgets:      (m,) strictly positive
    supplies:     (n,) strictly positive
    rho:          (m,) in (-inf, 1], nonzero
    coefficients: (m, n) non-negative, each row has a positive entry
    """

    budgets: np.ndarray
    supplies: np.ndarray
    rho: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        b = _as_vector(self.budgets, "budgets")
        w = _as_vector(self.supplies, "supplies")
        r = _as_vector(self.rho, "rho")
        a = np.array(self.coefficients, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"coefficients must be 2-d, got shape {a.shape}")
        m, n = a.shape
        if b.shape != (m,) or r.shape != (m,) or w.shape != (n,):
            raise ValueError(
                f"inconsistent shapes: budgets {b.shape}, rho {r.shape}, "
                f"supplies {w.shape}, coefficients {a.shape}"
            )
        if not np.all(b > 0):
            raise ValueError("all budgets must be strictly positive")
        if not np.all(w > 0):
            raise ValueError("all supplies must be strictly positive")
        if not np.all(a >= 0):
            raise ValueError("utility coefficients must be non-negative")
        if not np.all(a.max(axis=1) > 0):
            raise ValueError("every buyer needs at least one positive coefficient")
        if np.any(r == 0) or np.any(r > 1) or not np.all(np.isfinite(r)):
            raise ValueError("each rho must be finite, nonzero and at most 1")
        # Freeze the arrays so shared markets are safe across threads.
        for name, arr in (("budgets", b), ("supplies", w), ("rho", r), ("coefficients", a)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_buyers(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_goods(self) -> int:
        return self.coefficients.shape[1]

    @property
    def total_budget(self) -> float:
        return float(np.sum(self.budgets))

    @property
    def demand_exponent(self) -> np.ndarray:
        """Per-buyer exponent c_i = rho_i / (rho_i - 1) used by the demand formula."""
        return self.rho / (self.rho - 1.0)

    def replace(self, **kwargs) -> "CesMarket":
        """Return a copy with some fields replaced."""
        fields = {
            "budgets": self.budgets,
            "supplies": self.supplies,
            "rho": self.rho,
            "coefficients": self.coefficients,
        }
        fields.update(kwargs)
        return CesMarket(**fields)


@dataclass(frozen=True)
class DemandProfile:
    """Per-buyer demanded quantities plus per-good totals and excess demand."""

    quantities: np.ndarray  # (m, n)
    totals: np.ndarray      # (n,) column sums
    excess: np.ndarray      # (n,) totals - supplies
    spending: np.ndarray    # (m, n) prices * quantities


def check_prices(market: CesMarket, prices) -> np.ndarray:
    prices = _as_vector(prices, "prices")
    if prices.shape != (market.num_goods,):
        raise ValueError(
            f"price vector has shape {prices.shape}, expected ({market.num_goods},)"
        )
    if not np.all(prices > 0):
        raise ValueError("all prices must be strictly positive")
    if not np.all(np.isfinite(prices)):
        raise ValueError("prices must be finite")
    return prices


def _spending_shares(market: CesMarket, prices: np.ndarray) -> np.ndarray:
    """Fraction of each buyer's budget spent on each good at the given prices.

    share[i, j] = a[i,j]^(1-c_i) p_j^c_i / sum_k a[i,k]^(1-c_i) p_k^c_i.
    Rows sum to one; zero coefficients yield exactly zero shares.
    """
    if np.any(market.rho == 1.0):
        raise LinearUtilityError(
            "demand requires strictly concave utilities (rho < 1); "
            "a buyer with rho == 1 has no unique demand bundle"
        )
    c = market.demand_exponent[:, None]            # (m, 1)
    a = market.coefficients
    weights = a ** (1.0 - c) * prices[None, :] ** c  # (m, n)
    denom = weights.sum(axis=1)
    if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
        raise DegenerateDemandError(
            "demand denominator is zero or non-finite; "
            "degenerate coefficients or extreme prices"
        )
    return weights / denom[:, None]


def demand(market: CesMarket, prices) -> DemandProfile:
    """Utility-maximising demand of every buyer at the given prices.

    Each buyer spends the whole budget, so prices . quantities[i] == budgets[i].
    """
    prices = check_prices(market, prices)
    shares = _spending_shares(market, prices)
    spending = market.budgets[:, None] * shares
    quantities = spending / prices[None, :]
    totals = quantities.sum(axis=0)
    return DemandProfile(
        quantities=quantities,
        totals=totals,
        excess=totals - market.supplies,
        spending=spending,
    )


def misspending_potential(market: CesMarket, prices) -> float:
    """Total money misallocated relative to clearing: sum_j p_j * |x_j - w_j|.

    Zero exactly at market-clearing prices, positive elsewhere.
    """
    prices = check_prices(market, prices)
    profile = demand(market, prices)
    return float(np.sum(prices * np.abs(profile.excess)))


def unit_cost(market: CesMarket, prices) -> np.ndarray:
    """Minimum money each buyer needs to earn one unit of utility.

    Q_i(p) = (sum_k a[i,k]^(1-c_i) p_k^c_i)^(1/c_i); independent of budgets
    and supplies.
    """
    prices = check_prices(market, prices)
    c = market.demand_exponent[:, None]
    weights = market.coefficients ** (1.0 - c) * prices[None, :] ** c
    denom = weights.sum(axis=1)
    if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
        raise DegenerateDemandError("unit cost is zero or non-finite")
    return denom ** (1.0 / market.demand_exponent)


def cpf_potential(market: CesMarket, prices) -> float:
    """Convex price potential: sum_j w_j p_j - sum_i b_i ln Q_i(p).

    Convex in prices and minimised exactly at equilibrium prices; the minimum
    value is generally nonzero (use normalized_cpf_potential for a potential
    that vanishes at equilibrium).  May be negative.
    """
    prices = check_prices(market, prices)
    c = market.demand_exponent
    weights = market.coefficients ** (1.0 - c[:, None]) * prices[None, :] ** c[:, None]
    denom = weights.sum(axis=1)
    if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
        raise DegenerateDemandError("unit cost is zero or non-finite")
    log_q = np.log(denom) / c
    return float(np.sum(market.supplies * prices) - np.sum(market.budgets * log_q))


def normalized_cpf_potential(market: CesMarket, prices, psi_star: float) -> float:
    """Convex potential shifted by its minimum value so equilibrium scores zero.

    psi_star must come from the equilibrium solver for this market; the
    result is non-negative up to solver tolerance.
    """
    return cpf_potential(market, prices) - psi_star
