"""Renyi differential privacy accounting for the ensemble pipeline.

Costs are tracked as curves over a fixed grid of Renyi orders. Leaf
trainings run on disjoint user clusters, so they compose in parallel
(pointwise max); reusing the same users across stages composes
sequentially (pointwise sum). Budgets convert to (epsilon, delta)-DP by
minimizing over the order grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidLedgerError

DEFAULT_ORDERS = (1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0,
                  16.0, 32.0, 64.0, 128.0, 256.0)

AGG_REGIMES = ("optin", "same_users", "disjoint_users")


@dataclass(frozen=True)
class RdpCurve:
    """Per-order epsilon(alpha). Non-finite entries are dropped with their order."""

    orders: tuple[float, ...]
    eps: tuple[float, ...]

    def __post_init__(self):
        if len(self.orders) != len(self.eps):
            raise ValueError("orders and eps must have equal length")
        if any(a <= 1.0 for a in self.orders):
            raise ValueError("all orders must be > 1")
        keep = [(a, e) for a, e in zip(self.orders, self.eps) if math.isfinite(e)]
        if any(e < 0 for _, e in keep):
            raise ValueError("epsilon values must be nonnegative")
        object.__setattr__(self, "orders", tuple(a for a, _ in keep))
        object.__setattr__(self, "eps", tuple(float(e) for _, e in keep))

    @classmethod
    def zero(cls, orders=DEFAULT_ORDERS) -> "RdpCurve":
        return cls(tuple(orders), tuple(0.0 for _ in orders))

    def is_zero(self) -> bool:
        return all(e == 0.0 for e in self.eps)


@dataclass
class PrivacyLedger:
    """Composition bookkeeping for leaf trainings plus the aggregation stage."""

    leaf_costs: dict[object, RdpCurve]
    agg_cost: RdpCurve
    agg_regime: str = "optin"

    def __post_init__(self):
        if self.agg_regime not in AGG_REGIMES:
            raise InvalidLedgerError(f"unknown aggregation regime: {self.agg_regime!r}")


@dataclass
class DpBudgetReport:
    epsilon: float
    delta: float
    optimal_order: float


def gaussian_rdp(noise_multiplier: float, order: float) -> float:
    """Order-alpha Renyi divergence between N(0, sigma^2) and N(1, sigma^2).

    This is the per-release cost of one unit-sensitivity Gaussian
    mechanism; sigma <= 0 is an unbounded mechanism (infinite cost).
    """
    if order <= 1.0:
        raise ValueError(f"order must be > 1, got {order}")
    if noise_multiplier <= 0.0:
        return math.inf
    return order / (2.0 * noise_multiplier * noise_multiplier)


def gaussian_curve(noise_multiplier: float, orders=DEFAULT_ORDERS) -> RdpCurve:
    return RdpCurve(tuple(orders),
                    tuple(gaussian_rdp(noise_multiplier, a) for a in orders))


def _check_grids(curves):
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one curve")
    grid = curves[0].orders
    for c in curves[1:]:
        if c.orders != grid:
            raise ValueError(f"order grids differ: {c.orders} vs {grid}")
    return curves, grid


def compose_sequential(curves) -> RdpCurve:
    """Same users feed every mechanism: costs add pointwise."""
    curves, grid = _check_grids(curves)
    eps = tuple(sum(c.eps[i] for c in curves) for i in range(len(grid)))
    return RdpCurve(grid, eps)


def compose_parallel(curves) -> RdpCurve:
    """Disjoint user sets feed the mechanisms: pointwise maximum.

    Disjointness is asserted by the caller; leaf training satisfies it via
    the cluster assignment's partition invariant.
    """
    curves, grid = _check_grids(curves)
    eps = tuple(max(c.eps[i] for c in curves) for i in range(len(grid)))
    return RdpCurve(grid, eps)


def rdp_to_dp(curve: RdpCurve, delta: float) -> DpBudgetReport:
    """epsilon = min over orders of eps(alpha) + ln(1/delta)/(alpha - 1)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not curve.orders:
        raise ValueError("cannot convert an empty curve (unbounded mechanism)")
    log_term = math.log(1.0 / delta)
    best_eps = math.inf
    best_order = curve.orders[0]
    for a, e in zip(curve.orders, curve.eps):
        candidate = e + log_term / (a - 1.0)
        if candidate < best_eps:
            best_eps = candidate
            best_order = a
    return DpBudgetReport(epsilon=best_eps, delta=delta, optimal_order=best_order)


def total_cost(ledger: PrivacyLedger) -> RdpCurve:
    """Full-pipeline cost: parallel over leaves, then the regime rule.

    optin: aggregation uses no private data, total = leaf cost.
    same_users: the leaf users also train the aggregator, costs add.
    disjoint_users: a fresh user set trains the aggregator, take the max.
    """
    if not ledger.leaf_costs:
        raise ValueError("ledger has no leaf costs")
    e_leafs = compose_parallel(list(ledger.leaf_costs.values()))
    if ledger.agg_regime == "optin":
        if not ledger.agg_cost.is_zero():
            raise InvalidLedgerError(
                "optin regime requires a zero aggregation cost")
        return e_leafs
    if ledger.agg_regime == "same_users":
        return compose_sequential([e_leafs, ledger.agg_cost])
    return compose_parallel([e_leafs, ledger.agg_cost])
