"""Early-stopping machinery: spending functions, group-sequential boundaries,
and the interim checks for both approaches.

Boundaries are found look by look so that the probability of first crossing
at look j under the null Brownian model equals that look's incremental
spend. The sequential sub-density is propagated on a fixed grid (recursive
convolution) and each boundary is located by bisection. Futility is binding:
paths absorbed below the futility bound cannot later count as efficacy
crossings, and the final-look boundaries coincide so a decision is forced.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import DesignConfig


class TooManyLooks(ValueError):
    """Schedules beyond 200 looks are rejected."""


_UNDERFLOW = 1e-12
_GRID_SPAN = 8.0  # standard deviations
_BISECT_TOL = 1e-6


def spending_obf(t: float, alpha: float) -> float:
    """O'Brien-Fleming-type cumulative spend: 2*(1 - Phi(z_{1-a/2}/sqrt(t)))."""
    if t <= 0.0:
        return 0.0
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    return float(2.0 * stats.norm.sf(z / math.sqrt(min(t, 1.0))))


def spending_pocock(t: float, alpha: float) -> float:
    """Pocock-type cumulative spend: alpha * ln(1 + (e-1)t)."""
    if t <= 0.0:
        return 0.0
    return float(alpha * math.log(1.0 + (math.e - 1.0) * min(t, 1.0)))


def spending_linear(t: float, alpha: float) -> float:
    """Proportional spend: alpha * t."""
    return float(alpha * min(max(t, 0.0), 1.0))


SPENDING_FUNCTIONS: dict[str, Callable[[float, float], float]] = {
    "obf": spending_obf,
    "pocock": spending_pocock,
    "linear": spending_linear,
}


class InterimAction(enum.Enum):
    CONTINUE = "continue"
    STOP_EFFICACY = "stop_efficacy"
    STOP_FUTILITY = "stop_futility"


@dataclass(frozen=True)
class GsBoundaries:
    """Per-look z boundaries produced by an alpha-spending computation."""

    info_fractions: tuple[float, ...]
    efficacy_z: tuple[float, ...]
    futility_z: tuple[float, ...]
    alpha: float
    beta_spend: float
    cum_alpha_spend: tuple[float, ...]
    cum_beta_spend: tuple[float, ...]

    @property
    def looks(self) -> int:
        return len(self.info_fractions)


def _cumulative_spends(
    fractions: Sequence[float], total: float, family: str
) -> np.ndarray:
    fn = SPENDING_FUNCTIONS[family]
    cum = np.array([fn(t, total) for t in fractions])
    cum = np.maximum.accumulate(np.clip(cum, 0.0, total))
    cum[-1] = total
    return cum


def compute_boundaries(
    info_fractions: Sequence[float],
    alpha: float,
    beta_spend: float,
    efficacy_spending: str = "obf",
    futility_spending: str = "linear",
    grid_points: int = 1024,
) -> GsBoundaries:
    """Solve the per-look efficacy/futility z boundaries for a schedule.

    Looks whose incremental spend underflows 1e-12 get an infinite sentinel
    boundary on that side ("cannot stop this early"); with 200 equally
    spaced looks the OBF efficacy spends underflow for roughly the first
    fifteen looks.
    """
    t = np.asarray(info_fractions, dtype=float)
    J = t.size
    if J < 1:
        raise ValueError("need at least one look")
    if J > 200:
        raise TooManyLooks(f"{J} looks exceeds the supported 200")
    if np.any(np.diff(t) <= 0.0) or t[0] <= 0.0 or abs(t[-1] - 1.0) > 1e-12:
        raise ValueError("info fractions must be strictly increasing and end at 1")

    cum_a = _cumulative_spends(t, alpha, efficacy_spending)
    cum_b = _cumulative_spends(t, beta_spend, futility_spending)
    inc_a = np.diff(np.concatenate(([0.0], cum_a)))
    inc_b = np.diff(np.concatenate(([0.0], cum_b)))

    eff = np.empty(J)
    fut = np.empty(J)
    grid = None  # S-scale abscissae of the continuation region
    psi = None  # sub-density values on the grid

    for j in range(J):
        sd_j = math.sqrt(t[j])
        final = j == J - 1
        if j == 0:
            eff[0] = (
                math.inf if inc_a[0] < _UNDERFLOW else float(stats.norm.isf(inc_a[0]))
            )
            if final:
                fut[0] = eff[0]
            else:
                fut[0] = (
                    -math.inf
                    if inc_b[0] < _UNDERFLOW
                    else float(stats.norm.ppf(inc_b[0]))
                )
        else:
            delta = t[j] - t[j - 1]
            sqd = math.sqrt(delta)
            weights = _trapezoid_weights(grid)

            def upper_cross(z_b: float) -> float:
                return float(
                    np.sum(weights * psi * stats.norm.sf((z_b * sd_j - grid) / sqd))
                )

            def lower_cross(z_a: float) -> float:
                return float(
                    np.sum(weights * psi * stats.norm.cdf((z_a * sd_j - grid) / sqd))
                )

            eff[j] = (
                math.inf
                if inc_a[j] < _UNDERFLOW
                else _bisect_decreasing(upper_cross, inc_a[j])
            )
            if final:
                fut[j] = eff[j]
            else:
                fut[j] = (
                    -math.inf
                    if inc_b[j] < _UNDERFLOW
                    else -_bisect_decreasing(lambda z: lower_cross(-z), inc_b[j])
                )
        if not final and fut[j] >= eff[j]:
            raise ValueError(
                f"futility bound {fut[j]:.4f} meets efficacy bound {eff[j]:.4f} "
                f"at interim look {j + 1}; reduce beta_spend"
            )
        if final:
            break

        lo = max(fut[j] * sd_j if math.isfinite(fut[j]) else -math.inf, -_GRID_SPAN * sd_j)
        hi = min(eff[j] * sd_j if math.isfinite(eff[j]) else math.inf, _GRID_SPAN * sd_j)
        new_grid = np.linspace(lo, hi, grid_points)
        if j == 0:
            new_psi = stats.norm.pdf(new_grid, 0.0, sd_j)
        else:
            sqd = math.sqrt(t[j] - t[j - 1])
            weights = _trapezoid_weights(grid)
            kernel = stats.norm.pdf((new_grid[:, None] - grid[None, :]) / sqd) / sqd
            new_psi = kernel @ (weights * psi)
        grid, psi = new_grid, new_psi

    return GsBoundaries(
        info_fractions=tuple(float(x) for x in t),
        efficacy_z=tuple(float(x) for x in eff),
        futility_z=tuple(float(x) for x in fut),
        alpha=alpha,
        beta_spend=beta_spend,
        cum_alpha_spend=tuple(float(x) for x in cum_a),
        cum_beta_spend=tuple(float(x) for x in cum_b),
    )


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.full(grid.size, grid[1] - grid[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _bisect_decreasing(fn: Callable[[float], float], target: float) -> float:
    """Root of fn(z) == target for fn decreasing in z, to 1e-6 on the z scale."""
    lo, hi = -_GRID_SPAN, _GRID_SPAN
    if fn(lo) < target:
        return lo
    if fn(hi) > target:
        return hi
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if fn(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=64)
def _cached_boundaries(
    fractions: tuple[float, ...],
    alpha: float,
    beta_spend: float,
    efficacy_spending: str,
    futility_spending: str,
) -> GsBoundaries:
    return compute_boundaries(
        fractions, alpha, beta_spend, efficacy_spending, futility_spending
    )


def boundaries_for_config(config: DesignConfig) -> GsBoundaries:
    """Boundary table for a block design: one look per block boundary.

    Information fraction at look k is the enrolled fraction k/K. Cached;
    the table is shared read-only across replicates and workers.
    """
    k = config.num_blocks
    fractions = tuple((i + 1) / k for i in range(k))
    return _cached_boundaries(
        fractions,
        config.alpha,
        config.beta_spend,
        config.efficacy_spending,
        config.futility_spending,
    )


def freq_interim_check(z: float, look: int, bounds: GsBoundaries) -> InterimAction:
    """Boundary comparison at a 1-based look; the final look never continues."""
    if not 1 <= look <= bounds.looks:
        raise IndexError(f"look {look} outside schedule of {bounds.looks}")
    idx = look - 1
    if z >= bounds.efficacy_z[idx]:
        return InterimAction.STOP_EFFICACY
    if z <= bounds.futility_z[idx]:
        return InterimAction.STOP_FUTILITY
    if look == bounds.looks:
        # coincident final boundaries force a decision
        return InterimAction.STOP_FUTILITY
    return InterimAction.CONTINUE


def bayes_interim_check(
    p_b_gt_a: float, success_thr: float, futility_thr: float
) -> InterimAction:
    """Posterior-threshold stopping rule."""
    if not futility_thr < success_thr:
        raise ValueError("futility threshold must lie below success threshold")
    if p_b_gt_a > success_thr:
        return InterimAction.STOP_EFFICACY
    if p_b_gt_a < futility_thr:
        return InterimAction.STOP_FUTILITY
    return InterimAction.CONTINUE
