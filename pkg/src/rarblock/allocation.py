"""Per-block allocation probabilities for both design approaches.

Everything here is a pure function of explicit inputs (plus an explicitly
passed random generator for the Monte Carlo posterior), so allocation is
safe to evaluate from any number of parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class CumulativeCounts:
    """Running per-arm totals over all completed blocks."""

    n_a: int = 0
    n_b: int = 0
    y_a: int = 0
    y_b: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.y_a <= self.n_a and 0 <= self.y_b <= self.n_b):
            raise ValueError("successes must satisfy 0 <= y <= n per arm")

    def add(self, n_a: int, n_b: int, y_a: int, y_b: int) -> "CumulativeCounts":
        return CumulativeCounts(
            self.n_a + n_a, self.n_b + n_b, self.y_a + y_a, self.y_b + y_b
        )


def update_gate_open(counts: CumulativeCounts) -> bool:
    """True once each arm has observed at least one success and one failure."""
    return (
        0 < counts.y_a < counts.n_a
        and 0 < counts.y_b < counts.n_b
    )


def freq_allocation(counts: CumulativeCounts) -> float:
    """Square-root-of-rates allocation probability for arm A.

    Stays at 0.5 until the update gate opens; afterwards both observed rates
    are strictly inside (0, 1), so the ratio is always well defined.
    """
    if not update_gate_open(counts):
        return 0.5
    ra = math.sqrt(counts.y_a / counts.n_a)
    rb = math.sqrt(counts.y_b / counts.n_b)
    return ra / (ra + rb)


def posterior_prob_b_gt_a(
    counts: CumulativeCounts,
    a0: float = 0.5,
    b0: float = 0.5,
    draws: int = 10_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte Carlo estimate of P(rate_B > rate_A) under beta-binomial updating.

    The difference of two beta variables has no closed form, so the posterior
    probability is estimated from paired draws; `beta_diff_prob_quadrature`
    provides the deterministic reference value for testing.
    """
    if draws < 1000:
        raise ValueError(f"draws={draws} must be >= 1000")
    if rng is None:
        rng = np.random.default_rng()
    da = rng.beta(counts.y_a + a0, counts.n_a - counts.y_a + b0, size=draws)
    db = rng.beta(counts.y_b + a0, counts.n_b - counts.y_b + b0, size=draws)
    return float(np.mean(db > da))


def beta_diff_prob_quadrature(
    a1: float, b1: float, a2: float, b2: float, nodes: int = 512
) -> float:
    """P(X2 > X1) for X1 ~ Beta(a1, b1), X2 ~ Beta(a2, b2), no sampling.

    Fixed-grid Gauss-Legendre evaluation of E[F1(X2)] after the quantile
    substitution x2 = Q2(u), which removes the endpoint singularities that
    beta(0.5, 0.5)-type densities would otherwise put on the integrand.
    """
    u, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (u + 1.0)  # map [-1, 1] -> [0, 1]
    w = 0.5 * w
    x2 = stats.beta.ppf(u, a2, b2)
    return float(np.sum(w * stats.beta.cdf(x2, a1, b1)))


def posterior_mean_diff(
    counts: CumulativeCounts, a0: float = 0.5, b0: float = 0.5
) -> float:
    """Exact posterior mean of rate_B - rate_A (the Monte Carlo limit)."""
    mean_a = (counts.y_a + a0) / (counts.n_a + a0 + b0)
    mean_b = (counts.y_b + a0) / (counts.n_b + a0 + b0)
    return mean_b - mean_a


def bayes_allocation(p_b_gt_a: float) -> float:
    """Allocation probability for arm A from the posterior superiority of B.

    Square-root tempering of the posterior probabilities; the endpoints are
    the continuity limits (all-to-A at p=0, all-to-B at p=1).
    """
    if not 0.0 <= p_b_gt_a <= 1.0:
        raise ValueError(f"p_b_gt_a={p_b_gt_a} outside [0, 1]")
    qa = math.sqrt(1.0 - p_b_gt_a)
    qb = math.sqrt(p_b_gt_a)
    return qa / (qa + qb)


def clamp_allocation(pi: float, bounds: Optional[tuple[float, float]]) -> float:
    """Clip an allocation probability to configured bounds (identity when none)."""
    if bounds is None:
        return pi
    lo, hi = bounds
    return min(hi, max(lo, pi))
