"""Final-analysis machinery: frequentist tests, estimators, Bayesian decisions.

The one-sided chi-square is realized as the signed two-proportion z statistic
(z**2 is the Pearson statistic without continuity correction); the CMH
statistic uses the hypergeometric (n-1) variance. The stratified Bayesian
model is a risk-difference regression with mean mu = X @ beta, binomial-type
variance mu*(1-mu), and independent Student-t priors on every coefficient,
fit by damped Newton to the posterior mode plus a Laplace approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .allocation import (
    CumulativeCounts,
    posterior_mean_diff,
    posterior_prob_b_gt_a,
)
from .core import Approach, Decision, DesignConfig, StopReason, TrialRecord


class DegenerateTable(ValueError):
    """Pooled success rate is 0 or 1: the z test has zero variance."""


class AllStrataUninformative(ValueError):
    """Every stratum was excluded from a stratified analysis."""


class EmptyArm(ValueError):
    """A 2x2 table has an arm with no subjects."""


class NonConvergence(RuntimeError):
    """The GLM Newton iteration failed to find the posterior mode."""


@dataclass(frozen=True)
class StratumTable:
    """2x2 outcome counts for one stratum."""

    n_a: int
    n_b: int
    y_a: int
    y_b: int

    def __post_init__(self) -> None:
        if not (0 <= self.y_a <= self.n_a and 0 <= self.y_b <= self.n_b):
            raise ValueError("successes must satisfy 0 <= y <= n per arm")


@dataclass(frozen=True)
class PosteriorSummary:
    """Laplace summary of the treatment coefficient."""

    mean_beta_trt: float
    sd_beta_trt: float
    prob_positive: float


def one_sided_z_test(table: StratumTable) -> tuple[float, float]:
    """Signed two-proportion z statistic and its upper-tail p-value (B > A)."""
    if table.n_a < 1 or table.n_b < 1:
        raise EmptyArm("both arms need at least one subject")
    n = table.n_a + table.n_b
    pbar = (table.y_a + table.y_b) / n
    if pbar <= 0.0 or pbar >= 1.0:
        raise DegenerateTable(f"pooled rate {pbar} gives zero variance")
    diff = table.y_b / table.n_b - table.y_a / table.n_a
    se = math.sqrt(pbar * (1.0 - pbar) * (1.0 / table.n_a + 1.0 / table.n_b))
    z = diff / se
    return z, float(stats.norm.sf(z))


def _stratum_arrays(strata: Sequence[StratumTable]):
    n_a = np.array([s.n_a for s in strata], dtype=float)
    n_b = np.array([s.n_b for s in strata], dtype=float)
    y_a = np.array([s.y_a for s in strata], dtype=float)
    y_b = np.array([s.y_b for s in strata], dtype=float)
    return n_a, n_b, y_a, y_b


def cmh_test(strata: Sequence[StratumTable]) -> tuple[float, float]:
    """One-sided CMH z statistic over 2x2 strata, without continuity correction.

    Strata that cannot contribute information (an empty arm, fewer than two
    subjects, or all-success/all-failure totals) are dropped from both the
    numerator and the variance.
    """
    if not strata:
        raise AllStrataUninformative("no strata supplied")
    n_a, n_b, y_a, y_b = _stratum_arrays(strata)
    n = n_a + n_b
    m1 = y_a + y_b
    m0 = n - m1
    keep = (n_a >= 1) & (n_b >= 1) & (n >= 2) & (m1 > 0) & (m1 < n)
    if not keep.any():
        raise AllStrataUninformative("every stratum excluded from the CMH sums")
    n_a, n_b, y_b, n, m1, m0 = (
        arr[keep] for arr in (n_a, n_b, y_b, n, m1, m0)
    )
    num = float(np.sum(y_b - n_b * m1 / n))
    var = float(np.sum(n_a * n_b * m1 * m0 / (n * n * (n - 1.0))))
    z = num / math.sqrt(var)
    return z, float(stats.norm.sf(z))


def stratified_weights(strata: Sequence[StratumTable]) -> np.ndarray:
    """Normalized harmonic weights; zero for strata missing an arm."""
    n_a, n_b, _, _ = _stratum_arrays(strata)
    keep = (n_a >= 1) & (n_b >= 1)
    if not keep.any():
        raise AllStrataUninformative("no stratum has both arms populated")
    w = np.zeros(len(strata))
    w[keep] = 1.0 / (1.0 / n_a[keep] + 1.0 / n_b[keep])
    return w / w.sum()


def stratified_delta(strata: Sequence[StratumTable]) -> float:
    """Harmonic-weighted risk-difference estimate across strata.

    Only strata with both arms populated carry weight; the included weights
    sum to one.
    """
    w = stratified_weights(strata)
    n_a, n_b, y_a, y_b = _stratum_arrays(strata)
    keep = w > 0.0
    diffs = np.zeros(len(strata))
    diffs[keep] = y_b[keep] / n_b[keep] - y_a[keep] / n_a[keep]
    return float(np.sum(w * diffs))


def simple_delta(table: StratumTable) -> float:
    """Unstratified risk difference p_hat_B - p_hat_A."""
    if table.n_a < 1 or table.n_b < 1:
        raise EmptyArm("both arms need at least one subject")
    return table.y_b / table.n_b - table.y_a / table.n_a


def bayes_unstratified_decision(p_b_gt_a: float, threshold: float) -> Decision:
    """Declare B superior iff the posterior probability strictly exceeds the bar."""
    return Decision.SUPERIOR_B if p_b_gt_a > threshold else Decision.NOT_SUPERIOR


def bayes_stratified_decision(summary: PosteriorSummary, threshold: float) -> Decision:
    return (
        Decision.SUPERIOR_B
        if summary.prob_positive > threshold
        else Decision.NOT_SUPERIOR
    )


# --- stratified Bayesian regression --------------------------------------

_MU_CLIP = 1e-6
_MAX_NEWTON = 200


def _t_prior_logpdf_grad_hess(beta: np.ndarray, df: float, scale: float):
    ss = df * scale * scale
    quad = ss + beta * beta
    logp = -0.5 * (df + 1.0) * np.log1p(beta * beta / ss)
    grad = -(df + 1.0) * beta / quad
    hess = -(df + 1.0) * (ss - beta * beta) / (quad * quad)
    return logp.sum(), grad, hess


def _glm_cells(strata: Sequence[StratumTable]):
    """Aggregate (stratum, arm) cells and the design matrix with reference coding."""
    used = [i for i, s in enumerate(strata) if s.n_a + s.n_b > 0]
    if not used:
        raise AllStrataUninformative("no subjects in any stratum")
    rows, n, y = [], [], []
    p = 2 + max(len(used) - 1, 0)
    for j, i in enumerate(used):
        s = strata[i]
        for arm, (cn, cy) in enumerate(((s.n_a, s.y_a), (s.n_b, s.y_b))):
            if cn == 0:
                continue
            row = np.zeros(p)
            row[0] = 1.0
            row[1] = float(arm)
            if j >= 1:
                row[1 + j] = 1.0
            rows.append(row)
            n.append(float(cn))
            y.append(float(cy))
    return np.array(rows), np.array(n), np.array(y)


def _loglik_identity(eta, n, y, curvature=False):
    # cells whose linear predictor leaves the clip window sit on a flat
    # piece of the clipped objective: constant likelihood, zero derivative.
    # For the Laplace step the smooth-branch second derivative at the
    # clipped mean is kept instead (the posterior kernel's curvature on the
    # support side of the kink).
    mu = np.clip(eta, _MU_CLIP, 1.0 - _MU_CLIP)
    inside = (eta > _MU_CLIP) & (eta < 1.0 - _MU_CLIP)
    ll = float(np.sum(y * np.log(mu) + (n - y) * np.log1p(-mu)))
    g = np.where(inside, y / mu - (n - y) / (1.0 - mu), 0.0)
    h = -(y / mu**2 + (n - y) / (1.0 - mu) ** 2)
    if not curvature:
        h = np.where(inside, h, 0.0)
    return ll, g, h


def _loglik_logit(eta, n, y, curvature=False):
    mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -35.0, 35.0)))
    mu = np.clip(mu, _MU_CLIP, 1.0 - _MU_CLIP)
    ll = float(np.sum(y * np.log(mu) + (n - y) * np.log1p(-mu)))
    g = y - n * mu
    h = -n * mu * (1.0 - mu)
    return ll, g, h


def fit_stratified_bayes_glm(
    strata: Sequence[StratumTable],
    prior_scale: float = 2.5,
    prior_df: float = 1.0,
    link: str = "identity",
) -> PosteriorSummary:
    """Posterior mode and Laplace summary for the treatment coefficient.

    Model: mu(arm, stratum) = b0 + b_trt*[arm == B] + b_j*[stratum == j]
    (reference coding drops the first stratum), binomial counts per cell,
    independent t(prior_df, prior_scale) priors on every coefficient.
    Under the default identity link b_trt is directly the risk difference;
    the logit variant is a sensitivity switch where b_trt is a log-odds.

    Raises NonConvergence if damped Newton cannot locate the mode within
    200 iterations.
    """
    informative = sum(1 for s in strata if s.n_a >= 1 and s.n_b >= 1)
    if informative < 2:
        raise AllStrataUninformative(
            "stratified regression needs >= 2 strata with both arms populated"
        )
    X, n, y = _glm_cells(strata)
    loglik = _loglik_identity if link == "identity" else _loglik_logit
    p = X.shape[1]
    beta = np.zeros(p)
    pooled = float(np.clip(y.sum() / n.sum(), 0.05, 0.95))
    beta[0] = pooled if link == "identity" else math.log(pooled / (1.0 - pooled))

    def objective(b):
        ll, g_eta, h_eta = loglik(X @ b, n, y)
        lp, g_pri, h_pri = _t_prior_logpdf_grad_hess(b, prior_df, prior_scale)
        grad = X.T @ g_eta + g_pri
        hess = X.T @ (h_eta[:, None] * X) + np.diag(h_pri)
        return ll + lp, grad, hess

    f, grad, hess = objective(beta)
    converged = False
    for _ in range(_MAX_NEWTON):
        if np.max(np.abs(grad)) < 1e-8:
            converged = True
            break
        # Newton direction with Levenberg escalation; the t-prior tails and
        # the clip kinks can make the raw Hessian indefinite
        step = None
        for lam in (0.0, 1e-6, 1e-3, 1e-1, 10.0, 1e3):
            try:
                cand = np.linalg.solve(-hess + lam * np.eye(p), grad)
            except np.linalg.LinAlgError:
                continue
            if grad @ cand > 0.0:
                step = cand
                break
        if step is None:
            step = grad
        scale = 1.0
        improved = False
        for _ in range(50):
            f_new, g_new, h_new = objective(beta + scale * step)
            if f_new > f:
                beta = beta + scale * step
                improved = f_new - f > 1e-11
                f, grad, hess = f_new, g_new, h_new
                break
            scale *= 0.5
        if not improved:
            # no direction improves the objective measurably: either a
            # smooth optimum (small gradient) or a clip-kink optimum where
            # the one-sided derivatives disagree; both are the MAP of the
            # clipped posterior
            converged = True
            break
    if not converged:
        raise NonConvergence(
            f"no stationary point after {_MAX_NEWTON} Newton iterations "
            f"(gradient norm {np.max(np.abs(grad)):.3g})"
        )

    _, _, h_curv = loglik(X @ beta, n, y, curvature=True)
    _, _, h_pri = _t_prior_logpdf_grad_hess(beta, prior_df, prior_scale)
    precision = -(X.T @ (h_curv[:, None] * X) + np.diag(h_pri))
    try:
        cov = np.linalg.inv(precision)
        var_trt = cov[1, 1]
    except np.linalg.LinAlgError:
        var_trt = -1.0
    if var_trt <= 0.0:
        # curvature degenerate at the mode: retry with a tiny ridge
        cov = np.linalg.inv(precision + 1e-8 * np.eye(p))
        var_trt = cov[1, 1]
        if var_trt <= 0.0:
            raise NonConvergence("non-positive curvature at the mode")
    mode = float(beta[1])
    sd = math.sqrt(var_trt)
    return PosteriorSummary(
        mean_beta_trt=mode,
        sd_beta_trt=sd,
        prob_positive=float(stats.norm.cdf(mode / sd)),
    )


# --- final analysis routing ----------------------------------------------


def _pooled_table(trial: TrialRecord) -> StratumTable:
    return StratumTable(
        n_a=trial.n_a_total,
        n_b=trial.n_b_total,
        y_a=sum(b.y_a for b in trial.blocks),
        y_b=sum(b.y_b for b in trial.blocks),
    )


def _strata(trial: TrialRecord) -> list[StratumTable]:
    return [
        StratumTable(n_a=b.n_a, n_b=b.n_b, y_a=b.y_a, y_b=b.y_b)
        for b in trial.blocks
    ]


def _freq_final(trial: TrialRecord, config: DesignConfig):
    stratify = 1 < config.num_blocks < config.total_n
    if stratify:
        try:
            z, p = cmh_test(_strata(trial))
            decision = (
                Decision.SUPERIOR_B if p < config.alpha else Decision.NOT_SUPERIOR
            )
            flag = None
        except AllStrataUninformative:
            decision, flag = Decision.NOT_SUPERIOR, "uninformative"
        try:
            delta = stratified_delta(_strata(trial))
        except AllStrataUninformative:
            delta = 0.0
        return decision, delta, flag
    # Unstratified path: directional chi-square at level alpha, i.e. the
    # Pearson statistic without correction exceeds its critical value and
    # the difference points toward B (equivalently z > z_{1-alpha/2}).
    pooled = _pooled_table(trial)
    try:
        z, _ = one_sided_z_test(pooled)
        crit = float(stats.norm.ppf(1.0 - config.alpha / 2.0))
        decision = Decision.SUPERIOR_B if z > crit else Decision.NOT_SUPERIOR
        flag = None
    except DegenerateTable:
        decision, flag = Decision.NOT_SUPERIOR, "uninformative"
    try:
        delta = simple_delta(pooled)
    except EmptyArm:
        delta = 0.0
    return decision, delta, flag


def _bayes_unstratified(trial, config, rng, need_decision):
    pooled = _pooled_table(trial)
    counts = CumulativeCounts(pooled.n_a, pooled.n_b, pooled.y_a, pooled.y_b)
    decision = Decision.NOT_SUPERIOR
    if need_decision:
        p = posterior_prob_b_gt_a(
            counts, config.prior_a0, config.prior_b0, config.posterior_draws, rng
        )
        decision = bayes_unstratified_decision(p, config.final_posterior_threshold)
    delta = posterior_mean_diff(counts, config.prior_a0, config.prior_b0)
    return decision, delta, None


def _bayes_final(trial: TrialRecord, config: DesignConfig, rng, need_decision):
    stratify = 1 < config.num_blocks < config.total_n
    if stratify:
        strata = _strata(trial)
        informative = sum(1 for s in strata if s.n_a >= 1 and s.n_b >= 1)
        if informative >= 2:
            try:
                summary = fit_stratified_bayes_glm(
                    strata,
                    prior_scale=config.glm_prior_scale,
                    prior_df=config.glm_prior_df,
                    link=config.glm_link,
                )
            except NonConvergence:
                return Decision.NOT_SUPERIOR, 0.0, "glm_nonconvergence"
            decision = bayes_stratified_decision(
                summary, config.final_posterior_threshold
            )
            if config.glm_link == "identity":
                delta = summary.mean_beta_trt
            else:
                # log-odds coefficient is not a risk difference
                try:
                    delta = stratified_delta(strata)
                except AllStrataUninformative:
                    delta = 0.0
            return decision, delta, None
    return _bayes_unstratified(trial, config, rng, need_decision)


def final_analysis(
    trial: TrialRecord,
    config: DesignConfig,
    rng: np.random.Generator | None = None,
) -> tuple[Decision, float, Optional[str]]:
    """Decision and risk-difference estimate for a completed or stopped trial.

    K = 1 and K = total_n route to the unstratified analysis; everything in
    between stratifies on blocks. Early-stopped trials keep the decision
    implied by the stop signal, with the estimate computed from the accrued
    blocks. Returns (decision, delta_hat, flag); the flag records degenerate
    analyses instead of raising so Monte Carlo replicates never crash.
    """
    need_decision = trial.stopped_early is None
    if config.approach is Approach.FREQUENTIST:
        decision, delta, flag = _freq_final(trial, config)
    else:
        decision, delta, flag = _bayes_final(trial, config, rng, need_decision)
    if not need_decision:
        decision = (
            Decision.SUPERIOR_B
            if trial.stopped_early is StopReason.EFFICACY
            else Decision.NOT_SUPERIOR
        )
    return decision, delta, flag
