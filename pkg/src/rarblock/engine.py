"""Single-trial simulation and seeded Monte Carlo replication.

Replicate r draws from an independent substream seeded by
(master_seed, r), so results are identical for any worker count and any
execution order. Aggregation writes per-replicate values into arrays
indexed by r before reducing, which keeps float summation order fixed.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .allocation import (
    CumulativeCounts,
    bayes_allocation,
    clamp_allocation,
    freq_allocation,
    posterior_prob_b_gt_a,
)
from .core import (
    Approach,
    BlockRecord,
    Decision,
    DesignConfig,
    OperatingCharacteristics,
    OutcomeModel,
    StopReason,
    TrialRecord,
    block_size,
    validate_config,
)
from .inference import (
    AllStrataUninformative,
    DegenerateTable,
    EmptyArm,
    StratumTable,
    cmh_test,
    final_analysis,
    one_sided_z_test,
)
from .stopping import (
    GsBoundaries,
    InterimAction,
    bayes_interim_check,
    boundaries_for_config,
    freq_interim_check,
)

# entropy tag for the final-analysis stream in scripted/live trials; block
# posteriors use the 1-based block index, which never collides with 0
FINAL_ANALYSIS_STREAM = 0


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Deterministic independent generator for one replicate (or one label)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def drifted_rate(base: float, drift: float, k: int, num_blocks: int) -> float:
    """Success rate in block k under the linear-in-block additive drift."""
    if not 1 <= k <= num_blocks:
        raise ValueError(f"block index {k} outside 1..{num_blocks}")
    return base + drift * (k - 1) / num_blocks


def simulate_block(
    pi_a: float,
    size: int,
    rate_a: float,
    rate_b: float,
    rng: np.random.Generator,
    index: int = 1,
    exact_allocation: bool = False,
) -> BlockRecord:
    """Enroll one block: assign each patient to A with probability pi_a,
    then draw outcomes at the assigned arm's rate.

    The default per-patient coin flip makes the arm split Binomial(size,
    pi_a); exact_allocation instead fixes the split at size*pi_a with a
    randomized remainder.
    """
    if size < 1:
        raise ValueError("block size must be >= 1")
    if exact_allocation:
        raw = pi_a * size
        n_a = int(raw) + (1 if rng.random() < raw - int(raw) else 0)
    else:
        n_a = int(rng.binomial(size, pi_a))
    n_b = size - n_a
    y_a = int(rng.binomial(n_a, rate_a)) if n_a else 0
    y_b = int(rng.binomial(n_b, rate_b)) if n_b else 0
    return BlockRecord(index=index, pi_a=pi_a, n_a=n_a, n_b=n_b, y_a=y_a, y_b=y_b)


def _interim_z(blocks: Sequence[BlockRecord], config: DesignConfig) -> float:
    """Cumulative-data z using the same statistic as the final analysis.

    Degenerate data (zero pooled variance, empty arm, or no informative
    stratum) is mapped to z = 0: an uninformative interim.
    """
    stratified = 1 < config.num_blocks < config.total_n
    try:
        if stratified:
            z, _ = cmh_test(
                [StratumTable(b.n_a, b.n_b, b.y_a, b.y_b) for b in blocks]
            )
        else:
            n_a = sum(b.n_a for b in blocks)
            n_b = sum(b.n_b for b in blocks)
            y_a = sum(b.y_a for b in blocks)
            y_b = sum(b.y_b for b in blocks)
            z, _ = one_sided_z_test(StratumTable(n_a, n_b, y_a, y_b))
    except (AllStrataUninformative, DegenerateTable, EmptyArm):
        return 0.0
    return z


def run_trial(
    config: DesignConfig,
    model: OutcomeModel,
    rng: np.random.Generator,
    boundaries: Optional[GsBoundaries] = None,
) -> TrialRecord:
    """Simulate one trial: allocate, enroll, observe, check, analyze."""
    size = block_size(config)
    k_total = config.num_blocks
    bayes = config.approach is Approach.BAYESIAN
    if (
        not bayes
        and config.early_stopping
        and k_total > 1
        and boundaries is None
    ):
        boundaries = boundaries_for_config(config)

    blocks: list[BlockRecord] = []
    cum = CumulativeCounts()
    post: Optional[float] = None
    stopped: Optional[StopReason] = None
    stop_look: Optional[int] = None

    for k in range(1, k_total + 1):
        if k == 1:
            pi = 0.5
        elif bayes:
            pi = bayes_allocation(post)
        else:
            pi = freq_allocation(cum)
        pi = clamp_allocation(pi, config.allocation_bounds)
        rate_a = drifted_rate(model.p_a, model.drift, k, k_total)
        rate_b = drifted_rate(model.p_b, model.drift, k, k_total)
        block = simulate_block(
            pi, size, rate_a, rate_b, rng,
            index=k, exact_allocation=config.exact_allocation,
        )
        blocks.append(block)
        cum = cum.add(block.n_a, block.n_b, block.y_a, block.y_b)

        if k < k_total:
            if bayes:
                # one posterior evaluation serves both the interim check and
                # the next block's allocation
                post = posterior_prob_b_gt_a(
                    cum,
                    config.prior_a0,
                    config.prior_b0,
                    config.posterior_draws,
                    rng,
                )
            if config.early_stopping:
                if bayes:
                    action = bayes_interim_check(
                        post,
                        config.stop_success_threshold,
                        config.stop_futility_threshold,
                    )
                else:
                    action = freq_interim_check(
                        _interim_z(blocks, config), k, boundaries
                    )
                if action is not InterimAction.CONTINUE:
                    stopped = (
                        StopReason.EFFICACY
                        if action is InterimAction.STOP_EFFICACY
                        else StopReason.FUTILITY
                    )
                    stop_look = k
                    break

    trial = TrialRecord(
        blocks=tuple(blocks),
        decision=Decision.NOT_SUPERIOR,
        delta_hat=0.0,
        stopped_early=stopped,
        stop_look=stop_look,
    )
    decision, delta, flag = final_analysis(trial, config, rng)
    return dataclasses.replace(trial, decision=decision, delta_hat=delta, flag=flag)


def run_trial_scripted(
    config: DesignConfig,
    outcomes: Sequence[tuple[int, int, int, int]],
    boundaries: Optional[GsBoundaries] = None,
) -> TrialRecord:
    """Drive the block loop with observed counts instead of simulation.

    `outcomes[k-1]` is (n_a, n_b, y_a, y_b) for block k. The allocation
    probability the engine would have issued is recorded per block; interim
    stopping applies, so trailing outcomes may go unused. Posterior draws
    for block k come from substream (master_seed, k), the convention shared
    with the conduct service so both produce identical results.
    """
    size = block_size(config)
    k_total = config.num_blocks
    bayes = config.approach is Approach.BAYESIAN
    if (
        not bayes
        and config.early_stopping
        and k_total > 1
        and boundaries is None
    ):
        boundaries = boundaries_for_config(config)
    if len(outcomes) > k_total:
        raise ValueError(f"{len(outcomes)} outcome blocks for a {k_total}-block design")

    blocks: list[BlockRecord] = []
    cum = CumulativeCounts()
    post: Optional[float] = None
    stopped: Optional[StopReason] = None
    stop_look: Optional[int] = None

    for k, (n_a, n_b, y_a, y_b) in enumerate(outcomes, start=1):
        if n_a + n_b != size:
            raise ValueError(f"block {k}: {n_a}+{n_b} subjects != block size {size}")
        if k == 1:
            pi = 0.5
        elif bayes:
            pi = bayes_allocation(post)
        else:
            pi = freq_allocation(cum)
        pi = clamp_allocation(pi, config.allocation_bounds)
        blocks.append(BlockRecord(index=k, pi_a=pi, n_a=n_a, n_b=n_b, y_a=y_a, y_b=y_b))
        cum = cum.add(n_a, n_b, y_a, y_b)

        if k < k_total:
            if bayes:
                post = posterior_prob_b_gt_a(
                    cum,
                    config.prior_a0,
                    config.prior_b0,
                    config.posterior_draws,
                    substream(config.master_seed, k),
                )
            if config.early_stopping:
                if bayes:
                    action = bayes_interim_check(
                        post,
                        config.stop_success_threshold,
                        config.stop_futility_threshold,
                    )
                else:
                    action = freq_interim_check(
                        _interim_z(blocks, config), k, boundaries
                    )
                if action is not InterimAction.CONTINUE:
                    stopped = (
                        StopReason.EFFICACY
                        if action is InterimAction.STOP_EFFICACY
                        else StopReason.FUTILITY
                    )
                    stop_look = k
                    break

    trial = TrialRecord(
        blocks=tuple(blocks),
        decision=Decision.NOT_SUPERIOR,
        delta_hat=0.0,
        stopped_early=stopped,
        stop_look=stop_look,
    )
    decision, delta, flag = final_analysis(
        trial, config, substream(config.master_seed, FINAL_ANALYSIS_STREAM)
    )
    return dataclasses.replace(trial, decision=decision, delta_hat=delta, flag=flag)


# --- Monte Carlo replication ----------------------------------------------


def _replicate_batch(
    config: DesignConfig,
    model: OutcomeModel,
    boundaries: Optional[GsBoundaries],
    indices: Sequence[int],
):
    superior = np.empty(len(indices), dtype=bool)
    delta = np.empty(len(indices))
    n_a = np.empty(len(indices), dtype=np.int64)
    n_b = np.empty(len(indices), dtype=np.int64)
    enrolled = np.empty(len(indices), dtype=np.int64)
    flags = 0
    for i, r in enumerate(indices):
        trial = run_trial(config, model, substream(config.master_seed, r), boundaries)
        superior[i] = trial.decision is Decision.SUPERIOR_B
        delta[i] = trial.delta_hat
        n_a[i] = trial.n_a_total
        n_b[i] = trial.n_b_total
        enrolled[i] = trial.n_enrolled
        flags += trial.flag is not None
    return list(indices), superior, delta, n_a, n_b, enrolled, flags


def nearest_rank_quantile(sorted_values: np.ndarray, p: float) -> float:
    """Inverse-CDF quantile: the value at 1-based rank ceil(p*R)."""
    rank = max(1, math.ceil(p * sorted_values.size))
    return float(sorted_values[rank - 1])


def run_monte_carlo(
    config: DesignConfig,
    model: OutcomeModel,
    workers: int = 1,
) -> OperatingCharacteristics:
    """Replicate the design R times and aggregate operating characteristics.

    Bias is measured against the undrifted true effect p_b - p_a, which the
    drift model keeps constant across blocks.
    """
    validate_config(config, model)
    if config.replicates < 100:
        raise ValueError(f"replicates={config.replicates} must be >= 100")
    reps = config.replicates
    boundaries = None
    if (
        config.approach is Approach.FREQUENTIST
        and config.early_stopping
        and config.num_blocks > 1
    ):
        boundaries = boundaries_for_config(config)

    superior = np.empty(reps, dtype=bool)
    delta = np.empty(reps)
    n_a = np.empty(reps, dtype=np.int64)
    n_b = np.empty(reps, dtype=np.int64)
    enrolled = np.empty(reps, dtype=np.int64)

    if workers <= 1:
        batches = [_replicate_batch(config, model, boundaries, range(reps))]
    else:
        chunks = [list(c) for c in np.array_split(np.arange(reps), workers * 4) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(
                pool.map(
                    _replicate_batch,
                    [config] * len(chunks),
                    [model] * len(chunks),
                    [boundaries] * len(chunks),
                    chunks,
                )
            )
    for indices, sup_c, delta_c, na_c, nb_c, enr_c, _ in batches:
        superior[indices] = sup_c
        delta[indices] = delta_c
        n_a[indices] = na_c
        n_b[indices] = nb_c
        enrolled[indices] = enr_c

    imbalance = np.sort(n_b - n_a)
    return OperatingCharacteristics(
        power=float(np.mean(superior)),
        bias=float(np.mean(delta) - (model.p_b - model.p_a)),
        pi20=float(np.mean((n_a - n_b) > 20)),
        imbalance_mean=float(np.mean(imbalance)),
        imbalance_q025=nearest_rank_quantile(imbalance, 0.025),
        imbalance_q975=nearest_rank_quantile(imbalance, 0.975),
        expected_n=float(np.mean(enrolled)),
        replicates=reps,
    )
