"""Block-based response-adaptive randomization for two-arm binary trials:
simulation engine, frequentist and Bayesian inference, group-sequential
stopping, and a live-trial conduct service.
"""

from .allocation import (
    CumulativeCounts,
    bayes_allocation,
    beta_diff_prob_quadrature,
    clamp_allocation,
    freq_allocation,
    posterior_mean_diff,
    posterior_prob_b_gt_a,
)
from .core import (
    Approach,
    Arm,
    BadRate,
    BadThreshold,
    BlockRecord,
    ConfigError,
    Decision,
    DesignConfig,
    IndivisibleBlocks,
    OperatingCharacteristics,
    OutcomeModel,
    StopReason,
    TrialRecord,
    block_size,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
    validate_config,
)
from .engine import (
    drifted_rate,
    run_monte_carlo,
    run_trial,
    run_trial_scripted,
    simulate_block,
    substream,
)
from .inference import (
    AllStrataUninformative,
    DegenerateTable,
    EmptyArm,
    NonConvergence,
    PosteriorSummary,
    StratumTable,
    bayes_stratified_decision,
    bayes_unstratified_decision,
    cmh_test,
    final_analysis,
    fit_stratified_bayes_glm,
    one_sided_z_test,
    simple_delta,
    stratified_delta,
    stratified_weights,
)
from .stopping import (
    GsBoundaries,
    InterimAction,
    TooManyLooks,
    bayes_interim_check,
    boundaries_for_config,
    compute_boundaries,
    freq_interim_check,
    spending_linear,
    spending_obf,
    spending_pocock,
)

__version__ = "0.1.0"
