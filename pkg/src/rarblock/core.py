"""Domain types, configuration validation, and block-size arithmetic."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import Optional

import yaml


class ConfigError(ValueError):
    """Base class for configuration validation failures."""


class IndivisibleBlocks(ConfigError):
    """total_n is not a multiple of num_blocks."""


class BadThreshold(ConfigError):
    """Decision/stopping thresholds out of range or mis-ordered."""


class BadRate(ConfigError):
    """An outcome probability leaves [0, 1] (possibly after drift)."""


class Arm(str, enum.Enum):
    """The two trial arms; A is the control and comparator in one-sided tests."""

    A = "A"
    B = "B"


class Approach(str, enum.Enum):
    FREQUENTIST = "frequentist"
    BAYESIAN = "bayesian"


class Decision(str, enum.Enum):
    SUPERIOR_B = "superior_b"
    NOT_SUPERIOR = "not_superior"


class StopReason(str, enum.Enum):
    EFFICACY = "efficacy"
    FUTILITY = "futility"


_SPENDING_FAMILIES = ("obf", "pocock", "linear")
_GLM_LINKS = ("identity", "logit")


@dataclass(frozen=True)
class DesignConfig:
    """Complete specification of one block-RAR design.

    All fields are plain values so configs can be shared between parallel
    workers and round-tripped through the YAML config format unchanged.
    """

    num_blocks: int
    approach: Approach = Approach.FREQUENTIST
    total_n: int = 200
    alpha: float = 0.05
    prior_a0: float = 0.5
    prior_b0: float = 0.5
    final_posterior_threshold: float = 0.95
    stop_success_threshold: float = 0.99
    stop_futility_threshold: float = 0.01
    early_stopping: bool = False
    allocation_bounds: Optional[tuple[float, float]] = None
    posterior_draws: int = 10_000
    replicates: int = 10_000
    master_seed: int = 0
    efficacy_spending: str = "obf"
    futility_spending: str = "linear"
    beta_spend: float = 0.05
    exact_allocation: bool = False
    glm_link: str = "identity"
    glm_prior_scale: float = 2.5
    glm_prior_df: float = 1.0


@dataclass(frozen=True)
class OutcomeModel:
    """True success probabilities plus an additive linear-in-block drift."""

    p_a: float
    p_b: float
    drift: float = 0.0

    def __post_init__(self) -> None:
        for name, p in (("p_a", self.p_a), ("p_b", self.p_b)):
            if not 0.0 <= p <= 1.0:
                raise BadRate(f"{name}={p} outside [0, 1]")
        if self.drift < 0.0:
            raise BadRate(f"drift={self.drift} must be >= 0")
        if max(self.p_a, self.p_b) + self.drift > 1.0:
            raise BadRate(
                f"drifted rate {max(self.p_a, self.p_b) + self.drift} exceeds 1"
            )


@dataclass(frozen=True)
class BlockRecord:
    """Allocation probability used for one block and the observed 2x2 counts."""

    index: int
    pi_a: float
    n_a: int
    n_b: int
    y_a: int
    y_b: int

    def __post_init__(self) -> None:
        if not (0 <= self.y_a <= self.n_a and 0 <= self.y_b <= self.n_b):
            raise ValueError(f"block {self.index}: successes exceed counts")
        if not 0.0 <= self.pi_a <= 1.0:
            raise ValueError(f"block {self.index}: pi_a={self.pi_a} outside [0, 1]")


@dataclass(frozen=True)
class TrialRecord:
    """One simulated or conducted trial."""

    blocks: tuple[BlockRecord, ...]
    decision: Decision
    delta_hat: float
    stopped_early: Optional[StopReason] = None
    stop_look: Optional[int] = None
    flag: Optional[str] = None

    @property
    def n_a_total(self) -> int:
        return sum(b.n_a for b in self.blocks)

    @property
    def n_b_total(self) -> int:
        return sum(b.n_b for b in self.blocks)

    @property
    def n_enrolled(self) -> int:
        return self.n_a_total + self.n_b_total


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Aggregate of R simulated replicates."""

    power: float
    bias: float
    pi20: float
    imbalance_mean: float
    imbalance_q025: float
    imbalance_q975: float
    expected_n: float
    replicates: int


def block_size(config: DesignConfig) -> int:
    """Subjects per block; requires an already-validated config."""
    return config.total_n // config.num_blocks


def validate_config(
    config: DesignConfig, model: OutcomeModel | None = None
) -> DesignConfig:
    """Check every DesignConfig invariant, returning the config unchanged.

    The OutcomeModel validates its rates on construction; passing it here is
    a convenience so callers can validate a whole config document at once.
    """
    if config.total_n < 1:
        raise ConfigError(f"total_n={config.total_n} must be positive")
    if not 1 <= config.num_blocks <= config.total_n:
        raise ConfigError(
            f"num_blocks={config.num_blocks} outside [1, total_n={config.total_n}]"
        )
    if config.total_n % config.num_blocks != 0:
        raise IndivisibleBlocks(
            f"total_n={config.total_n} not divisible by num_blocks={config.num_blocks}"
        )
    if not 0.0 < config.alpha < 1.0:
        raise BadThreshold(f"alpha={config.alpha} outside (0, 1)")
    if config.prior_a0 <= 0.0 or config.prior_b0 <= 0.0:
        raise ConfigError("beta prior parameters must be > 0")
    if not (
        config.stop_futility_threshold
        < 0.5
        < config.final_posterior_threshold
        <= config.stop_success_threshold
    ):
        raise BadThreshold(
            "need stop_futility < 0.5 < final_posterior <= stop_success, got "
            f"({config.stop_futility_threshold}, {config.final_posterior_threshold}, "
            f"{config.stop_success_threshold})"
        )
    if config.allocation_bounds is not None:
        lo, hi = config.allocation_bounds
        if not 0.0 <= lo <= 0.5 <= hi <= 1.0:
            raise ConfigError(f"allocation_bounds ({lo}, {hi}) must satisfy 0<=lo<=0.5<=hi<=1")
    if config.posterior_draws < 1000:
        raise ConfigError(f"posterior_draws={config.posterior_draws} must be >= 1000")
    if config.efficacy_spending not in _SPENDING_FAMILIES:
        raise ConfigError(f"unknown efficacy_spending {config.efficacy_spending!r}")
    if config.futility_spending not in _SPENDING_FAMILIES:
        raise ConfigError(f"unknown futility_spending {config.futility_spending!r}")
    if not 0.0 < config.beta_spend < 0.5:
        raise BadThreshold(f"beta_spend={config.beta_spend} outside (0, 0.5)")
    if config.glm_link not in _GLM_LINKS:
        raise ConfigError(f"unknown glm_link {config.glm_link!r}")
    if config.glm_prior_scale <= 0 or config.glm_prior_df <= 0:
        raise ConfigError("glm prior scale and df must be > 0")
    # OutcomeModel rates (incl. drift staying within [0,1]) are enforced by
    # OutcomeModel.__post_init__, so a model argument needs no extra checks.
    return config


# --- external config document (flat YAML key/value) ---------------------

_MODEL_KEYS = ("p_a", "p_b", "drift")


def config_to_dict(config: DesignConfig, model: OutcomeModel | None = None) -> dict:
    doc: dict = {}
    for f in fields(DesignConfig):
        value = getattr(config, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        if f.name == "allocation_bounds" and value is not None:
            value = list(value)
        doc[f.name] = value
    if model is not None:
        doc.update(p_a=model.p_a, p_b=model.p_b, drift=model.drift)
    return doc


def config_from_dict(doc: dict) -> tuple[DesignConfig, Optional[OutcomeModel]]:
    """Parse a flat config mapping into (DesignConfig, OutcomeModel or None)."""
    doc = dict(doc)
    model = None
    if any(k in doc for k in _MODEL_KEYS):
        try:
            model = OutcomeModel(
                p_a=float(doc.pop("p_a")),
                p_b=float(doc.pop("p_b")),
                drift=float(doc.pop("drift", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"outcome model needs p_a and p_b: missing {exc}") from exc
    known = {f.name for f in fields(DesignConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "num_blocks" not in doc:
        raise ConfigError("config needs num_blocks")
    if "approach" in doc:
        try:
            doc["approach"] = Approach(doc["approach"])
        except ValueError as exc:
            raise ConfigError(f"unknown approach {doc['approach']!r}") from exc
    if doc.get("allocation_bounds") is not None:
        lo, hi = doc["allocation_bounds"]
        doc["allocation_bounds"] = (float(lo), float(hi))
    config = DesignConfig(**doc)
    validate_config(config, model)
    return config, model


def save_config(path, config: DesignConfig, model: OutcomeModel | None = None) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config, model), fh, sort_keys=False)


def load_config(path) -> tuple[DesignConfig, Optional[OutcomeModel]]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    return config_from_dict(doc)
