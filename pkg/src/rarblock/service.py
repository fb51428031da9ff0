"""Live-trial conduct service: an event-sourced journal of block submissions
plus an HTTP surface for the dashboard.

Every state mutation is journaled (one JSON record per line, versioned
header) and acknowledged only after the record is durable; replaying the
journal from empty rebuilds byte-identical state. Posterior evaluations are
seeded by (master_seed, block_index), the same convention as the engine's
scripted runs, so a live trial and an engine replay of the same outcomes
agree exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
import uuid
from dataclasses import dataclass
from typing import Optional

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
    ConfigError,
    Decision,
    DesignConfig,
    StopReason,
    TrialRecord,
    block_size,
    config_from_dict,
    config_to_dict,
    validate_config,
)
from .engine import FINAL_ANALYSIS_STREAM, _interim_z, substream
from .inference import final_analysis
from .stopping import (
    InterimAction,
    bayes_interim_check,
    boundaries_for_config,
    freq_interim_check,
)

JOURNAL_HEADER = {"format": "rarblock-journal", "version": 1}

_PI_TOLERANCE = 1e-12


class ServiceError(Exception):
    code = "service_error"
    status = 400


class TrialNotFound(ServiceError):
    code = "trial_not_found"
    status = 404


class TrialExists(ServiceError):
    code = "trial_exists"
    status = 409


class TrialClosed(ServiceError):
    code = "trial_closed"
    status = 409


class WrongBlockIndex(ServiceError):
    code = "wrong_block_index"
    status = 409


class MismatchedAllocation(ServiceError):
    code = "mismatched_allocation"
    status = 409


class CountMismatch(ServiceError):
    code = "count_mismatch"
    status = 400


class Status:
    ENROLLING = "enrolling"
    STOPPED_EFFICACY = "stopped_efficacy"
    STOPPED_FUTILITY = "stopped_futility"
    COMPLETED = "completed"

    TERMINAL = (STOPPED_EFFICACY, STOPPED_FUTILITY, COMPLETED)


@dataclass(frozen=True)
class LiveTrial:
    """Immutable snapshot of one ongoing or finished trial."""

    trial_id: str
    config: DesignConfig
    blocks: tuple[BlockRecord, ...]
    status: str
    next_block_index: Optional[int]
    current_pi_a: Optional[float]
    decision: Optional[Decision]
    delta_hat: Optional[float]
    flag: Optional[str]
    journal_offset: int

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "config": config_to_dict(self.config),
            "blocks": [dataclasses.asdict(b) for b in self.blocks],
            "status": self.status,
            "next_block_index": self.next_block_index,
            "current_pi_a": self.current_pi_a,
            "decision": self.decision.value if self.decision else None,
            "delta_hat": self.delta_hat,
            "flag": self.flag,
            "journal_offset": self.journal_offset,
        }


def _issue_pi(config: DesignConfig, blocks: tuple[BlockRecord, ...]) -> float:
    """Allocation probability for the next block, from committed data only."""
    if not blocks:
        return 0.5
    cum = CumulativeCounts(
        n_a=sum(b.n_a for b in blocks),
        n_b=sum(b.n_b for b in blocks),
        y_a=sum(b.y_a for b in blocks),
        y_b=sum(b.y_b for b in blocks),
    )
    if config.approach is Approach.BAYESIAN:
        post = posterior_prob_b_gt_a(
            cum,
            config.prior_a0,
            config.prior_b0,
            config.posterior_draws,
            substream(config.master_seed, len(blocks)),
        )
        pi = bayes_allocation(post)
    else:
        pi = freq_allocation(cum)
    return clamp_allocation(pi, config.allocation_bounds)


def _finalize(trial: LiveTrial, stopped: Optional[StopReason], offset: int) -> LiveTrial:
    record_like = TrialRecord(
        blocks=trial.blocks,
        decision=Decision.NOT_SUPERIOR,
        delta_hat=0.0,
        stopped_early=stopped,
        stop_look=len(trial.blocks) if stopped else None,
    )
    decision, delta, flag = final_analysis(
        record_like,
        trial.config,
        substream(trial.config.master_seed, FINAL_ANALYSIS_STREAM),
    )
    if stopped is StopReason.EFFICACY:
        status = Status.STOPPED_EFFICACY
    elif stopped is StopReason.FUTILITY:
        status = Status.STOPPED_FUTILITY
    else:
        status = Status.COMPLETED
    return dataclasses.replace(
        trial,
        status=status,
        next_block_index=None,
        current_pi_a=None,
        decision=decision,
        delta_hat=delta,
        flag=flag,
        journal_offset=offset,
    )


def _apply_create(trial_id: str, config: DesignConfig, offset: int) -> LiveTrial:
    return LiveTrial(
        trial_id=trial_id,
        config=config,
        blocks=(),
        status=Status.ENROLLING,
        next_block_index=1,
        current_pi_a=0.5,
        decision=None,
        delta_hat=None,
        flag=None,
        journal_offset=offset,
    )


def _apply_submit(trial: LiveTrial, block: BlockRecord, offset: int) -> LiveTrial:
    config = trial.config
    blocks = trial.blocks + (block,)
    trial = dataclasses.replace(trial, blocks=blocks, journal_offset=offset)
    k, k_total = block.index, config.num_blocks

    if k == k_total:
        return _finalize(trial, None, offset)

    if config.early_stopping:
        if config.approach is Approach.BAYESIAN:
            post = posterior_prob_b_gt_a(
                _cum(blocks),
                config.prior_a0,
                config.prior_b0,
                config.posterior_draws,
                substream(config.master_seed, k),
            )
            action = bayes_interim_check(
                post, config.stop_success_threshold, config.stop_futility_threshold
            )
        else:
            action = freq_interim_check(
                _interim_z(blocks, config), k, boundaries_for_config(config)
            )
        if action is not InterimAction.CONTINUE:
            stopped = (
                StopReason.EFFICACY
                if action is InterimAction.STOP_EFFICACY
                else StopReason.FUTILITY
            )
            return _finalize(trial, stopped, offset)

    return dataclasses.replace(
        trial,
        next_block_index=k + 1,
        current_pi_a=_issue_pi(config, blocks),
        journal_offset=offset,
    )


def _cum(blocks) -> CumulativeCounts:
    return CumulativeCounts(
        n_a=sum(b.n_a for b in blocks),
        n_b=sum(b.n_b for b in blocks),
        y_a=sum(b.y_a for b in blocks),
        y_b=sum(b.y_b for b in blocks),
    )


class TrialStore:
    """Journal-backed collection of live trials.

    Writes are serialized per trial (a global lock guards the journal file
    and the trial map); reads hand out immutable snapshots without locking.
    """

    def __init__(self, journal_path: str):
        self._path = journal_path
        self._lock = threading.Lock()
        self._trials: dict[str, LiveTrial] = {}
        self._events = 0
        if os.path.exists(journal_path) and os.path.getsize(journal_path) > 0:
            self._replay()
        else:
            with open(journal_path, "w") as fh:
                fh.write(json.dumps(JOURNAL_HEADER, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._fh = open(journal_path, "a")

    # -- journal ----------------------------------------------------------

    def _replay(self) -> None:
        with open(self._path) as fh:
            header = json.loads(fh.readline())
            if header.get("format") != JOURNAL_HEADER["format"]:
                raise ConfigError(f"{self._path}: not a trial journal")
            if header.get("version") != JOURNAL_HEADER["version"]:
                raise ConfigError(f"unsupported journal version {header.get('version')}")
            for line in fh:
                if not line.strip():
                    continue
                self._apply_event(json.loads(line))

    def _apply_event(self, event: dict) -> None:
        self._events += 1
        if event["event"] == "create":
            config, _ = config_from_dict(event["config"])
            self._trials[event["trial_id"]] = _apply_create(
                event["trial_id"], config, self._events
            )
        elif event["event"] == "submit":
            trial = self._trials[event["trial_id"]]
            block = BlockRecord(**event["block"])
            self._trials[event["trial_id"]] = _apply_submit(trial, block, self._events)
        else:
            raise ConfigError(f"unknown journal event {event['event']!r}")

    def _journal(self, event: dict) -> None:
        self._fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    # -- operations ---------------------------------------------------------

    def create(self, config_doc: dict, trial_id: Optional[str] = None) -> LiveTrial:
        config, _ = config_from_dict(config_doc)
        validate_config(config)
        with self._lock:
            tid = trial_id or uuid.uuid4().hex
            if tid in self._trials:
                raise TrialExists(f"trial {tid!r} already exists")
            event = {"event": "create", "trial_id": tid, "config": config_to_dict(config)}
            self._journal(event)
            self._apply_event_locked(event)
            return self._trials[tid]

    def submit(self, trial_id: str, payload: dict) -> LiveTrial:
        with self._lock:
            trial = self._trials.get(trial_id)
            if trial is None:
                raise TrialNotFound(f"no trial {trial_id!r}")
            block = self._validate_submission(trial, payload)
            event = {
                "event": "submit",
                "trial_id": trial_id,
                "block": dataclasses.asdict(block),
            }
            self._journal(event)
            self._apply_event_locked(event)
            return self._trials[trial_id]

    def _apply_event_locked(self, event: dict) -> None:
        # caller holds the lock; shares the replay path so live application
        # and journal replay cannot diverge
        self._apply_event(event)

    @staticmethod
    def _validate_submission(trial: LiveTrial, payload: dict) -> BlockRecord:
        if trial.status != Status.ENROLLING:
            raise TrialClosed(f"trial is {trial.status}")
        try:
            index = int(payload["index"])
            pi_a = float(payload["pi_a"])
            n_a, n_b = int(payload["n_a"]), int(payload["n_b"])
            y_a, y_b = int(payload["y_a"]), int(payload["y_b"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CountMismatch(f"malformed block payload: {exc}") from exc
        if index != trial.next_block_index:
            raise WrongBlockIndex(
                f"expected block {trial.next_block_index}, got {index}"
            )
        if abs(pi_a - trial.current_pi_a) > _PI_TOLERANCE:
            raise MismatchedAllocation(
                f"issued pi_a {trial.current_pi_a!r}, submission used {pi_a!r}"
            )
        size = block_size(trial.config)
        if n_a + n_b != size:
            raise CountMismatch(f"{n_a}+{n_b} subjects != block size {size}")
        if not (0 <= y_a <= n_a and 0 <= y_b <= n_b):
            raise CountMismatch("successes must satisfy 0 <= y <= n per arm")
        return BlockRecord(index=index, pi_a=pi_a, n_a=n_a, n_b=n_b, y_a=y_a, y_b=y_b)

    def get(self, trial_id: str) -> LiveTrial:
        trial = self._trials.get(trial_id)
        if trial is None:
            raise TrialNotFound(f"no trial {trial_id!r}")
        return trial

    def list(self) -> list[LiveTrial]:
        return sorted(self._trials.values(), key=lambda t: t.trial_id)

    # -- derived display data ------------------------------------------------

    def snapshot(self, trial_id: str) -> dict:
        """State plus display data, recomputed from committed blocks."""
        trial = self.get(trial_id)
        config = trial.config
        doc = trial.to_dict()
        derived: dict = {
            "block_size": block_size(config),
            "num_blocks": config.num_blocks,
            "pi_history": [b.pi_a for b in trial.blocks],
            "cum_p_a": None,
            "cum_p_b": None,
            "statistic": None,
        }
        if trial.status == Status.ENROLLING and trial.current_pi_a is not None:
            derived["pi_history"] = derived["pi_history"] + [trial.current_pi_a]
        blocks = trial.blocks
        if blocks:
            cum = _cum(blocks)
            if cum.n_a:
                derived["cum_p_a"] = cum.y_a / cum.n_a
            if cum.n_b:
                derived["cum_p_b"] = cum.y_b / cum.n_b
            if config.approach is Approach.BAYESIAN:
                post = posterior_prob_b_gt_a(
                    cum,
                    config.prior_a0,
                    config.prior_b0,
                    config.posterior_draws,
                    substream(config.master_seed, len(blocks)),
                )
                derived["statistic"] = {
                    "type": "posterior_b_gt_a",
                    "value": post,
                    "success_threshold": config.stop_success_threshold,
                    "futility_threshold": config.stop_futility_threshold,
                    "final_threshold": config.final_posterior_threshold,
                }
            else:
                z = _interim_z(blocks, config)
                stat = {"type": "z", "value": z}
                if config.early_stopping and config.num_blocks > 1:
                    bounds = boundaries_for_config(config)
                    look = min(len(blocks), bounds.looks)
                    stat.update(
                        efficacy_z=bounds.efficacy_z[look - 1],
                        futility_z=bounds.futility_z[look - 1],
                        efficacy_distance=bounds.efficacy_z[look - 1] - z,
                        futility_distance=z - bounds.futility_z[look - 1],
                    )
                derived["statistic"] = stat
        doc["derived"] = derived
        return doc


# --- HTTP surface -----------------------------------------------------------


def create_app(journal_path: str):
    """FastAPI application bound to one journal file."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="rarblock conduct service")
    store = TrialStore(journal_path)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.code, "detail": str(exc)}
        )

    @app.exception_handler(ConfigError)
    async def _config_error(_req: Request, exc: ConfigError):
        return JSONResponse(
            status_code=400, content={"error": "invalid_config", "detail": str(exc)}
        )

    @app.post("/trials", status_code=201)
    def create_trial(body: dict):
        config_doc = body.get("config")
        if not isinstance(config_doc, dict):
            raise ConfigError("body must contain a config mapping")
        trial = store.create(config_doc, body.get("trial_id"))
        return store.snapshot(trial.trial_id)

    @app.post("/trials/{trial_id}/blocks")
    def submit_block(trial_id: str, body: dict):
        store.submit(trial_id, body)
        return store.snapshot(trial_id)

    @app.get("/trials/{trial_id}")
    def get_trial(trial_id: str):
        return store.snapshot(trial_id)

    @app.get("/trials")
    def list_trials():
        return [
            {
                "trial_id": t.trial_id,
                "status": t.status,
                "blocks_committed": len(t.blocks),
                "next_block_index": t.next_block_index,
            }
            for t in store.list()
        ]

    return app


def main(argv=None) -> int:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="rarblock-service")
    parser.add_argument("--journal", required=True, help="journal file path")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8400)
    args = parser.parse_args(argv)
    uvicorn.run(create_app(args.journal), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
