"""Batch front door: simulate grids, print stopping schedules, replay single
trials, and emit histogram data for external plotting."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional, Sequence

from . import engine
from .core import (
    Approach,
    ConfigError,
    DesignConfig,
    OutcomeModel,
    TrialRecord,
    load_config,
    validate_config,
)
from .manifest import RunManifest, load_manifest
from .stopping import boundaries_for_config

TABLE_COLUMNS = (
    "approach",
    "p_b",
    "block_count",
    "power",
    "bias",
    "pi20",
    "imb_mean",
    "imb_q025",
    "imb_q975",
    "expected_n",
    "replicates",
    "seed",
    "drift",
    "early_stopping",
    "error",
)

PI20_MARKER = 20  # reference line carried with histogram data


def run_grid(
    manifest: RunManifest,
    workers: int = 1,
    seed_override: Optional[int] = None,
) -> tuple[list[dict], int]:
    """One operating-characteristics row per manifest cell.

    Cell failures land in the row's error column without aborting the rest;
    the second return value is the count of failed cells.
    """
    rows: list[dict] = []
    failures = 0
    for config, model in manifest.cells:
        if seed_override is not None:
            config = dataclasses.replace(config, master_seed=seed_override)
        row = {
            "approach": config.approach.value,
            "p_b": model.p_b,
            "block_count": config.num_blocks,
            "replicates": config.replicates,
            "seed": config.master_seed,
            "drift": model.drift,
            "early_stopping": config.early_stopping,
            "error": None,
        }
        try:
            oc = engine.run_monte_carlo(config, model, workers=workers)
            row.update(
                power=oc.power,
                bias=oc.bias,
                pi20=oc.pi20,
                imb_mean=oc.imbalance_mean,
                imb_q025=oc.imbalance_q025,
                imb_q975=oc.imbalance_q975,
                expected_n=oc.expected_n,
            )
        except Exception as exc:  # recorded, not raised: other cells continue
            failures += 1
            row["error"] = f"{type(exc).__name__}: {exc}"
            row.update(
                power=None, bias=None, pi20=None, imb_mean=None,
                imb_q025=None, imb_q975=None, expected_n=None,
            )
        rows.append({k: row[k] for k in TABLE_COLUMNS})
    return rows, failures


def emit_histogram(trials: Sequence[TrialRecord], bin_width: int) -> dict:
    """Integer-binned counts of n_b_total - n_a_total across trials."""
    if bin_width < 1:
        raise ConfigError(f"bin_width={bin_width} must be a positive integer")
    if not trials:
        raise ConfigError("histogram needs at least one trial")
    counts: dict[int, int] = {}
    for t in trials:
        lo = (t.n_b_total - t.n_a_total) // bin_width * bin_width
        counts[lo] = counts.get(lo, 0) + 1
    bins = [{"lo": lo, "count": counts[lo]} for lo in sorted(counts)]
    return {"bin_width": bin_width, "marker": PI20_MARKER, "bins": bins}


# --- table serialization ----------------------------------------------------


def _cell_str(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def write_table(rows: list[dict], fh, fmt: str) -> None:
    if fmt == "json":
        json.dump(rows, fh, indent=2)
        fh.write("\n")
        return
    columns = list(rows[0]) if rows else list(TABLE_COLUMNS)
    fh.write(",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(_cell_str(row[c]) for c in columns) + "\n")


def _parse_cell(text: str):
    if text == "":
        return None
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    if text in ("true", "false"):
        return text == "true"
    return text


def read_table(fh, fmt: str) -> list[dict]:
    """Parse a table emitted by write_table; numerics round-trip exactly."""
    if fmt == "json":
        return json.load(fh)
    lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    columns = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row = {c: _parse_cell(v) for c, v in zip(columns, cells)}
        # error messages may be plain strings; power=None marks failures
        out.append(row)
    return out


# --- subcommands -------------------------------------------------------------


def _open_out(path: Optional[str]):
    return open(path, "w") if path else sys.stdout


def _cmd_simulate(args) -> int:
    manifest = load_manifest(args.config)
    rows, failures = run_grid(manifest, workers=args.workers, seed_override=args.seed)
    fmt = args.format or manifest.fmt
    out = args.out or manifest.out
    fh = _open_out(out)
    try:
        write_table(rows, fh, fmt)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 2 if failures else 0


def _load_design(args) -> tuple[DesignConfig, Optional[OutcomeModel]]:
    config, model = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    validate_config(config, model)
    return config, model


def _cmd_boundaries(args) -> int:
    config, _ = _load_design(args)
    bounds = boundaries_for_config(config)
    rows = [
        {
            "look": i + 1,
            "t": bounds.info_fractions[i],
            "efficacy_z": bounds.efficacy_z[i],
            "futility_z": bounds.futility_z[i],
            "cumulative_spend": bounds.cum_alpha_spend[i],
        }
        for i in range(bounds.looks)
    ]
    fh = _open_out(args.out)
    try:
        write_table(rows, fh, args.format or "csv")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _load_outcomes(path) -> list[tuple[int, int, int, int]]:
    with open(path) as fh:
        doc = json.load(fh)
    return [tuple(int(v) for v in block) for block in doc]


def _trace_rows(trial: TrialRecord, config: DesignConfig) -> list[dict]:
    rows = []
    cn_a = cn_b = cy_a = cy_b = 0
    for b in trial.blocks:
        cn_a += b.n_a
        cn_b += b.n_b
        cy_a += b.y_a
        cy_b += b.y_b
        prefix = [x for x in trial.blocks if x.index <= b.index]
        rows.append(
            {
                "block": b.index,
                "pi_a": b.pi_a,
                "n_a": b.n_a,
                "y_a": b.y_a,
                "n_b": b.n_b,
                "y_b": b.y_b,
                "cum_p_a": (cy_a / cn_a) if cn_a else None,
                "cum_p_b": (cy_b / cn_b) if cn_b else None,
                "cum_z": (
                    engine._interim_z(prefix, config)
                    if config.approach is Approach.FREQUENTIST
                    else None
                ),
            }
        )
    return rows


def _cmd_replay(args) -> int:
    config, model = _load_design(args)
    if args.outcomes:
        trial = engine.run_trial_scripted(config, _load_outcomes(args.outcomes))
    else:
        if model is None:
            raise ConfigError("replay without --outcomes needs p_a/p_b in the config")
        rng = engine.substream(config.master_seed, args.replicate)
        trial = engine.run_trial(config, model, rng)
    summary = {
        "decision": trial.decision.value,
        "delta_hat": trial.delta_hat,
        "stopped_early": trial.stopped_early.value if trial.stopped_early else None,
        "stop_look": trial.stop_look,
        "n_a_total": trial.n_a_total,
        "n_b_total": trial.n_b_total,
        "n_enrolled": trial.n_enrolled,
        "flag": trial.flag,
    }
    fh = _open_out(args.out)
    try:
        if (args.format or "text") == "json":
            json.dump({"summary": summary, "blocks": _trace_rows(trial, config)}, fh, indent=2)
            fh.write("\n")
        else:
            write_table(_trace_rows(trial, config), fh, "csv")
            for key, value in summary.items():
                fh.write(f"# {key}: {_cell_str(value)}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _cmd_histogram(args) -> int:
    config, model = _load_design(args)
    if model is None:
        raise ConfigError("histogram needs p_a/p_b in the config")
    if args.replicates:
        config = dataclasses.replace(config, replicates=args.replicates)
    trials = [
        engine.run_trial(config, model, engine.substream(config.master_seed, r))
        for r in range(config.replicates)
    ]
    data = emit_histogram(trials, args.bin_width)
    fh = _open_out(args.out)
    try:
        if (args.format or "json") == "json":
            json.dump(data, fh, indent=2)
            fh.write("\n")
        else:
            rows = [
                {"bin_lo": b["lo"], "count": b["count"], "marker": data["marker"]}
                for b in data["bins"]
            ]
            write_table(rows, fh, "csv")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rarblock",
        description="Block-based response-adaptive randomization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_choices=("csv", "json")):
        p.add_argument("--config", required=True, help="YAML config/manifest path")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=fmt_choices, help="output format")
        p.add_argument("--seed", type=int, help="override master_seed")

    sim = sub.add_parser("simulate", help="run a manifest grid of cells")
    common(sim)
    sim.add_argument(
        "--workers",
        type=int,
        default=max(1, os.cpu_count() or 1),
        help="worker processes (results are independent of this setting)",
    )
    sim.set_defaults(fn=_cmd_simulate)

    bnd = sub.add_parser("boundaries", help="print the stopping schedule")
    common(bnd)
    bnd.set_defaults(fn=_cmd_boundaries)

    rep = sub.add_parser("replay", help="trace one trial block by block")
    common(rep, fmt_choices=("text", "json"))
    rep.add_argument("--replicate", type=int, default=0, help="replicate index to replay")
    rep.add_argument("--outcomes", help="JSON file of scripted [n_a,n_b,y_a,y_b] blocks")
    rep.set_defaults(fn=_cmd_replay)

    hist = sub.add_parser("histogram", help="binned counts of n_b - n_a")
    common(hist)
    hist.add_argument("--bin-width", type=int, default=2)
    hist.add_argument("--replicates", type=int, help="override config replicates")
    hist.set_defaults(fn=_cmd_histogram)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
