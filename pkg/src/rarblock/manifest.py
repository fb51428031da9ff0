"""Run manifests: the grid of simulation cells driven by the CLI."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import yaml

from .core import ConfigError, DesignConfig, OutcomeModel, config_from_dict

_GRID_AXES = ("approach", "num_blocks", "p_b", "drift", "early_stopping")


@dataclass(frozen=True)
class RunManifest:
    cells: tuple[tuple[DesignConfig, OutcomeModel], ...]
    out: str | None = None
    fmt: str = "csv"


def cell_key(config: DesignConfig, model: OutcomeModel):
    return (
        config.approach.value,
        config.num_blocks,
        model.p_b,
        model.drift,
        config.early_stopping,
    )


def manifest_from_dict(doc: dict) -> RunManifest:
    """Expand base + grid axes + explicit cells into validated cells."""
    if not isinstance(doc, dict):
        raise ConfigError("manifest must be a mapping")
    out = doc.get("out")
    fmt = doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    base = dict(doc.get("base") or {})
    cell_docs: list[dict] = []
    grid = doc.get("grid")
    if grid:
        unknown = set(grid) - set(_GRID_AXES)
        if unknown:
            raise ConfigError(f"grid axes limited to {_GRID_AXES}, got {sorted(unknown)}")
        axes = [(k, list(grid[k])) for k in _GRID_AXES if k in grid]
        for combo in itertools.product(*(vals for _, vals in axes)):
            cell = dict(base)
            cell.update({k: v for (k, _), v in zip(axes, combo)})
            cell_docs.append(cell)
    for extra in doc.get("cells") or []:
        cell = dict(base)
        cell.update(extra)
        cell_docs.append(cell)
    if not cell_docs:
        raise ConfigError("manifest contains no cells")

    cells = []
    seen = set()
    for cell in cell_docs:
        config, model = config_from_dict(cell)
        if model is None:
            raise ConfigError("every cell needs outcome rates p_a and p_b")
        key = cell_key(config, model)
        if key in seen:
            raise ConfigError(f"duplicate cell {key}")
        seen.add(key)
        cells.append((config, model))
    return RunManifest(cells=tuple(cells), out=out, fmt=fmt)


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return manifest_from_dict(doc)
