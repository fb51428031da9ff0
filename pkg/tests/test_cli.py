import io
import json

import pytest
import yaml

from rarblock.cli import (
    emit_histogram,
    main,
    read_table,
    run_grid,
    write_table,
)
from rarblock.core import (
    BlockRecord,
    ConfigError,
    Decision,
    TrialRecord,
)
from rarblock.manifest import manifest_from_dict


def write_yaml(path, doc):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)
    return str(path)


BASE = {
    "total_n": 200,
    "replicates": 150,
    "master_seed": 20260810,
    "p_a": 0.25,
    "approach": "frequentist",
}


class TestManifest:
    def test_grid_expansion_and_keys(self):
        m = manifest_from_dict(
            {
                "base": BASE,
                "grid": {"num_blocks": [1, 5], "p_b": [0.25, 0.45]},
            }
        )
        assert len(m.cells) == 4
        ks = sorted((c.num_blocks, model.p_b) for c, model in m.cells)
        assert ks == [(1, 0.25), (1, 0.45), (5, 0.25), (5, 0.45)]

    def test_explicit_cells_merge_base(self):
        m = manifest_from_dict(
            {"base": BASE, "cells": [{"num_blocks": 4, "p_b": 0.35}]}
        )
        config, model = m.cells[0]
        assert config.num_blocks == 4
        assert model.p_b == 0.35
        assert config.master_seed == BASE["master_seed"]

    def test_empty_manifest_rejected(self):
        with pytest.raises(ConfigError):
            manifest_from_dict({"base": BASE})

    def test_duplicate_cells_rejected(self):
        with pytest.raises(ConfigError):
            manifest_from_dict(
                {
                    "base": BASE,
                    "grid": {"num_blocks": [5], "p_b": [0.45]},
                    "cells": [{"num_blocks": 5, "p_b": 0.45}],
                }
            )

    def test_unknown_grid_axis_rejected(self):
        with pytest.raises(ConfigError):
            manifest_from_dict({"base": BASE, "grid": {"alpha": [0.05, 0.1]}})


class TestTables:
    def test_rows_round_trip_exactly(self):
        manifest = manifest_from_dict(
            {"base": BASE, "grid": {"num_blocks": [1, 5], "p_b": [0.45]}}
        )
        rows, failures = run_grid(manifest)
        assert failures == 0
        for fmt in ("csv", "json"):
            buf = io.StringIO()
            write_table(rows, buf, fmt)
            buf.seek(0)
            parsed = read_table(buf, fmt)
            assert parsed == rows

    def test_failed_cell_recorded_not_raised(self):
        manifest = manifest_from_dict(
            {
                "base": dict(BASE, replicates=50),  # below the engine floor
                "grid": {"num_blocks": [1], "p_b": [0.45]},
            }
        )
        rows, failures = run_grid(manifest)
        assert failures == 1
        assert rows[0]["power"] is None
        assert "replicates" in rows[0]["error"]


class TestHistogram:
    def _trial(self, n_a, n_b):
        return TrialRecord(
            blocks=(
                BlockRecord(index=1, pi_a=0.5, n_a=n_a, n_b=n_b, y_a=0, y_b=0),
            ),
            decision=Decision.NOT_SUPERIOR,
            delta_hat=0.0,
        )

    def test_identical_trials_single_bin(self):
        data = emit_histogram([self._trial(40, 60)] * 7, bin_width=2)
        assert data["bins"] == [{"lo": 20, "count": 7}]
        assert data["marker"] == 20

    def test_bins_are_anchored_multiples(self):
        data = emit_histogram(
            [self._trial(52, 48), self._trial(47, 53), self._trial(50, 50)],
            bin_width=4,
        )
        assert [b["lo"] for b in data["bins"]] == [-4, 0, 4]

    def test_zero_bin_width_rejected(self):
        with pytest.raises(ConfigError):
            emit_histogram([self._trial(40, 60)], bin_width=0)

    def test_empty_trials_rejected(self):
        with pytest.raises(ConfigError):
            emit_histogram([], bin_width=2)


class TestCliCommands:
    def test_simulate_writes_parseable_table(self, tmp_path):
        mpath = write_yaml(
            tmp_path / "m.yaml",
            {"base": BASE, "grid": {"num_blocks": [1], "p_b": [0.45]}},
        )
        out = tmp_path / "grid.csv"
        assert main(["simulate", "--config", mpath, "--out", str(out)]) == 0
        with open(out) as fh:
            rows = read_table(fh, "csv")
        assert len(rows) == 1
        assert rows[0]["block_count"] == 1
        assert 0.7 < rows[0]["power"] < 1.0

    def test_simulate_partial_failure_exit_code(self, tmp_path):
        mpath = write_yaml(
            tmp_path / "m.yaml",
            {
                "base": BASE,
                "cells": [
                    {"num_blocks": 1, "p_b": 0.45},
                    {"num_blocks": 1, "p_b": 0.35, "replicates": 10},
                ],
            },
        )
        out = tmp_path / "grid.csv"
        assert main(["simulate", "--config", mpath, "--out", str(out)]) == 2

    def test_invalid_manifest_exit_code(self, tmp_path):
        mpath = write_yaml(tmp_path / "m.yaml", {"base": BASE})
        assert main(["simulate", "--config", mpath]) == 1

    def test_missing_file_exit_code(self):
        assert main(["simulate", "--config", "/nonexistent.yaml"]) == 1

    def test_boundaries_schedule(self, tmp_path, capsys):
        cpath = write_yaml(
            tmp_path / "c.yaml",
            {"num_blocks": 4, "early_stopping": True, "master_seed": 1},
        )
        assert main(["boundaries", "--config", cpath]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "look,t,efficacy_z,futility_z,cumulative_spend"
        assert len(lines) == 5

    def test_replay_deterministic(self, tmp_path, capsys):
        cpath = write_yaml(
            tmp_path / "c.yaml",
            dict(BASE, num_blocks=5, p_b=0.45, replicates=100),
        )
        assert main(["replay", "--config", cpath, "--replicate", "3"]) == 0
        first = capsys.readouterr().out
        assert main(["replay", "--config", cpath, "--replicate", "3"]) == 0
        assert capsys.readouterr().out == first
        assert "# decision:" in first

    def test_replay_scripted_outcomes(self, tmp_path, capsys):
        cpath = write_yaml(
            tmp_path / "c.yaml",
            {"num_blocks": 2, "approach": "bayesian", "master_seed": 42},
        )
        opath = tmp_path / "outcomes.json"
        opath.write_text(json.dumps([[50, 50, 10, 25], [20, 80, 4, 40]]))
        assert main(
            ["replay", "--config", cpath, "--outcomes", str(opath), "--format", "json"]
        ) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["summary"]["decision"] == "superior_b"
        assert doc["blocks"][1]["pi_a"] < 0.5

    def test_histogram_command(self, tmp_path):
        cpath = write_yaml(
            tmp_path / "c.yaml", dict(BASE, num_blocks=1, p_b=0.25)
        )
        out = tmp_path / "h.json"
        assert main(
            [
                "histogram", "--config", cpath, "--replicates", "120",
                "--bin-width", "4", "--out", str(out),
            ]
        ) == 0
        doc = json.loads(out.read_text())
        assert doc["marker"] == 20
        assert sum(b["count"] for b in doc["bins"]) == 120

    def test_seed_override(self, tmp_path, capsys):
        mpath = write_yaml(
            tmp_path / "m.yaml",
            {"base": BASE, "grid": {"num_blocks": [1], "p_b": [0.45]}},
        )
        assert main(["simulate", "--config", mpath, "--seed", "777"]) == 0
        out = capsys.readouterr().out
        row = read_table(io.StringIO(out), "csv")[0]
        assert row["seed"] == 777
