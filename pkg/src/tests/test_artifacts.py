#!/usr/bin/env python3
# Tests for artifact writers, run manifests and output paths
import json
import math

import numpy as np
import pytest

from qsd_forge.manifest import RunManifest, config_hash
from qsd_forge.utils.paths import ensure_dir, output_file, resolve_path
from qsd_forge.utils.tables import provenance_line, write_csv, write_json
from qsd_forge.version import get_version_string


@pytest.mark.unit
class TestWriteCsv:
    """CSV tables with a provenance line."""

    def test_layout(self, temp_dir):
        path = write_csv(
            temp_dir / "t.csv",
            {"k": np.arange(3, dtype=np.int64), "value": np.array([0.1, 1.0 / 3.0, 2.5])},
            "abc123",
            seed=9,
        )
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == provenance_line("abc123", 9)
        assert lines[1] == "k,value"
        assert lines[2].split(",")[0] == "0"
        assert float(lines[3].split(",")[1]) == 1.0 / 3.0

    def test_float_round_trip_is_exact(self, temp_dir):
        values = np.random.default_rng(3).standard_normal(50) * 1e-7
        path = write_csv(temp_dir / "t.csv", {"v": values}, "h")
        back = np.loadtxt(path, skiprows=2)
        np.testing.assert_array_equal(back, values)

    def test_unequal_columns(self, temp_dir):
        with pytest.raises(ValueError, match="unequal"):
            write_csv(temp_dir / "t.csv", {"a": [1.0, 2.0], "b": [1.0]}, "h")

    def test_provenance_without_seed(self):
        line = provenance_line("h", None)
        assert line == f"# qsd_forge {get_version_string()} config_hash=h seed=none"


@pytest.mark.unit
class TestWriteJson:
    """JSON reports."""

    def test_non_finite_values(self, temp_dir):
        path = write_json(
            temp_dir / "r.json",
            {"mass": math.inf, "se": math.nan, "grid": np.array([1.0, 2.0]), "n": np.int64(4)},
            "h",
            seed=1,
        )
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload["mass"] == "inf"
        assert payload["se"] is None
        assert payload["grid"] == [1.0, 2.0]
        assert payload["n"] == 4
        assert payload["provenance"].endswith("config_hash=h seed=1")

    def test_equal_payloads_give_equal_files(self, temp_dir):
        first = write_json(temp_dir / "a.json", {"b": 1, "a": 2}, "h")
        second = write_json(temp_dir / "b.json", {"a": 2, "b": 1}, "h")
        assert first.read_bytes() == second.read_bytes()


@pytest.mark.unit
class TestManifest:
    """Config hashes and manifest files."""

    def test_hash_depends_on_text_and_settings(self):
        base = config_hash("p0 = 1", {"rtol": 1e-10})
        assert len(base) == 16
        assert base == config_hash("p0 = 1", {"rtol": 1e-10})
        assert base != config_hash("p0 = 0", {"rtol": 1e-10})
        assert base != config_hash("p0 = 1", {"rtol": 1e-9})

    def test_hash_ignores_key_order(self):
        assert config_hash("x", {"a": 1, "b": 2}) == config_hash("x", {"b": 2, "a": 1})

    def test_finish_writes_the_manifest(self, temp_dir):
        manifest = RunManifest("0123456789abcdef", "eigen", master_seed=5)
        manifest.record(temp_dir / "phi.csv")
        manifest.record(temp_dir / "phi.csv")
        path = manifest.finish(temp_dir, exit_code=3)
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert path.name == "manifest.json"
        assert payload["outputs"] == ["phi.csv"]
        assert payload["exit_code"] == 3
        assert payload["tool_version"] == get_version_string()
        assert payload["finished"] is not None


@pytest.mark.unit
class TestPaths:
    """Output directory helpers."""

    def test_relative_paths_resolve_against_a_base(self, temp_dir):
        assert resolve_path("out", temp_dir) == (temp_dir / "out").resolve()
        assert resolve_path(temp_dir) == temp_dir

    def test_directories_are_created(self, temp_dir):
        target = ensure_dir(temp_dir / "a" / "b")
        assert target.is_dir()
        assert output_file(temp_dir / "c", "x.csv").parent.is_dir()
