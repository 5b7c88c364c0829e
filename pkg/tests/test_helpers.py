"""Tests for seed derivation, generators and file helpers."""

import json
from enum import Enum
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from hardness_bench.helpers import atomic_write_text, derive_seed, make_rng, read_json, to_jsonable, write_json


class Colour(Enum):
    RED = "red"


class TestSeeds:
    def test_stable_across_calls(self):
        coords = ("blobs", "uniform", "0.1", 0)
        assert derive_seed(0, "model", *coords) == derive_seed(0, "model", *coords)

    def test_distinct_for_stage_and_coordinates(self):
        seeds = {
            derive_seed(0, "model", "a", 1),
            derive_seed(0, "train", "a", 1),
            derive_seed(0, "model", "a", 2),
            derive_seed(1, "model", "a", 1),
        }
        assert len(seeds) == 4

    def test_unsigned_64_bit(self):
        assert 0 <= derive_seed(-5, "x") < 2**64

    def test_named_streams_differ(self):
        first = make_rng(3, "hardness").random(5)
        assert np.array_equal(first, make_rng(3, "hardness").random(5))
        assert not np.array_equal(first, make_rng(3, "labels").random(5))

    def test_philox_generator(self):
        assert isinstance(make_rng(1).bit_generator, np.random.Philox)


class TestJson:
    def test_to_jsonable(self):
        payload = {
            "array": np.arange(3),
            "int": np.int64(4),
            "float": np.float32(0.5),
            "flag": np.bool_(True),
            "enum": Colour.RED,
            "path": Path("a/b"),
            "tuple": (1, (2, 3)),
            5: "key",
        }
        assert to_jsonable(payload) == {
            "array": [0, 1, 2],
            "int": 4,
            "float": 0.5,
            "flag": True,
            "enum": "red",
            "path": "a/b",
            "tuple": [1, [2, 3]],
            "5": "key",
        }

    def test_write_json_sorted(self, tmp_path):
        path = write_json(tmp_path / "nested" / "out.json", {"b": np.arange(2), "a": 1})
        assert path.read_text(encoding="utf-8") == json.dumps({"a": 1, "b": [0, 1]}, indent=2, sort_keys=True) + "\n"
        assert read_json(path) == {"a": 1, "b": [0, 1]}


class TestAtomicWrite:
    def test_replaces_content(self, tmp_path):
        path = tmp_path / "file.txt"
        atomic_write_text(path, "first")
        atomic_write_text(path, "second")
        assert path.read_text(encoding="utf-8") == "second"
        assert [p.name for p in tmp_path.iterdir()] == ["file.txt"]

    def test_failure_keeps_old_file_and_no_temp(self, tmp_path):
        path = tmp_path / "file.txt"
        atomic_write_text(path, "original")
        with patch("hardness_bench.helpers.os.replace", side_effect=OSError("no space")), pytest.raises(OSError):
            atomic_write_text(path, "new")
        assert path.read_text(encoding="utf-8") == "original"
        assert [p.name for p in tmp_path.iterdir()] == ["file.txt"]
