"""Unit tests for the SQLite checkpoint store."""

from __future__ import annotations

import sqlite3
from pathlib import Path

import numpy as np
import pytest

from graphseg.cascade import CascadeModel
from graphseg.exceptions import StorageError
from graphseg.models import ModelConfig
from graphseg.storage import Checkpoint, CheckpointStore, final_checkpoint_path, stage_checkpoint_path


def _manifest(config: ModelConfig) -> dict:
    return {"model": config.to_dict(), "config_hash": config.config_hash(), "seed": 3, "stage": 1}


def test_save_creates_both_tables(tmp_path: Path) -> None:
    store = CheckpointStore(tmp_path / "m.ckpt")
    store.save({"w": np.zeros((2, 2), dtype=np.float32)}, {"seed": 1})

    with sqlite3.connect(tmp_path / "m.ckpt") as conn:
        tables = {row[0] for row in conn.execute("SELECT name FROM sqlite_master WHERE type='table'").fetchall()}
    assert tables == {"parameters", "manifest"}


def test_model_round_trip_is_bit_exact(tmp_path: Path, tiny_model_config: ModelConfig) -> None:
    model = CascadeModel.seeded(tiny_model_config, 4)
    store = CheckpointStore(tmp_path / "nested" / "model.ckpt")
    store.save(model.state_dict(), _manifest(tiny_model_config))

    loaded = store.load()
    assert set(loaded.parameters) == set(model.state_dict())
    for name, value in model.state_dict().items():
        assert loaded.parameters[name].dtype == np.float32
        np.testing.assert_array_equal(loaded.parameters[name], value)


def test_manifest_round_trips_model_config(tmp_path: Path, tiny_model_config: ModelConfig) -> None:
    store = CheckpointStore(tmp_path / "model.ckpt")
    store.save({}, {**_manifest(tiny_model_config), "calibration": [{"threshold": 0.4}]})

    checkpoint = store.load()
    assert checkpoint.model_config == tiny_model_config
    assert checkpoint.config_hash == tiny_model_config.config_hash()
    assert checkpoint.manifest["calibration"] == [{"threshold": 0.4}]


def test_saving_again_replaces_previous_contents(tmp_path: Path) -> None:
    store = CheckpointStore(tmp_path / "m.ckpt")
    store.save({"a": np.ones(3), "b": np.ones(2)}, {"seed": 1})
    store.save({"a": np.full(3, 2.0)}, {"seed": 2})

    checkpoint = store.load()
    assert list(checkpoint.parameters) == ["a"]
    assert checkpoint.parameters["a"].tolist() == [2.0, 2.0, 2.0]
    assert checkpoint.manifest == {"seed": 2}


def test_missing_checkpoint_raises(tmp_path: Path) -> None:
    with pytest.raises(StorageError, match="checkpoint not found"):
        CheckpointStore(tmp_path / "absent.ckpt").load()


def test_corrupted_file_raises_storage_error(tmp_path: Path) -> None:
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"definitely not sqlite" * 20)
    with pytest.raises(StorageError):
        CheckpointStore(path).load()


def test_manifest_without_model_config_raises() -> None:
    with pytest.raises(StorageError, match="model config"):
        Checkpoint(parameters={}, manifest={"seed": 1}).model_config


def test_checkpoint_paths() -> None:
    assert stage_checkpoint_path("runs/a", 2) == Path("runs/a/stage2.ckpt")
    assert final_checkpoint_path("runs/a") == Path("runs/a/model.ckpt")
