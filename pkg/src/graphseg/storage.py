"""SQLite-backed checkpoint container for graphseg.

One file per checkpoint with two tables: ``parameters`` holds one row per
named tensor (shape as JSON, payload as little-endian float32 bytes) and
``manifest`` holds JSON key/value pairs (model config, config hash, step
count, seed, calibration). Saving overwrites the file atomically from the
reader's point of view: rows are written in a single transaction.
"""

from __future__ import annotations

import json
import sqlite3
from contextlib import closing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .exceptions import StorageError
from .models import ModelConfig

_PAYLOAD_DTYPE = np.dtype("<f4")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS parameters (
    name    TEXT PRIMARY KEY,
    shape   TEXT NOT NULL,
    payload BLOB NOT NULL
);

CREATE TABLE IF NOT EXISTS manifest (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


@dataclass(frozen=True, slots=True, eq=False)
class Checkpoint:
    """Parameters by name plus the JSON manifest stored alongside them."""

    parameters: dict[str, np.ndarray]
    manifest: dict[str, Any] = field(default_factory=dict)

    @property
    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig.from_dict(self.manifest["model"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StorageError(f"checkpoint manifest has no valid model config: {exc}") from exc

    @property
    def config_hash(self) -> str | None:
        return self.manifest.get("config_hash")


class CheckpointStore:
    """Reads and writes one checkpoint file.

    Writing replaces any previous contents of the file. Payloads are stored
    as float32, so a float32 model round-trips bit-exactly.
    """

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)

    @property
    def path(self) -> Path:
        return self._path

    def save(self, parameters: Mapping[str, np.ndarray], manifest: Mapping[str, Any]) -> None:
        """Replace the checkpoint with *parameters* and *manifest*."""
        self._ensure_parent_dir()
        try:
            with closing(self._connect()) as conn:
                conn.executescript(_SCHEMA)
                with conn:
                    conn.execute("DELETE FROM parameters")
                    conn.execute("DELETE FROM manifest")
                    self._insert_parameters(conn, parameters)
                    conn.executemany(
                        "INSERT INTO manifest (key, value) VALUES (?, ?)",
                        [(key, json.dumps(value, sort_keys=True)) for key, value in manifest.items()],
                    )
        except sqlite3.Error as exc:
            raise StorageError(f"failed to write checkpoint {self._path}: {exc}") from exc

    @staticmethod
    def _insert_parameters(conn: sqlite3.Connection, parameters: Mapping[str, np.ndarray]) -> None:
        rows = []
        for name, value in parameters.items():
            array = np.ascontiguousarray(value, dtype=_PAYLOAD_DTYPE)
            rows.append((name, json.dumps(list(array.shape)), array.tobytes()))
        conn.executemany("INSERT INTO parameters (name, shape, payload) VALUES (?, ?, ?)", rows)

    def load(self) -> Checkpoint:
        """Read every parameter and the manifest back."""
        if not self._path.is_file():
            raise StorageError(f"checkpoint not found: {self._path}")
        try:
            with closing(self._connect()) as conn:
                param_rows = conn.execute("SELECT name, shape, payload FROM parameters ORDER BY name").fetchall()
                manifest_rows = conn.execute("SELECT key, value FROM manifest").fetchall()
        except sqlite3.Error as exc:
            raise StorageError(f"failed to read checkpoint {self._path}: {exc}") from exc
        parameters = {}
        for name, shape, payload in param_rows:
            parameters[name] = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(json.loads(shape)).astype(np.float32)
        return Checkpoint(parameters=parameters, manifest={key: json.loads(value) for key, value in manifest_rows})

    def _connect(self) -> sqlite3.Connection:
        return sqlite3.connect(self._path)

    def _ensure_parent_dir(self) -> None:
        try:
            self._path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create checkpoint directory {self._path.parent}: {exc}") from exc


def stage_checkpoint_path(run_dir: str | Path, level: int) -> Path:
    return Path(run_dir) / f"stage{level}.ckpt"


def final_checkpoint_path(run_dir: str | Path) -> Path:
    return Path(run_dir) / "model.ckpt"
