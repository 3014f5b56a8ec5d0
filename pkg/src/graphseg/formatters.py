"""Presentation writers for graphseg outputs (JSON reports, CSV curves, run manifests)."""

from __future__ import annotations

import csv
import json
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .exceptions import StorageError
from .metrics import F_BETAS, f_beta
from .models import Calibration, CellReport, EvalReport, StageResult


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"failed to write {path}: {exc}") from exc


def write_json(path: str | Path, payload: Any) -> None:
    _write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise StorageError(f"failed to write {path}: {exc}") from exc


class ReportFormatter:
    """Serialize an ``EvalReport`` as ``report.json`` and ``pr_curves.csv``."""

    def write_report(self, report: EvalReport, path: str | Path) -> None:
        _write_text(Path(path), report.to_pretty_json() + "\n")

    def write_pr_curves(self, report: EvalReport, path: str | Path) -> None:
        rows = [row for cell in (*report.cells, report.overall) for row in self._curve_rows(cell)]
        _write_csv(Path(path), ("category", "size", "threshold", "precision", "recall", "f0.3", "f2"), rows)

    @staticmethod
    def _curve_rows(cell: CellReport) -> list[tuple[Any, ...]]:
        rows = []
        for point in cell.pr_curve:
            f_low, f_high = (float(f_beta(point.precision, point.recall, beta)) for beta in F_BETAS)
            rows.append((cell.category, cell.size, f"{point.threshold:.4f}", point.precision, point.recall, f_low, f_high))
        return rows


class TrainingFormatter:
    """Serialize stage results as ``loss_curve.csv`` and ``calibration.json``."""

    def write_loss_curve(self, results: Sequence[StageResult], path: str | Path) -> None:
        rows = [(r.level, step, loss) for r in results for step, loss in enumerate(r.loss_curve)]
        _write_csv(Path(path), ("stage", "step", "loss"), rows)

    def write_calibration(self, calibrations: Sequence[Calibration], miou_threshold: float | None, path: str | Path) -> None:
        stages = [{"level": level, **c.to_dict()} for level, c in enumerate(calibrations)]
        write_json(path, {"stages": stages, "miou_threshold": miou_threshold})


def environment_versions() -> dict[str, str]:
    versions = {"python": platform.python_version(), "numpy": np.__version__}
    try:
        versions["graphseg"] = metadata.version("graphseg")
    except metadata.PackageNotFoundError:
        versions["graphseg"] = "unknown"
    return versions


def run_manifest(
    command: str, config: dict[str, Any], seed: int, status: str, warnings: Sequence[str] = (), **extra: Any
) -> dict[str, Any]:
    """Fully resolved inputs of one command plus the environment that ran it."""
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "status": status,
        "warnings": list(warnings),
        "versions": environment_versions(),
        **extra,
    }
