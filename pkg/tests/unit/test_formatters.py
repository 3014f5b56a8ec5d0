from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from graphseg.exceptions import StorageError
from graphseg.formatters import ReportFormatter, TrainingFormatter, environment_versions, run_manifest, write_json
from graphseg.models import Calibration, CellReport, EvalReport, PRPoint, StageResult


def _report() -> EvalReport:
    curve = (PRPoint(0.0, 0.2, 1.0), PRPoint(0.5, 1.0, 1.0), PRPoint(1.0, 1.0, 0.0))
    cell = CellReport("logo", "small", 2, 0.5, 0.1, 0.8, 0.7, curve)
    overall = CellReport("all", "all", 2, 0.5, 0.1, 0.8, 0.7, curve)
    return EvalReport(cells=(cell,), overall=overall, miou_threshold=0.4, grid_step=0.5)


def test_report_json_has_cells_and_overall(tmp_path: Path) -> None:
    ReportFormatter().write_report(_report(), tmp_path / "report.json")
    payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert payload["miou_threshold"] == 0.4
    assert payload["cells"][0]["max_f0.3"] == 0.8
    assert payload["overall"]["category"] == "all"


def test_pr_curves_csv_lists_every_point(tmp_path: Path) -> None:
    ReportFormatter().write_pr_curves(_report(), tmp_path / "out" / "pr_curves.csv")
    with (tmp_path / "out" / "pr_curves.csv").open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["category", "size", "threshold", "precision", "recall", "f0.3", "f2"]
    assert len(rows) == 1 + 2 * 3
    assert rows[2][:3] == ["logo", "small", "0.5000"]
    assert float(rows[2][5]) == pytest.approx(1.0)
    assert float(rows[3][5]) == 0.0


def test_loss_curve_csv(tmp_path: Path) -> None:
    calibration = Calibration(0.3, 0.7, 0.96)
    results = [StageResult(0, calibration, (0.9, 0.8)), StageResult(1, calibration, (0.5,))]
    TrainingFormatter().write_loss_curve(results, tmp_path / "loss_curve.csv")
    lines = (tmp_path / "loss_curve.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["stage,step,loss", "0,0,0.9", "0,1,0.8", "1,0,0.5"]


def test_calibration_json(tmp_path: Path) -> None:
    calibrations = [Calibration(0.3, 0.7, 0.96), Calibration(0.2, 0.5, 0.9, feasible=False, precision_feasible=False)]
    TrainingFormatter().write_calibration(calibrations, 0.45, tmp_path / "calibration.json")
    payload = json.loads((tmp_path / "calibration.json").read_text(encoding="utf-8"))
    assert payload["miou_threshold"] == 0.45
    assert [s["level"] for s in payload["stages"]] == [0, 1]
    assert payload["stages"][1]["feasible"] is False


def test_run_manifest_records_inputs_and_versions() -> None:
    manifest = run_manifest("train", {"seed": 3}, 3, "completed_with_warnings", ["stage 0: x"], miou_threshold=0.5)
    assert manifest["command"] == "train"
    assert manifest["status"] == "completed_with_warnings"
    assert manifest["warnings"] == ["stage 0: x"]
    assert manifest["miou_threshold"] == 0.5
    assert {"python", "numpy", "graphseg"} <= set(manifest["versions"])


def test_environment_versions_are_strings() -> None:
    assert all(isinstance(value, str) for value in environment_versions().values())


def test_write_json_into_a_file_path_raises(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(StorageError):
        write_json(blocker / "run.json", {})
