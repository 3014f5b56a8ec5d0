"""Segmentation metrics: IoU, MAE, precision/recall sweeps, max-F_β, dataset evaluation.

Conventions shared with threshold calibration: a pixel is predicted
positive when its score is ``>= τ``; precision is 1 when nothing is
predicted positive and recall is 1 when the ground truth is empty. Curve
points are means over images (macro average).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .constants import DEFAULT_GRID_STEP
from .exceptions import DimensionError, StorageError
from .imgproc import read_image, read_mask
from .models import CellReport, EvalReport, PRPoint
from .protocols import MaskPredictor
from .synthgen import load_manifest

_log = logging.getLogger(__name__)

F_BETAS = (0.3, 2.0)


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"prediction shape {np.shape(a)} does not match ground truth {np.shape(b)}")


def _check_lists(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> None:
    if not preds or len(preds) != len(gts):
        raise DimensionError(f"need equally long non-empty lists, got {len(preds)} predictions and {len(gts)} masks")


def threshold_grid(step: float = DEFAULT_GRID_STEP, *, closed: bool = True) -> np.ndarray:
    """``{0, step, ..., 1}`` (closed) or ``{step, ..., 1 - step}`` (open)."""
    count = int(round(1.0 / step))
    if count < 2 or abs(count * step - 1.0) > 1e-9:
        raise ValueError(f"grid step must divide 1 into at least two parts, got {step}")
    grid = np.arange(count + 1, dtype=np.float64) / count
    return grid if closed else grid[1:-1]


def precision_recall(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Precision and recall of a binary prediction with the empty-set conventions."""
    _check_pair(pred, gt)
    pred_b, gt_b = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    tp = int(np.count_nonzero(pred_b & gt_b))
    predicted, actual = int(np.count_nonzero(pred_b)), int(np.count_nonzero(gt_b))
    precision = 1.0 if predicted == 0 else tp / predicted
    recall = 1.0 if actual == 0 else tp / actual
    return precision, recall


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks; 1 when both are empty."""
    _check_pair(pred, gt)
    pred_b, gt_b = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    union = int(np.count_nonzero(pred_b | gt_b))
    return 1.0 if union == 0 else int(np.count_nonzero(pred_b & gt_b)) / union


def mae(pred_soft: np.ndarray, gt: np.ndarray) -> float:
    _check_pair(pred_soft, gt)
    return float(np.mean(np.abs(np.asarray(pred_soft, dtype=np.float64) - np.asarray(gt, dtype=np.float64))))


class SweepCounts(NamedTuple):
    """Per-threshold counts for one image: true positives, predicted positives, actual positives."""

    true_pos: np.ndarray
    predicted: np.ndarray
    actual: int


def sweep_counts(soft: np.ndarray, gt: np.ndarray, thresholds: np.ndarray) -> SweepCounts:
    """Counts at every threshold at once, via sorted scores."""
    _check_pair(soft, gt)
    scores = np.asarray(soft).ravel()
    labels = np.asarray(gt, dtype=bool).ravel()
    all_sorted = np.sort(scores)
    pos_sorted = np.sort(scores[labels])
    predicted = all_sorted.size - np.searchsorted(all_sorted, thresholds, side="left")
    true_pos = pos_sorted.size - np.searchsorted(pos_sorted, thresholds, side="left")
    return SweepCounts(true_pos, predicted, int(labels.sum()))


def _pr_from_counts(counts: SweepCounts) -> tuple[np.ndarray, np.ndarray]:
    precision = np.where(counts.predicted == 0, 1.0, counts.true_pos / np.maximum(counts.predicted, 1))
    recall = np.ones_like(precision) if counts.actual == 0 else counts.true_pos / counts.actual
    return precision, recall


def _iou_from_counts(counts: SweepCounts) -> np.ndarray:
    union = counts.predicted + counts.actual - counts.true_pos
    return np.where(union == 0, 1.0, counts.true_pos / np.maximum(union, 1))


def per_image_pr(
    preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], thresholds: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall arrays of shape ``images x thresholds``."""
    _check_lists(preds, gts)
    pairs = [_pr_from_counts(sweep_counts(p, g, thresholds)) for p, g in zip(preds, gts)]
    return np.stack([p for p, _ in pairs]), np.stack([r for _, r in pairs])


def mean_precision_recall(
    preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], thresholds: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    precision, recall = per_image_pr(preds, gts, thresholds)
    return precision.mean(axis=0), recall.mean(axis=0)


def pr_curve(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], grid_step: float = DEFAULT_GRID_STEP) -> list[PRPoint]:
    """Mean precision and recall at every ``τ`` in ``{0, step, ..., 1}``."""
    thresholds = threshold_grid(grid_step)
    precision, recall = mean_precision_recall(preds, gts, thresholds)
    return [PRPoint(float(t), float(p), float(r)) for t, p, r in zip(thresholds, precision, recall)]


def f_beta(precision: np.ndarray | float, recall: np.ndarray | float, beta: float) -> np.ndarray:
    """``(1 + β²)PR / (β²P + R)``, defined as 0 where ``P = R = 0``."""
    p, r = np.asarray(precision, dtype=np.float64), np.asarray(recall, dtype=np.float64)
    b2 = beta * beta
    denom = b2 * p + r
    return np.where(denom == 0, 0.0, (1.0 + b2) * p * r / np.where(denom == 0, 1.0, denom))


def max_f_beta(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    beta: float,
    grid_step: float = DEFAULT_GRID_STEP,
    *,
    per_image: bool = False,
) -> tuple[float, float]:
    """Maximum F_β over the threshold grid and the smallest ``τ`` reaching it.

    By default F_β is computed from dataset-mean precision and recall; with
    ``per_image=True`` it is averaged over per-image F_β values instead.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    thresholds = threshold_grid(grid_step)
    precision, recall = per_image_pr(preds, gts, thresholds)
    if per_image:
        scores = f_beta(precision, recall, beta).mean(axis=0)
    else:
        scores = f_beta(precision.mean(axis=0), recall.mean(axis=0), beta)
    best = int(np.argmax(scores))
    return float(scores[best]), float(thresholds[best])


def mean_iou_curve(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], thresholds: np.ndarray) -> np.ndarray:
    _check_lists(preds, gts)
    return np.mean([_iou_from_counts(sweep_counts(p, g, thresholds)) for p, g in zip(preds, gts)], axis=0)


def select_miou_threshold(
    preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], grid_step: float = DEFAULT_GRID_STEP
) -> float:
    """``τ`` maximizing mean IoU over a validation set; smallest on ties."""
    thresholds = threshold_grid(grid_step)
    return float(thresholds[int(np.argmax(mean_iou_curve(preds, gts, thresholds)))])


def summarize(
    category: str,
    size: str,
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    miou_threshold: float,
    grid_step: float,
) -> CellReport:
    """All metrics of one cell."""
    curve = pr_curve(preds, gts, grid_step)
    return CellReport(
        category=category,
        size=size,
        count=len(preds),
        miou=float(np.mean([iou(p >= miou_threshold, g) for p, g in zip(preds, gts)])),
        mae=float(np.mean([mae(p, g) for p, g in zip(preds, gts)])),
        max_f03=max_f_beta(preds, gts, F_BETAS[0], grid_step)[0],
        max_f2=max_f_beta(preds, gts, F_BETAS[1], grid_step)[0],
        pr_curve=tuple(curve),
    )


def _predict_sample(predictor: MaskPredictor, root: Path, sample: dict) -> tuple[np.ndarray, np.ndarray]:
    image = read_image(root / sample["image"])
    gt = read_mask(root / sample["mask"])
    soft = np.asarray(predictor.predict_soft(image), dtype=np.float64)
    _check_pair(soft, gt)
    return soft, gt


def _cell_predictions(
    predictor: MaskPredictor, root: Path, samples: list[dict], jobs: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(lambda s: _predict_sample(predictor, root, s), samples))
    else:
        pairs = [_predict_sample(predictor, root, s) for s in samples]
    return [p for p, _ in pairs], [g for _, g in pairs]


def evaluate_dataset(
    predictor: MaskPredictor,
    test_dir: str | Path,
    grid_step: float = DEFAULT_GRID_STEP,
    *,
    miou_threshold: float | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Predict every image of a synthesized test set and report per-cell and overall metrics.

    Without *miou_threshold* the threshold is selected on the evaluated set
    itself, which is optimistic; a warning is logged.
    """
    root = Path(test_dir)
    manifest = load_manifest(root)
    predictions: dict[tuple[str, str], tuple[list[np.ndarray], list[np.ndarray]]] = {}
    for cell in manifest["cells"]:
        if cell.get("samples"):
            key = (str(cell["category"]), str(cell["size"]))
            predictions[key] = _cell_predictions(predictor, root, cell["samples"], jobs)
            _log.info("predicted %d images for %s/%s", len(cell["samples"]), *key)
    if not predictions:
        raise StorageError(f"dataset manifest under {root} lists no samples")
    all_preds = [p for preds, _ in predictions.values() for p in preds]
    all_gts = [g for _, gts in predictions.values() for g in gts]
    if miou_threshold is None:
        miou_threshold = select_miou_threshold(all_preds, all_gts, grid_step)
        _log.warning("no calibrated mIoU threshold; selected %.2f on the evaluated set itself", miou_threshold)
    cells = tuple(
        summarize(category, size, preds, gts, miou_threshold, grid_step)
        for (category, size), (preds, gts) in predictions.items()
    )
    overall = summarize("all", "all", all_preds, all_gts, miou_threshold, grid_step)
    return EvalReport(cells=cells, overall=overall, miou_threshold=miou_threshold, grid_step=grid_step)
