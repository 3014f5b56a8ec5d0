"""Verify that public classes and key public methods carry docstrings.

These tests guard against documentation regressions. A new class or public
method added without a docstring will cause these tests to fail.
"""

from __future__ import annotations

import inspect

import pytest

from graphseg.cascade import CascadeModel, CascadePredictor, SubNetwork, forward, predict_mask
from graphseg.cli import CommonArgs, add_common_arguments
from graphseg.exceptions import (
    ConfigError,
    ContractError,
    DimensionError,
    GraphSegError,
    NumericalCheckError,
    SizeError,
    StorageError,
    SynthesisError,
)
from graphseg.experiments import AblationPlan, JpegDegradedPredictor, run_ablation
from graphseg.formatters import ReportFormatter, TrainingFormatter
from graphseg.metrics import evaluate_dataset, max_f_beta, pr_curve
from graphseg.models import (
    Calibration,
    CellReport,
    DatasetGrid,
    EvalReport,
    ModelConfig,
    Pattern,
    ScalePyramid,
    StageConfig,
    StreamConfig,
    SynthesisConfig,
    SynthSample,
)
from graphseg.patterns import ProceduralPatternSource, SpriteDirectorySource
from graphseg.protocols import ImageSource, MaskPredictor, PatternSource
from graphseg.storage import Checkpoint, CheckpointStore
from graphseg.synthgen import DirectoryImageSource, PrefetchingStream, SynthStream, build_test_set, synthesize
from graphseg.tensor import Tensor
from graphseg.trainer import calibrate_threshold, train_cascade, train_stage


def _has_docstring(obj: object) -> bool:
    doc = getattr(obj, "__doc__", None)
    return bool(doc and doc.strip())


# POSITIVE: classes must have docstrings

@pytest.mark.parametrize(
    "cls",
    [
        Tensor,
        SubNetwork,
        CascadeModel,
        CascadePredictor,
        Checkpoint,
        CheckpointStore,
        SynthStream,
        PrefetchingStream,
        DirectoryImageSource,
        ProceduralPatternSource,
        SpriteDirectorySource,
        ReportFormatter,
        TrainingFormatter,
        CommonArgs,
        AblationPlan,
        JpegDegradedPredictor,
        Pattern,
        ScalePyramid,
        SynthSample,
        SynthesisConfig,
        DatasetGrid,
        StreamConfig,
        ModelConfig,
        StageConfig,
        Calibration,
        CellReport,
        EvalReport,
        PatternSource,
        ImageSource,
        MaskPredictor,
    ],
    ids=lambda cls: cls.__name__,
)
def test_class_has_docstring(cls: type) -> None:
    assert _has_docstring(cls), f"{cls.__name__} missing class docstring"


@pytest.mark.parametrize(
    "exc",
    [GraphSegError, DimensionError, SizeError, ContractError, SynthesisError, ConfigError, StorageError, NumericalCheckError],
    ids=lambda exc: exc.__name__,
)
def test_exception_has_docstring(exc: type) -> None:
    assert _has_docstring(exc), f"{exc.__name__} missing docstring"


# POSITIVE: key operations must have docstrings

@pytest.mark.parametrize(
    "fn",
    [
        forward,
        predict_mask,
        synthesize,
        build_test_set,
        train_stage,
        train_cascade,
        calibrate_threshold,
        pr_curve,
        max_f_beta,
        evaluate_dataset,
        run_ablation,
        add_common_arguments,
        CascadeModel.parameters,
        CascadeModel.set_trainable,
        CheckpointStore.save,
        CheckpointStore.load,
        SynthStream.batch,
        Tensor.backward,
        CommonArgs.from_namespace,
        CommonArgs.resolve_seed,
    ],
    ids=lambda fn: fn.__qualname__,
)
def test_operation_has_docstring(fn: object) -> None:
    assert _has_docstring(fn), f"{fn.__qualname__} missing docstring"  # type: ignore[attr-defined]


# NEGATIVE: the helper itself distinguishes documented from undocumented

def test_has_docstring_rejects_blank() -> None:
    def undocumented() -> None:
        pass

    def blank() -> None:
        """   """

    assert not _has_docstring(undocumented)
    assert not _has_docstring(blank)
    assert inspect.isfunction(undocumented)
