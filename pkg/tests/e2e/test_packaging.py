from pathlib import Path

import graphseg
from graphseg import CascadeModel, ModelConfig, build_test_set, evaluate_dataset, train_cascade


def test_public_api_exports() -> None:
    assert CascadeModel is not None
    assert ModelConfig is not None
    assert callable(build_test_set) and callable(train_cascade) and callable(evaluate_dataset)
    assert set(graphseg.__all__) >= {"CascadeModel", "predict_mask", "synthesize"}


def test_py_typed_marker_exists() -> None:
    # PEP 561 marker
    marker = Path(__file__).parents[2] / "src" / "graphseg" / "py.typed"
    assert marker.exists()
