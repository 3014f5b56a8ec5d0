import sys
from pathlib import Path

import numpy as np
import pytest


# Allow running tests without an installed wheel by adding src/ to sys.path.
PROJECT_ROOT = Path(__file__).resolve().parents[1]
SRC_DIR = PROJECT_ROOT / "src"
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from graphseg.models import ModelConfig, StageConfig, StreamConfig  # noqa: E402
from graphseg.patterns import ProceduralPatternSource  # noqa: E402
from graphseg.synthgen import ProceduralImageSource, SynthStream  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def base_image(rng: np.random.Generator) -> np.ndarray:
    """A smooth 64x64 colour field."""
    return ProceduralImageSource().sample(rng, 64)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(levels=2, channels=2, resblocks=1, input_size=32)


@pytest.fixture
def tiny_stage() -> StageConfig:
    return StageConfig(steps=2, batch_size=2, validation_samples=2, threshold_grid=0.05, p_min=0.01, r_min=0.01)


@pytest.fixture
def tiny_stream() -> SynthStream:
    config = StreamConfig(resolution=32, categories=("sticker", "logo"), size_weights=(0.0, 0.0, 1.0))
    return SynthStream(ProceduralImageSource(), ProceduralPatternSource(), config, seed=5)
