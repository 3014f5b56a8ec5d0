from .cascade import CascadeModel, CascadePredictor, forward, predict_mask, predict_soft
from .metrics import evaluate_dataset
from .models import DatasetGrid, EvalReport, ModelConfig, StageConfig, StreamConfig, SynthesisConfig, SynthSample
from .storage import CheckpointStore
from .synthgen import SynthStream, build_test_set, synthesize
from .trainer import train_cascade, train_stage

__all__ = [
    "CascadeModel",
    "CascadePredictor",
    "CheckpointStore",
    "DatasetGrid",
    "EvalReport",
    "ModelConfig",
    "StageConfig",
    "StreamConfig",
    "SynthSample",
    "SynthStream",
    "SynthesisConfig",
    "build_test_set",
    "evaluate_dataset",
    "forward",
    "predict_mask",
    "predict_soft",
    "synthesize",
    "train_cascade",
    "train_stage",
]
