"""Domain-wide constants and default values."""

import math

DEFAULT_SEED = 0
DEFAULT_JOBS = 1

DEFAULT_LEVELS = 3
DEFAULT_SIGMA_STEP = math.sqrt(2.0)
DEFAULT_CHANNELS = 16
DEFAULT_RESBLOCKS = 4
DEFAULT_TRAIN_RESOLUTION = 64
DEFAULT_TEST_RESOLUTION = 256
MIN_IMAGE_SIZE = 8

DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_STAGE_STEPS = 500
DEFAULT_BATCH_SIZE = 8
DEFAULT_P_MIN = 0.6
DEFAULT_R_MIN = 0.95
DEFAULT_GRID_STEP = 0.01
DEFAULT_VALIDATION_SAMPLES = 16

BCE_EPS = 1e-7
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4

DEFAULT_JPEG_QUALITY_RANGE = (70, 100)
DEFAULT_MATCH_PROBABILITY = 0.5
DEFAULT_STRENGTH_RANGE = (0.5, 1.0)
WINDOW_DILATION = 0.25
MIN_SPRITE_SIDE = 3
SYNTH_MAX_RETRIES = 20
TRAIN_SIZE_WEIGHTS = {"small": 0.5, "medium": 0.3, "large": 0.2}

CATEGORIES = ("sticker", "line", "text", "logo")
SIZE_LEVELS = ("small", "medium", "large")

# (category, size) -> (size_lo, size_hi, count_lo, count_hi, bbox_lo, bbox_hi)
# Stickers/logos: coverage ratio. Lines: stroke width / shorter side.
# Text: glyph width / image width, with a total bounding-box area range.
SIZE_TAXONOMY: dict[tuple[str, str], tuple[float, float, int, int, float, float]] = {
    ("sticker", "small"): (0.001, 0.016, 1, 2, 0.0, 0.0),
    ("sticker", "medium"): (0.016, 0.064, 1, 4, 0.0, 0.0),
    ("sticker", "large"): (0.064, 0.4, 1, 12, 0.0, 0.0),
    ("logo", "small"): (0.001, 0.016, 1, 2, 0.0, 0.0),
    ("logo", "medium"): (0.016, 0.064, 1, 4, 0.0, 0.0),
    ("logo", "large"): (0.064, 0.4, 1, 12, 0.0, 0.0),
    ("line", "small"): (0.008, 0.02, 1, 10, 0.0, 0.0),
    ("line", "medium"): (0.02, 0.06, 1, 10, 0.0, 0.0),
    ("line", "large"): (0.06, 0.15, 1, 6, 0.0, 0.0),
    ("text", "small"): (0.05, 0.1, 1, 2, 0.002, 0.016),
    ("text", "medium"): (0.1, 0.2, 1, 2, 0.016, 0.25),
    ("text", "large"): (0.15, 0.4, 1, 2, 0.25, 0.6),
}

RUN_MANIFEST_NAME = "run.json"
DATASET_MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.json"
PR_CURVES_NAME = "pr_curves.csv"
LOSS_CURVE_NAME = "loss_curve.csv"
CALIBRATION_NAME = "calibration.json"
CONFIG_NAME = "config.json"
