"""Reversed active learning for patch-based image classification.

Instead of growing a training set with new labels, the loop here shrinks
it: train a small CNN on weakly labeled patches, score every training
patch with the model's confidence in its own label, drop the low-confidence
ones (plus whole augmentation groups that mostly failed), fine-tune, and
repeat. Slide-level decisions come from majority voting over a
non-overlapping patch grid.
"""

from .config import ExperimentConfig
from .loop import RalConfig, run_ral
from .patches import TilingSpec, augment8, build_training_set, tile
from .slices import majority_vote, predict_slide
from .synth import SynthSpec, generate, oracle_eval

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "RalConfig", "run_ral", "TilingSpec", "augment8",
    "build_training_set", "tile", "majority_vote", "predict_slide",
    "SynthSpec", "generate", "oracle_eval", "__version__",
]
