"""Whole-slide classification by patch-grid majority vote.

A slide is split into a non-overlapping grid of window-sized patches
(rows = H/window, cols = W/window, row-major). The network scores each
patch; the slide label is the plurality winner over the per-patch argmax
labels. Count ties go to the tied class with the larger summed probability
over all cells, and an exact tie after that falls back to the lowest class
index, so the vote is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import macro_accuracy, plain_accuracy
from .patches import SlideImage, TilingSpec, tile

# Class-name keyed colors for rendered maps, with an indexed fallback
# palette for other naming schemes. All colors are distinct.
NAMED_COLORS = {
    "Normal": (0.0, 0.8, 0.0),    # green
    "Benign": (0.0, 0.0, 1.0),    # blue
    "InSitu": (1.0, 0.65, 0.0),   # orange
    "Invasive": (1.0, 0.0, 0.0),  # red
}
FALLBACK_COLORS = (
    (0.0, 0.8, 0.0), (0.0, 0.0, 1.0), (1.0, 0.65, 0.0), (1.0, 0.0, 0.0),
    (0.5, 0.0, 0.5), (0.0, 0.8, 0.8), (0.9, 0.9, 0.0), (0.35, 0.35, 0.35),
)


def class_color(name, index):
    if name in NAMED_COLORS:
        return NAMED_COLORS[name]
    return FALLBACK_COLORS[index % len(FALLBACK_COLORS)]


@dataclass
class SlidePrediction:
    slide_id: str
    grid_probs: np.ndarray    # (rows, cols, n_classes)
    patch_labels: np.ndarray  # (rows, cols) argmax per cell
    voted_label: int
    vote_counts: dict         # class index -> cell count
    tie_broken: bool

    @property
    def rows(self):
        return self.grid_probs.shape[0]

    @property
    def cols(self):
        return self.grid_probs.shape[1]


def majority_vote(patch_labels, grid_probs):
    """Plurality winner over cell labels.

    Returns (label, tie_broken, counts). ``tie_broken`` is set only when
    several classes share the top count and summed probabilities decide.
    """
    labels = np.asarray(patch_labels).ravel()
    if labels.size == 0:
        raise ValueError("majority_vote needs at least one cell")
    n_classes = np.asarray(grid_probs).shape[-1]
    counts = np.bincount(labels, minlength=n_classes)
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if len(tied) == 1:
        return int(tied[0]), False, counts
    sums = np.asarray(grid_probs).reshape(-1, n_classes).sum(axis=0)
    best = tied[np.argmax(sums[tied])]  # argmax takes the lowest index on ties
    return int(best), True, counts


def mean_probability_label(grid_probs):
    """Alternative aggregation: argmax of the cell-averaged probabilities."""
    n_classes = np.asarray(grid_probs).shape[-1]
    return int(np.argmax(np.asarray(grid_probs).reshape(-1, n_classes).mean(axis=0)))


def predict_slide(net, slide: SlideImage, window, method="majority"):
    """Grid up a slide without overlap, score each patch, vote.

    Slide dimensions must be divisible by the window.
    """
    if slide.height % window or slide.width % window:
        raise ValueError(
            f"slide {slide.slide_id} is {slide.width}x{slide.height}, "
            f"not divisible by window {window}")
    rows = slide.height // window
    cols = slide.width // window
    crops = tile(slide, TilingSpec(window, window))
    batch = np.stack([c for _, c in crops]).astype(np.float32)
    probs = net.predict_proba(batch)
    grid = probs.reshape(rows, cols, -1)
    patch_labels = grid.argmax(axis=2)
    if method == "majority":
        voted, tie_broken, counts = majority_vote(patch_labels, grid)
    elif method == "mean_prob":
        voted = mean_probability_label(grid)
        tie_broken = False
        counts = np.bincount(patch_labels.ravel(), minlength=grid.shape[2])
    else:
        raise ValueError(f"unknown vote method {method!r}")
    return SlidePrediction(slide.slide_id, grid, patch_labels, voted,
                           {int(c): int(n) for c, n in enumerate(counts) if n},
                           tie_broken)


def render_class_map(prediction: SlidePrediction, class_names, cell_size=32):
    """One colored block per grid cell, as an RGB float image in [0,1]."""
    rows, cols = prediction.patch_labels.shape
    img = np.zeros((rows * cell_size, cols * cell_size, 3), dtype=np.float32)
    for r in range(rows):
        for c in range(cols):
            idx = int(prediction.patch_labels[r, c])
            color = class_color(class_names[idx], idx)
            img[r * cell_size:(r + 1) * cell_size,
                c * cell_size:(c + 1) * cell_size] = color
    return img


def slice_accuracy(predictions, truth_labels, n_classes):
    """(macro %, plain %) of voted labels against per-slide truth.

    ``truth_labels`` maps slide_id to a class index; an unmatched
    prediction is an error, not a skip.
    """
    if not predictions:
        raise ValueError("no slide predictions to score")
    y_true, y_pred = [], []
    for p in predictions:
        if p.slide_id not in truth_labels:
            raise ValueError(f"unknown slide_id {p.slide_id!r} in predictions")
        y_true.append(truth_labels[p.slide_id])
        y_pred.append(p.voted_label)
    return (macro_accuracy(y_true, y_pred, n_classes),
            plain_accuracy(y_true, y_pred))
