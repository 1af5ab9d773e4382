"""Synthetic contaminated slide generator.

Each slide is a mosaic of window-sized texture regions. Regions normally
carry the slide's class texture (an oriented sinusoid plus Gaussian noise,
with a class-specific spatial frequency), but a controlled fraction of
regions per slide is painted with another class's texture while the slide
keeps its label: patch-level label noise with known ground truth. The
oracle records, per region group, the assigned and true class, which makes
the pruning behaviour of the refinement loop measurable - something real
weakly-labeled datasets cannot offer.

Regions coincide with the tiling grid (stride must equal the window), so
"this patch group is mislabeled" is exact, not approximate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import save_image
from .patches import SlideImage, group_of, make_group_id

DEFAULT_CLASS_NAMES = ("Normal", "Benign", "InSitu", "Invasive")

# (cycles per window, orientation degrees): frequencies spaced by factor 2
# so classes stay separable under any rotation/flip of the patch.
DEFAULT_TEXTURES = ((1.5, 0.0), (3.0, 30.0), (6.0, 60.0), (12.0, 90.0))


def _round_half_up(x):
    return int(np.floor(x + 0.5))


@dataclass
class SynthSpec:
    classes: int = 4
    slide_size: tuple = (128, 128)   # (H, W)
    window: int = 32
    stride: int = 32                 # must equal window (regions tessellate)
    slides_per_class: int = 10
    contamination_rho: float = 0.1   # fraction of regions per slide mislabeled
    noise_sigma: float = 0.05
    texture_amplitude: float = 0.25
    texture_params: tuple = None     # per-class (frequency, orientation)
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.stride != self.window:
            raise ValueError(
                f"generator stride ({self.stride}) must equal the window "
                f"({self.window}): contaminated regions must coincide with "
                f"tiling cells for the oracle to be exact")
        h, w = self.slide_size
        if h % self.window or w % self.window:
            raise ValueError(f"slide size {w}x{h} not divisible by window {self.window}")
        if not 0.0 <= self.contamination_rho < 1.0:
            raise ValueError(f"contamination_rho must be in [0, 1), got {self.contamination_rho}")
        if self.texture_params is None:
            if self.classes <= len(DEFAULT_TEXTURES):
                self.texture_params = DEFAULT_TEXTURES[:self.classes]
            else:
                self.texture_params = tuple(
                    (1.5 * 2 ** (i * 3.0 / self.classes), (180.0 * i) / self.classes)
                    for i in range(self.classes))
        if len(self.texture_params) != self.classes:
            raise ValueError("need one (frequency, orientation) pair per class")
        freqs = [f for f, _ in self.texture_params]
        if len(set(freqs)) != len(freqs):
            raise ValueError("class texture frequencies must be pairwise distinct")

    def class_names(self):
        # lexicographic, matching how dataset directories are enumerated,
        # so class indices agree between generation and reload
        if self.classes == len(DEFAULT_CLASS_NAMES):
            return sorted(DEFAULT_CLASS_NAMES)
        return [f"class{i}" for i in range(self.classes)]

    def regions_per_slide(self):
        h, w = self.slide_size
        return (h // self.window) * (w // self.window)

    def contaminated_per_slide(self):
        return _round_half_up(self.contamination_rho * self.regions_per_slide())

    def to_dict(self):
        return {"classes": self.classes, "slide_size": list(self.slide_size),
                "window": self.window, "stride": self.stride,
                "slides_per_class": self.slides_per_class,
                "contamination_rho": self.contamination_rho,
                "noise_sigma": self.noise_sigma,
                "texture_amplitude": self.texture_amplitude,
                "texture_params": [list(t) for t in self.texture_params],
                "val_fraction": self.val_fraction, "seed": self.seed}


@dataclass(frozen=True)
class OracleEntry:
    group_id: str
    assigned_label: str
    true_label: str

    @property
    def mislabeled(self):
        return self.assigned_label != self.true_label


class MislabelOracle:
    """group_id -> (assigned label, true label) for every generated region."""

    def __init__(self, entries):
        self.entries = {e.group_id: e for e in entries}

    def __len__(self):
        return len(self.entries)

    def entry(self, group_id):
        if group_id not in self.entries:
            raise ValueError(f"unknown group_id {group_id!r} in oracle")
        return self.entries[group_id]

    def mislabeled_groups(self):
        return {gid for gid, e in self.entries.items() if e.mislabeled}

    def to_json(self):
        return json.dumps([{"group_id": e.group_id,
                            "assigned_label": e.assigned_label,
                            "true_label": e.true_label,
                            "is_mislabeled": e.mislabeled}
                           for e in self.entries.values()], indent=1)

    @staticmethod
    def from_json(text):
        return MislabelOracle([OracleEntry(d["group_id"], d["assigned_label"],
                                           d["true_label"])
                               for d in json.loads(text)])


@dataclass
class SynthDataset:
    spec: SynthSpec
    class_names: list
    train_slides: list
    val_slides: list
    oracle: MislabelOracle


def _texture_tile(rng, window, freq, theta_deg, phase, amplitude, sigma):
    theta = np.deg2rad(theta_deg)
    y, x = np.mgrid[0:window, 0:window].astype(np.float64)
    u = 2.0 * np.pi * freq * (x * np.cos(theta) + y * np.sin(theta)) / window
    base = 0.5 + amplitude * np.sin(u + phase)
    tile = base[:, :, None] + rng.normal(0.0, sigma, size=(window, window, 3))
    return np.clip(tile, 0.0, 1.0).astype(np.float32)


def _generate_slide(spec: SynthSpec, class_idx, slide_idx, class_names):
    rng = np.random.default_rng((spec.seed, class_idx, slide_idx))
    h, w = spec.slide_size
    rows, cols = h // spec.window, w // spec.window
    n_regions = rows * cols
    n_contam = spec.contaminated_per_slide()
    contaminated = set(rng.choice(n_regions, size=n_contam, replace=False).tolist())
    slide_id = f"{class_names[class_idx]}_{slide_idx:03d}"
    pixels = np.empty((h, w, 3), dtype=np.float32)
    entries = []
    for cell in range(n_regions):
        row, col = divmod(cell, cols)
        true_idx = class_idx
        if cell in contaminated:
            others = [c for c in range(spec.classes) if c != class_idx]
            true_idx = int(others[rng.integers(len(others))])
        freq, theta = spec.texture_params[true_idx]
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        tile = _texture_tile(rng, spec.window, freq, theta, phase,
                             spec.texture_amplitude, spec.noise_sigma)
        pixels[row * spec.window:(row + 1) * spec.window,
               col * spec.window:(col + 1) * spec.window] = tile
        entries.append(OracleEntry(make_group_id(slide_id, col, row),
                                   class_names[class_idx],
                                   class_names[true_idx]))
    return SlideImage(slide_id, class_names[class_idx], pixels), entries


def generate(spec: SynthSpec):
    """Build all slides, the 80:20-style stratified split, and the oracle."""
    class_names = spec.class_names()
    all_entries = []
    per_class_slides = []
    for ci in range(spec.classes):
        slides = []
        for si in range(spec.slides_per_class):
            slide, entries = _generate_slide(spec, ci, si, class_names)
            slides.append(slide)
            all_entries.extend(entries)
        per_class_slides.append(slides)

    n_val = _round_half_up(spec.val_fraction * spec.slides_per_class)
    if n_val >= spec.slides_per_class:
        raise ValueError("validation fraction leaves no training slides")
    split_rng = np.random.default_rng((spec.seed, 0xA11))
    train_slides, val_slides = [], []
    for slides in per_class_slides:
        val_idx = set(split_rng.choice(len(slides), size=n_val, replace=False).tolist())
        for i, s in enumerate(slides):
            (val_slides if i in val_idx else train_slides).append(s)
    return SynthDataset(spec, class_names, train_slides, val_slides,
                        MislabelOracle(all_entries))


@dataclass
class OracleMetrics:
    mislabel_recall: float
    clean_false_removal_rate: float
    removed_mislabeled: int
    total_mislabeled: int
    removed_clean: int
    total_clean: int

    def to_dict(self):
        return {"mislabel_recall": self.mislabel_recall,
                "clean_false_removal_rate": self.clean_false_removal_rate,
                "removed_mislabeled": self.removed_mislabeled,
                "total_mislabeled": self.total_mislabeled,
                "removed_clean": self.removed_clean,
                "total_clean": self.total_clean}


def oracle_eval(removed_patch_ids, population_patch_ids, oracle: MislabelOracle):
    """Score a removal run against ground truth.

    ``population_patch_ids`` is the full initial set the removals were drawn
    from (the active training records before any pruning); recall and false
    removal rate are fractions of that population's mislabeled and clean
    records respectively.
    """
    removed = set(removed_patch_ids)
    population = set(population_patch_ids)
    stray = removed - population
    if stray:
        raise ValueError(f"removed ids not in population: {sorted(stray)[:3]}")
    total_mis = total_clean = rem_mis = rem_clean = 0
    for pid in population:
        mislabeled = oracle.entry(group_of(pid)).mislabeled
        if mislabeled:
            total_mis += 1
            rem_mis += pid in removed
        else:
            total_clean += 1
            rem_clean += pid in removed
    recall = rem_mis / total_mis if total_mis else 0.0
    false_rate = rem_clean / total_clean if total_clean else 0.0
    return OracleMetrics(recall, false_rate, rem_mis, total_mis, rem_clean, total_clean)


def write_dataset(dataset: SynthDataset, out_dir):
    """Materialize the dataset: train/<class>/<slide>.ppm, val/...,
    oracle.json and generator.json."""
    out = Path(out_dir)
    for split_name, slides in (("train", dataset.train_slides),
                               ("val", dataset.val_slides)):
        for slide in slides:
            d = out / split_name / slide.class_label
            d.mkdir(parents=True, exist_ok=True)
            save_image(d / f"{slide.slide_id}.ppm", slide.pixels)
    (out / "oracle.json").write_text(dataset.oracle.to_json())
    (out / "generator.json").write_text(json.dumps(dataset.spec.to_dict(), indent=1))
    return out
