"""Closed-form task model and segmentation scoring.

The task model is a per-pixel majority vote over the training rasters: the
exact empirical 0-1 risk minimizer among predictors that output a fixed class
per location. Scores are pooled-confusion mIoU.
"""
from __future__ import annotations

import csv
import io
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .scene import Dataset, SceneAttributes, SceneConfig, image_seeds, render_arrays, render_batch
from .space import AttributeSpace


def _stack(data) -> np.ndarray:
    rasters = data.rasters if isinstance(data, Dataset) else np.asarray(data)
    if rasters.ndim == 2:
        rasters = rasters[None]
    return rasters


def class_counts(rasters: np.ndarray, n_classes: int) -> np.ndarray:
    """``(n_classes, H*W)`` count of each class at each pixel over the stack."""
    rasters = _stack(rasters)
    m, H, W = rasters.shape
    if rasters.size and (int(rasters.max()) >= n_classes or int(rasters.min()) < 0):
        raise ValueError(f"class ids must lie in 0..{n_classes - 1}")
    counts = np.zeros((n_classes, H * W), dtype=np.int64)
    _count(rasters.reshape(m, H * W), counts)
    return counts


@njit(cache=True)
def _count(flat, counts):
    for i in range(flat.shape[0]):
        for p in range(flat.shape[1]):
            counts[flat[i, p], p] += 1


def train_majority_map(train, n_classes: int | None = None) -> np.ndarray:
    """Most frequent class at every location; ties go to the lowest class id."""
    rasters = _stack(train)
    if len(rasters) == 0:
        raise ValueError("cannot train on an empty dataset")
    n_classes = n_classes or int(rasters.max()) + 1
    counts = class_counts(rasters, n_classes)
    return counts.argmax(axis=0).reshape(rasters.shape[1:]).astype(rasters.dtype)


class ConfusionAccumulator:
    """Pooled confusion counts, rows = prediction, columns = target."""

    def __init__(self, n_classes: int):
        self.n_classes = n_classes
        self.matrix = np.zeros((n_classes, n_classes), dtype=np.int64)

    def add(self, pred, target) -> "ConfusionAccumulator":
        pred, target = np.asarray(pred), np.asarray(target)
        if pred.shape != target.shape:
            raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
        idx = pred.astype(np.int64).ravel() * self.n_classes + target.astype(np.int64).ravel()
        self.matrix += np.bincount(idx, minlength=self.n_classes ** 2).reshape(self.n_classes, self.n_classes)
        return self

    def add_counts(self, pred, target_counts: np.ndarray) -> "ConfusionAccumulator":
        """Add a constant prediction against per-pixel target class counts (see ``class_counts``)."""
        onehot = np.zeros((self.n_classes, pred.size), dtype=np.int64)
        onehot[np.asarray(pred).ravel(), np.arange(pred.size)] = 1
        self.matrix += onehot @ target_counts.T
        return self

    def merge(self, other: "ConfusionAccumulator") -> "ConfusionAccumulator":
        self.matrix += other.matrix
        return self

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def iou(self) -> np.ndarray:
        """Per-class IoU; NaN for classes absent from both prediction and target."""
        tp = np.diag(self.matrix).astype(float)
        union = self.matrix.sum(0) + self.matrix.sum(1) - tp
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, tp / np.maximum(union, 1), np.nan)

    def miou(self) -> float:
        iou = self.iou()
        if np.isnan(iou).all():
            raise ValueError("no class appears in prediction or target")
        return float(np.nanmean(iou))

    def to_csv(self, class_names: dict[int, str] | None = None) -> str:
        names = class_names or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pred\\target", *[names.get(c, str(c)) for c in range(self.n_classes)]])
        for c in range(self.n_classes):
            w.writerow([names.get(c, str(c)), *self.matrix[c].tolist()])
        return buf.getvalue()

    def iou_csv(self, class_names: dict[int, str] | None = None) -> str:
        names = class_names or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "iou"])
        for c, v in enumerate(self.iou()):
            w.writerow([names.get(c, str(c)), "" if np.isnan(v) else repr(float(v))])
        return buf.getvalue()


def confusion(pred, targets, n_classes: int | None = None) -> ConfusionAccumulator:
    pred = np.asarray(pred)
    targets = _stack(targets)
    if targets.shape[1:] != pred.shape:
        raise ValueError(f"prediction {pred.shape} and targets {targets.shape[1:]} differ in size")
    n_classes = n_classes or int(max(pred.max(), targets.max())) + 1
    acc = ConfusionAccumulator(n_classes)
    return acc.add_counts(pred, class_counts(targets, n_classes))


def miou(pred, targets, n_classes: int | None = None) -> float:
    """Pooled mIoU of one fixed prediction against every target raster."""
    return confusion(pred, targets, n_classes).miou()


class SceneReward:
    """Render -> majority map -> mIoU against a fixed target set.

    ``to_attributes`` turns a raw attribute vector into ``SceneAttributes``.
    When ``half_width_frac > 0`` every training image gets its own jittered
    copy of the vector (seeded from the evaluation seed) before rendering.
    """

    def __init__(self, config: SceneConfig, space: AttributeSpace, target: Dataset, m_train: int,
                 to_attributes: Callable[[np.ndarray], SceneAttributes], half_width_frac: float = 0.5):
        if len(target) == 0:
            raise ValueError("target dataset is empty")
        if target.shape != (config.height, config.width):
            raise ValueError("target rasters do not match the scene size")
        if m_train < 1:
            raise ValueError("m_train must be >= 1")
        if not 0.0 <= half_width_frac <= 0.5:
            raise ValueError("half_width_frac must lie in [0, 0.5]")
        self.config = config
        self.space = space
        self.target = target
        self.m_train = m_train
        self.to_attributes = to_attributes
        self.half_width_frac = half_width_frac
        self.n_classes = config.n_classes
        self._target_counts = class_counts(target.rasters, self.n_classes)

    def per_image_attributes(self, values, seed: int) -> list[SceneAttributes]:
        return [self.to_attributes(v) for v in self.per_image_values(values, seed)]

    def per_image_values(self, values, seed: int) -> np.ndarray:
        values = self.space.check(values)
        if self.half_width_frac == 0:
            return np.tile(values, (self.m_train, 1))
        rng = np.random.default_rng([int(seed), 1])
        return self.space.jitter_many(values, rng, self.half_width_frac, self.m_train)

    def render(self, values, seed: int) -> Dataset:
        seeds = image_seeds(seed, self.m_train)
        if hasattr(self.to_attributes, "batch"):
            pc, env = self.to_attributes.batch(self.per_image_values(values, seed))
            rasters = render_arrays(self.config, pc, env, seeds)
        else:
            rasters = render_batch(self.config, self.per_image_attributes(values, seed), seeds)
        return Dataset(rasters, self.to_attributes(self.space.check(values)), seed)

    def evaluate(self, values, seed: int) -> float:
        pred = train_majority_map(self.render(values, seed), self.n_classes)
        return ConfusionAccumulator(self.n_classes).add_counts(pred, self._target_counts).miou()


def make_reward(config: SceneConfig, space: AttributeSpace, validation: Dataset, m_train: int,
                to_attributes: Callable[[np.ndarray], SceneAttributes], half_width_frac: float = 0.5) -> SceneReward:
    return SceneReward(config, space, validation, m_train, to_attributes, half_width_frac)
