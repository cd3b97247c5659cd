"""Grouping of overlapping detections and viewpoint score fusion.

Overlapping same-class detections are grouped greedily: the highest-scoring
box becomes the group representative and absorbs every remaining box whose
IoU with it exceeds the threshold.  A group's viewpoint score is the sum of
its members' per-degree distributions weighted by their classification
scores.  The predicted bin is then chosen either by total score mass inside
each bin (integral rule) or by the bin containing the single strongest
degree (max-activation rule, the baseline behavior).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllZeroScore, EmptyGroup
from .viewgeom import (
    BIN_COUNT,
    CLASS_COUNT,
    BinConvention,
    _class_bins_cached,
    validate_distribution,
)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner plus positive width/height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive dimensions, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    """One detector output: box, class, class score, viewpoint distribution."""

    box: BoundingBox
    class_id: int
    class_score: float
    viewpoint: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.class_score <= 1.0:
            raise ValueError(f"class score must be in [0, 1], got {self.class_score}")
        object.__setattr__(
            self, "viewpoint", validate_distribution(self.viewpoint, normalized=True)
        )


@dataclass(frozen=True)
class FusedDetection:
    """A detection group collapsed to one box and one fused score vector."""

    box: BoundingBox
    class_id: int
    score: np.ndarray
    member_count: int

    def normalized_score(self) -> np.ndarray:
        """Unit-sum view of the fused score, for display only; bin selection
        operates on the raw sums."""
        total = float(self.score.sum())
        if total <= 0:
            raise AllZeroScore("cannot normalize an all-zero fused score")
        return self.score / total


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def group_detections(
    detections: Sequence[Detection], threshold: float = 0.5
) -> list[list[Detection]]:
    """Greedy same-class grouping around the highest-scoring boxes.

    Detections are swept in descending class-score order (ties keep input
    order).  The first unconsumed detection opens a group as its
    representative; every remaining detection with IoU above ``threshold``
    against the representative joins that group.  The returned groups
    partition the input; each group lists its representative first.
    """
    if not detections:
        return []
    classes = {d.class_id for d in detections}
    if len(classes) > 1:
        raise ValueError(
            f"grouping expects a single class, got class ids {sorted(classes)}"
        )
    order = sorted(
        range(len(detections)), key=lambda i: (-detections[i].class_score, i)
    )
    consumed = [False] * len(detections)
    groups: list[list[Detection]] = []
    for i in order:
        if consumed[i]:
            continue
        rep = detections[i]
        consumed[i] = True
        group = [rep]
        for j in order:
            if consumed[j]:
                continue
            if iou(rep.box, detections[j].box) > threshold:
                consumed[j] = True
                group.append(detections[j])
        groups.append(group)
    return groups


def fuse_group(group: Sequence[Detection]) -> FusedDetection:
    """Fuse a group: score[k] = sum_i class_score_i * viewpoint_i[k].

    The representative box/class comes from the member with the highest
    class score (first occurrence on ties).  Score entries are accumulated
    with ``math.fsum``, so the result is exactly invariant to member order.
    """
    if not group:
        raise EmptyGroup("cannot fuse an empty detection group")
    classes = {d.class_id for d in group}
    if len(classes) > 1:
        raise ValueError(f"group mixes class ids {sorted(classes)}")
    rep = max(range(len(group)), key=lambda i: (group[i].class_score, -i))
    if len(group) == 1:
        score = group[0].class_score * group[0].viewpoint
    else:
        weighted = [d.class_score * d.viewpoint for d in group]
        score = np.array(
            [math.fsum(row[k] for row in weighted) for k in range(CLASS_COUNT)]
        )
    return FusedDetection(
        box=group[rep].box,
        class_id=group[rep].class_id,
        score=score,
        member_count=len(group),
    )


def _checked_score(fused: FusedDetection | np.ndarray) -> np.ndarray:
    score = fused.score if isinstance(fused, FusedDetection) else np.asarray(fused)
    if score.shape != (CLASS_COUNT,):
        raise ValueError(f"expected score of shape ({CLASS_COUNT},), got {score.shape}")
    if np.any(score < 0):
        raise ValueError("fused scores must be nonnegative")
    if not np.any(score > 0):
        raise AllZeroScore("bin selection needs at least one positive score")
    return score


def bin_masses(
    fused: FusedDetection | np.ndarray,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> np.ndarray:
    """Total score mass inside each bin."""
    score = _checked_score(fused)
    bins = _class_bins_cached(convention, n_bins)
    return np.bincount(bins, weights=score, minlength=n_bins)


def select_bin_integral(
    fused: FusedDetection | np.ndarray,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> tuple[int, float]:
    """Predicted bin by summed score mass; ties go to the lowest bin index.

    Returns the winning bin and its mass.
    """
    masses = bin_masses(fused, convention, n_bins)
    best = int(np.argmax(masses))
    return best, float(masses[best])


def select_bin_max_activation(
    fused: FusedDetection | np.ndarray,
    convention: BinConvention = "centered",
    n_bins: int = BIN_COUNT,
) -> int:
    """Predicted bin of the single strongest degree class (baseline rule);
    ties go to the lowest class index."""
    score = _checked_score(fused)
    bins = _class_bins_cached(convention, n_bins)
    return int(bins[int(np.argmax(score))])
