"""Average View Precision (AVP) evaluation.

A prediction counts as a true positive only if its box overlaps an
unclaimed ground-truth box of the same image with IoU above the threshold
AND its predicted bin equals the bin of the ground-truth azimuth.  AVP is
the area under the resulting viewpoint precision-recall curve; mAVP is the
unweighted mean over classes.

Matching rules:
- Predictions are processed in descending confidence order (stable on ties).
- Each prediction claims the unclaimed same-image ground truth with the
  highest IoU >= threshold.  A claimed-box-but-wrong-bin prediction is a
  false positive and, by default, still consumes the ground truth so it
  cannot be claimed again (``wrong_bin_consumes=False`` restores the
  non-consuming variant).
- Ground truths flagged difficult are excluded from the recall denominator;
  a prediction whose best match is a difficult ground truth is ignored
  entirely (neither TP nor FP) and the difficult box stays claimable.

The area is the all-points area under the monotone precision envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .aggregate import BoundingBox, iou
from .viewgeom import BIN_COUNT, BinConvention, azimuth_to_bin, normalize_azimuth


@dataclass(frozen=True)
class GroundTruthObject:
    image_id: str
    class_id: int
    box: BoundingBox
    azimuth: float
    difficult: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "azimuth", normalize_azimuth(self.azimuth))


@dataclass(frozen=True)
class ScoredPrediction:
    image_id: str
    class_id: int
    box: BoundingBox
    confidence: float
    predicted_bin: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.confidence):
            raise ValueError(f"confidence must be finite, got {self.confidence!r}")


@dataclass(frozen=True)
class VprCurve:
    """Precision-recall points in prediction rank order plus their area."""

    points: tuple[tuple[float, float], ...]
    avp: float
    empty_ground_truth: bool = False

    def recalls(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    def precisions(self) -> np.ndarray:
        return np.array([p for _, p in self.points])


def envelope_area(points: Sequence[tuple[float, float]]) -> float:
    """All-points area under the monotone precision envelope of a PR curve."""
    if not points:
        return 0.0
    rec = np.concatenate(([0.0], [r for r, _ in points], [1.0]))
    pre = np.concatenate(([0.0], [p for _, p in points], [0.0]))
    for i in range(pre.size - 1, 0, -1):
        pre[i - 1] = max(pre[i - 1], pre[i])
    steps = np.nonzero(rec[1:] != rec[:-1])[0]
    return float(np.sum((rec[steps + 1] - rec[steps]) * pre[steps + 1]))


def match_and_score(
    predictions: Sequence[ScoredPrediction],
    ground_truths: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    n_bins: int = BIN_COUNT,
    convention: BinConvention = "centered",
    wrong_bin_consumes: bool = True,
    ignore_viewpoint: bool = False,
) -> VprCurve:
    """Match one class's predictions against ground truth and build the
    viewpoint PR curve.

    ``ignore_viewpoint=True`` drops the bin-correctness conjunct, which
    turns the result into plain detection AP on identical matching; AVP can
    never exceed it.

    With no non-difficult ground truth the curve is empty, AVP is defined
    as 0, and ``empty_ground_truth`` is flagged.
    """
    classes = {p.class_id for p in predictions} | {g.class_id for g in ground_truths}
    if len(classes) > 1:
        raise ValueError(
            f"evaluation expects a single class, got class ids {sorted(classes)}"
        )

    n_positive = sum(1 for g in ground_truths if not g.difficult)
    if n_positive == 0:
        return VprCurve(points=(), avp=0.0, empty_ground_truth=True)

    by_image: dict[str, list[int]] = {}
    for gi, gt in enumerate(ground_truths):
        by_image.setdefault(gt.image_id, []).append(gi)
    claimed = [False] * len(ground_truths)

    order = sorted(
        range(len(predictions)), key=lambda i: (-predictions[i].confidence, i)
    )
    points: list[tuple[float, float]] = []
    tp = 0
    fp = 0
    for pi in order:
        pred = predictions[pi]
        best_gi = -1
        best_iou = iou_threshold
        for gi in by_image.get(pred.image_id, ()):
            if claimed[gi]:
                continue
            overlap = iou(pred.box, ground_truths[gi].box)
            if overlap > best_iou or (overlap == best_iou and overlap > 0 and best_gi < 0):
                best_iou = overlap
                best_gi = gi
        if best_gi >= 0 and ground_truths[best_gi].difficult:
            # Difficult boxes are neither rewarded nor penalized.
            continue
        if best_gi < 0:
            fp += 1
        else:
            gt = ground_truths[best_gi]
            correct = ignore_viewpoint or (
                azimuth_to_bin(gt.azimuth, convention, n_bins) == pred.predicted_bin
            )
            if correct:
                tp += 1
                claimed[best_gi] = True
            else:
                fp += 1
                if wrong_bin_consumes:
                    claimed[best_gi] = True
        points.append((tp / n_positive, tp / (tp + fp)))

    return VprCurve(points=tuple(points), avp=envelope_area(points))


def mean_avp(avps: Iterable[float] | Mapping[int, float]) -> float:
    """Unweighted mean of per-class AVP values."""
    values = list(avps.values()) if isinstance(avps, Mapping) else list(avps)
    if not values:
        raise ValueError("mean AVP needs at least one class")
    return math.fsum(float(v) for v in values) / len(values)


def evaluate_classes(
    predictions: Sequence[ScoredPrediction],
    ground_truths: Sequence[GroundTruthObject],
    iou_threshold: float = 0.5,
    n_bins: int = BIN_COUNT,
    convention: BinConvention = "centered",
    wrong_bin_consumes: bool = True,
) -> dict[int, VprCurve]:
    """Split mixed-class inputs by class id and evaluate each class.

    Classes present only in the predictions get an empty-ground-truth curve.
    """
    class_ids = sorted(
        {p.class_id for p in predictions} | {g.class_id for g in ground_truths}
    )
    out: dict[int, VprCurve] = {}
    for cid in class_ids:
        out[cid] = match_and_score(
            [p for p in predictions if p.class_id == cid],
            [g for g in ground_truths if g.class_id == cid],
            iou_threshold=iou_threshold,
            n_bins=n_bins,
            convention=convention,
            wrong_bin_consumes=wrong_bin_consumes,
        )
    return out
