"""Viewpoint-aware loss functions with analytic gradients.

Five losses are provided, each returning a :class:`LossResult` carrying the
scalar value and the gradient with respect to every differentiable input:

- ``geometric_loss``: cross-entropy against exponential-decay target weights
  centered on the ground-truth degree class.
- ``contrastive_loss``: Siamese pair loss with a margin on the dissimilar
  branch.
- ``flip_loss``: geometric terms for an image and its horizontal flip, plus
  an L2 consistency term tying the per-degree representation of the image to
  the flip-reindexed representation of its flipped twin.
- ``triplet_loss``: softmax-of-cosine-distance triplet loss with a trainable
  scale on the distances.
- ``viewpoint_loss``: triplet plus weighted flip loss.

``total_loss`` adds four externally supplied detection-loss scalars to the
viewpoint term; the detection losses themselves are not computed here.

Gradient keys name the corresponding keyword argument (``"q"``, ``"logits"``,
``"f1"``, ``"f_ref"``, ...).  Where a loss consumes a probability vector that
came out of a softmax, the gradient with respect to the pre-softmax logits is
also returned, since that is the quantity a trainer backpropagates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DimensionMismatch, NonNormalizedInput, ZeroNormEmbedding
from .viewgeom import CLASS_COUNT, angular_distance, flip_distribution

# Probabilities are clamped to this floor before taking logs; the same
# clamped values appear in the gradient denominators, and entries at or
# below the floor get an exactly-zero gradient (the clamped loss is locally
# constant there).
PROB_FLOOR = 1e-12

# Sum-to-one tolerance used to flag non-normalized probability inputs.
NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class LossResult:
    """Scalar loss value plus gradients keyed by input name."""

    value: float
    gradients: Mapping[str, np.ndarray | float]

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"loss value must be finite, got {self.value!r}")


@dataclass(frozen=True)
class GeometricLossParams:
    """Exponential-decay target parameters.

    ``normalization`` of ``None`` means the weights are normalized by their
    own sum, which makes them a probability distribution and pins the loss
    of a uniform predictor at ln(360).  ``distance_mode`` selects circular
    (default) or literal ``|k_gt - k|`` distance between class indices.
    """

    sigma: float = 3.0
    distance_mode: str = "circular"
    normalization: float | None = None

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.distance_mode not in ("circular", "literal"):
            raise ValueError(f"unknown distance mode {self.distance_mode!r}")
        if self.normalization is not None and self.normalization <= 0:
            raise ValueError("normalization must be positive")


@dataclass(frozen=True)
class ContrastiveParams:
    margin: float = 1.0
    similar_threshold_deg: float = 10.0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")


@dataclass
class TripletScale:
    """Single trainable scalar multiplying cosine distances before softmax."""

    value: float = 1.0


def class_distances(k_gt: int, mode: str = "circular") -> np.ndarray:
    """Distance from every degree class to ``k_gt``, circular or literal."""
    k = np.arange(CLASS_COUNT, dtype=np.float64)
    delta = np.abs(k - float(k_gt))
    if mode == "circular":
        return np.minimum(delta, CLASS_COUNT - delta)
    if mode == "literal":
        return delta
    raise ValueError(f"unknown distance mode {mode!r}")


def geometric_weights(
    k_gt: int, params: GeometricLossParams | None = None
) -> tuple[np.ndarray, float]:
    """Unnormalized decay weights exp(-dist/sigma) and their normalizer."""
    params = params or GeometricLossParams()
    if not 0 <= int(k_gt) < CLASS_COUNT:
        raise ValueError(f"ground-truth class out of range: {k_gt}")
    w = np.exp(-class_distances(int(k_gt), params.distance_mode) / params.sigma)
    c = float(w.sum()) if params.normalization is None else params.normalization
    return w, c


def geometric_loss(
    q: np.ndarray,
    k_gt: int,
    params: GeometricLossParams | None = None,
    check_normalized: bool = True,
) -> LossResult:
    """Decay-weighted cross entropy over the 360 degree classes.

    value = -(1/C) * sum_k exp(-dist(k_gt, k)/sigma) * log q(k)

    Gradients are returned with respect to ``q`` itself and with respect to
    the pre-softmax logits that would have produced ``q`` (valid whenever
    ``q = softmax(z)`` and no entry is clamped at the probability floor).

    ``check_normalized=False`` skips the sum-to-one gate; the value formula
    is unchanged.  This exists so the loss can be probed by coordinate-wise
    finite differences, which perturb entries off the simplex.
    """
    params = params or GeometricLossParams()
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (CLASS_COUNT,):
        raise DimensionMismatch(
            f"expected probability vector of shape ({CLASS_COUNT},), got {q.shape}"
        )
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise NonNormalizedInput("probabilities must be finite and nonnegative")
    total = float(q.sum())
    if check_normalized and abs(total - 1.0) > NORMALIZATION_TOL:
        raise NonNormalizedInput(
            f"probability vector sums to {total!r}; expected 1 within "
            f"{NORMALIZATION_TOL}"
        )

    w, c = geometric_weights(k_gt, params)
    w_hat = w / c
    q_clamped = np.maximum(q, PROB_FLOOR)
    value = -float(np.dot(w_hat, np.log(q_clamped)))

    grad_q = -w_hat / q_clamped
    grad_q[q <= PROB_FLOOR] = 0.0
    # d/dz of -(sum w_hat) log softmax(z) = (sum w_hat) * q - w_hat
    grad_logits = float(w_hat.sum()) * q - w_hat
    return LossResult(value, {"q": grad_q, "logits": grad_logits})


def similar_from_angles(
    a_deg: float, b_deg: float, params: ContrastiveParams | None = None
) -> bool:
    """Pair similarity label: azimuths within the configured threshold."""
    params = params or ContrastiveParams()
    return angular_distance(a_deg, b_deg) <= params.similar_threshold_deg


def _as_embedding(f: np.ndarray, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise DimensionMismatch(f"{name} must be a 1-d vector, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} must be finite")
    return f


def contrastive_loss(
    f1: np.ndarray,
    f2: np.ndarray,
    similar: bool,
    params: ContrastiveParams | None = None,
) -> LossResult:
    """Siamese pair loss: 0.5*D^2 for similar pairs, 0.5*max(0, m-D)^2 else.

    Dissimilar pairs at distance >= m contribute zero value and exactly
    zero gradient.
    """
    params = params or ContrastiveParams()
    f1 = _as_embedding(f1, "f1")
    f2 = _as_embedding(f2, "f2")
    if f1.shape != f2.shape:
        raise DimensionMismatch(f"embedding shapes differ: {f1.shape} vs {f2.shape}")
    diff = f1 - f2
    dist = float(np.linalg.norm(diff))
    if similar:
        value = 0.5 * dist * dist
        g1 = diff.copy()
    else:
        gap = params.margin - dist
        if gap <= 0.0:
            value = 0.0
            g1 = np.zeros_like(diff)
        elif dist == 0.0:
            # Kink of the hinge at coincident embeddings; use subgradient 0.
            value = 0.5 * gap * gap
            g1 = np.zeros_like(diff)
        else:
            value = 0.5 * gap * gap
            g1 = (-gap / dist) * diff
    return LossResult(value, {"f1": g1, "f2": -g1})


def flip_loss(
    q_x: np.ndarray,
    q_xflip: np.ndarray,
    f_x: np.ndarray,
    f_xflip: np.ndarray,
    k_gt: int,
    lambda_flip: float = 1.0,
    params: GeometricLossParams | None = None,
    check_normalized: bool = True,
) -> LossResult:
    """Flip-consistency loss for an image X and its horizontal flip.

    value = geometric(q_x, k_gt) + geometric(q_xflip, flip(k_gt))
            + lambda_flip * ||f_x - flip(f_xflip)||^2

    ``f_x``/``f_xflip`` must be per-degree vectors (length 360); the flip
    operator is only defined for representations indexed by angle.  The label
    of the flipped image is derived internally as (360 - k_gt) mod 360.

    Gradients: ``logits_x``/``logits_xflip`` for the two geometric terms
    (pre-softmax route) and ``f_x``/``f_xflip`` for the L2 term.  When the
    caller uses the same pre-softmax vector as both the logits and the
    per-degree embedding, the total derivative is the sum of the two keys.
    The L2 term is accumulated with ``math.fsum`` so the loss is exactly
    symmetric under exchanging (X, Xflip) with (Xflip, X) plus relabeling.
    """
    if lambda_flip <= 0:
        raise ValueError(f"lambda_flip must be positive, got {lambda_flip}")
    f_x = _as_embedding(f_x, "f_x")
    f_xflip = _as_embedding(f_xflip, "f_xflip")
    if f_x.shape != (CLASS_COUNT,) or f_xflip.shape != (CLASS_COUNT,):
        raise DimensionMismatch(
            "flip loss needs per-degree embeddings of length "
            f"{CLASS_COUNT}, got {f_x.shape} and {f_xflip.shape}"
        )
    k_flip = (CLASS_COUNT - int(k_gt)) % CLASS_COUNT
    geom_x = geometric_loss(q_x, int(k_gt), params, check_normalized)
    geom_xflip = geometric_loss(q_xflip, k_flip, params, check_normalized)

    residual = f_x - flip_distribution(f_xflip)
    consistency = math.fsum(r * r for r in residual)
    value = geom_x.value + geom_xflip.value + lambda_flip * consistency
    grads = {
        "logits_x": geom_x.gradients["logits"],
        "logits_xflip": geom_xflip.gradients["logits"],
        "f_x": 2.0 * lambda_flip * residual,
        "f_xflip": -2.0 * lambda_flip * flip_distribution(residual),
    }
    return LossResult(value, grads)


def cosine_distance(f1: np.ndarray, f2: np.ndarray) -> float:
    """Cosine similarity of two embeddings, in [-1, 1]."""
    value, _, _ = cosine_distance_grad(f1, f2)
    return value


def cosine_distance_grad(
    f1: np.ndarray, f2: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cosine similarity plus gradients with respect to both embeddings."""
    f1 = _as_embedding(f1, "f1")
    f2 = _as_embedding(f2, "f2")
    if f1.shape != f2.shape:
        raise DimensionMismatch(f"embedding shapes differ: {f1.shape} vs {f2.shape}")
    n1 = float(np.linalg.norm(f1))
    n2 = float(np.linalg.norm(f2))
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroNormEmbedding("cosine distance needs nonzero-norm embeddings")
    value = float(np.dot(f1, f2) / (n1 * n2))
    g1 = f2 / (n1 * n2) - (value / (n1 * n1)) * f1
    g2 = f1 / (n1 * n2) - (value / (n2 * n2)) * f2
    return value, g1, g2


def _sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def triplet_loss(
    f_ref: np.ndarray,
    f_pos: np.ndarray,
    f_neg: np.ndarray,
    scale: TripletScale | float = 1.0,
) -> LossResult:
    """Softmax-of-cosine triplet loss with a trainable distance scale.

    With D+ = cos(f_ref, f_pos) and D- = cos(f_ref, f_neg), the pair
    (d+, d-) = softmax(s*D+, s*D-) and

        value = ||(d-, 1 - d+)||^2 = 2 * d-^2

    Cosine similarity means related inputs should satisfy D+ > D-, so the
    penalized coordinate is d- (the roles are switched relative to a
    Euclidean-distance triplet).  Gradients cover all three embeddings and
    the scalar ``scale``.
    """
    s = scale.value if isinstance(scale, TripletScale) else float(scale)
    if not math.isfinite(s):
        raise ValueError(f"scale must be finite, got {s!r}")
    d_pos, gp_ref, gp_pos = cosine_distance_grad(f_ref, f_pos)
    d_neg, gn_ref, gn_neg = cosine_distance_grad(f_ref, f_neg)

    # d_minus = sigmoid(s * (D- - D+)); value = 2 * d_minus^2.
    t = s * (d_neg - d_pos)
    d_minus = _sigmoid(t)
    d_plus = 1.0 - d_minus
    value = 2.0 * d_minus * d_minus
    dvalue_dt = 4.0 * d_minus * d_minus * d_plus

    dv_dpos = -s * dvalue_dt
    dv_dneg = s * dvalue_dt
    grads = {
        "f_ref": dv_dpos * gp_ref + dv_dneg * gn_ref,
        "f_pos": dv_dpos * gp_pos,
        "f_neg": dv_dneg * gn_neg,
        "scale": (d_neg - d_pos) * dvalue_dt,
    }
    return LossResult(value, grads)


def viewpoint_loss(
    f_ref: np.ndarray,
    f_pos: np.ndarray,
    f_neg: np.ndarray,
    q_x: np.ndarray,
    q_xflip: np.ndarray,
    f_x: np.ndarray,
    f_xflip: np.ndarray,
    k_gt: int,
    scale: TripletScale | float = 1.0,
    lambda_vp: float = 5.0,
    lambda_flip: float = 1.0,
    params: GeometricLossParams | None = None,
    check_normalized: bool = True,
) -> LossResult:
    """Combined loss: triplet term plus ``lambda_vp`` times the flip loss.

    In labeled training the flip inputs belong to the same sample as
    ``f_ref``; in video training they belong to a substituted labeled
    sample, since video frames carry no angle label.  If ``f_x`` is the
    very same array object as ``f_ref``, its gradient is summed into
    ``f_ref`` (shared-input aggregation); otherwise all eight gradient
    keys are reported separately.
    """
    if lambda_vp < 0:
        raise ValueError(f"lambda_vp must be nonnegative, got {lambda_vp}")
    trip = triplet_loss(f_ref, f_pos, f_neg, scale)
    flip = flip_loss(
        q_x, q_xflip, f_x, f_xflip, k_gt, lambda_flip, params, check_normalized
    )
    value = trip.value + lambda_vp * flip.value
    grads: dict[str, np.ndarray | float] = dict(trip.gradients)
    scaled_flip = {k: lambda_vp * g for k, g in flip.gradients.items()}
    if f_x is f_ref:
        grads["f_ref"] = grads["f_ref"] + scaled_flip.pop("f_x")
    grads.update(scaled_flip)
    return LossResult(value, grads)


def total_loss(
    detection_terms: tuple[float, float, float, float] | list[float],
    viewpoint: LossResult | float,
) -> float:
    """Sum of the four externally supplied detection losses and the
    viewpoint loss.  The detection terms are opaque scalars here; this
    package never computes them."""
    terms = [float(t) for t in detection_terms]
    if len(terms) != 4:
        raise ValueError(f"expected 4 detection terms, got {len(terms)}")
    if not all(math.isfinite(t) for t in terms):
        raise ValueError("detection terms must be finite")
    vp = viewpoint.value if isinstance(viewpoint, LossResult) else float(viewpoint)
    return math.fsum(terms) + vp
