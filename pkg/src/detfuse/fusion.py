"""Box-level fusion of multi-model detections for a single image.

Four strategies over the flat pool of detections from all models:

* ``nms``      -- greedy selection; overlapping lower-score boxes are removed.
* ``soft_nms`` -- overlapping boxes survive with decayed scores (linear or
                  gaussian decay) and are pruned only below a score floor.
* ``wbf``      -- overlapping boxes merge into score-weighted corner averages;
                  fused score is the mean weighted score, optionally rescaled
                  by min(n, T)/T for T models.
* ``nmw``      -- like wbf, but members are weighted by score * IoU against the
                  cluster's best box, which also supplies the fused score, so a
                  low-confidence loosely-overlapping box pulls the result only
                  weakly.

Conventions shared by every method (and asserted against independent
reference implementations in the test suite):

* suppression/merging requires IoU strictly greater than the threshold;
* processing and tie-breaking order is (score desc, model position in the
  input, detection index), which makes outputs bit-reproducible;
* fused coordinates are clamped into the coordinate-wise envelope of their
  cluster members, so float rounding can never push a box outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .geometry import Box, iou
from .interchange import Detection, DetectionSet

METHODS = ("nms", "soft_nms", "wbf", "nmw")
SOFT_MODES = ("linear", "gaussian")


@dataclass(frozen=True)
class FusionConfig:
    """Knobs for one fusion run; validated on construction."""

    method: str
    iou_threshold: float = 0.5
    soft_mode: str = "linear"
    sigma: float = 0.5
    score_prune: float = 0.001
    model_weights: Mapping[str, float] | None = None
    score_rescale: bool = True

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown fusion method {self.method!r}; choose from {METHODS}")
        if not (0.0 < self.iou_threshold < 1.0):
            raise ValueError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if self.soft_mode not in SOFT_MODES:
            raise ValueError(f"soft_mode must be one of {SOFT_MODES}, got {self.soft_mode!r}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.score_prune < 1.0):
            raise ValueError(f"score_prune must be in [0, 1), got {self.score_prune}")
        if self.model_weights is not None:
            for model_id, w in self.model_weights.items():
                if not (isinstance(w, (int, float)) and math.isfinite(w) and w > 0):
                    raise ValueError(f"model weight for {model_id!r} must be positive, got {w!r}")


@dataclass(frozen=True)
class FusedDetection:
    """One fused output box with its merge provenance."""

    box: Box
    score: float
    cluster_size: int
    source_models: frozenset[str]

    def __post_init__(self) -> None:
        if self.cluster_size < 1:
            raise ValueError("cluster_size must be >= 1")
        if not self.source_models:
            raise ValueError("source_models must be non-empty")


@dataclass
class _Entry:
    """A detection tagged with its deterministic processing identity."""

    det: Detection
    model_pos: int
    det_idx: int
    wscore: float  # score after model weighting; equals score unless weighted

    @property
    def box(self) -> Box:
        return self.det.box

    @property
    def score(self) -> float:
        return self.det.score

    def order_key(self, score: float | None = None):
        s = self.score if score is None else score
        return (-s, self.model_pos, self.det_idx)


def _flatten(inputs: Sequence[DetectionSet]) -> list[_Entry]:
    entries = []
    for pos, ds in enumerate(inputs):
        for idx, det in enumerate(ds.detections):
            entries.append(_Entry(det, pos, idx, det.score))
    return entries


def fuse(inputs: Sequence[DetectionSet], config: FusionConfig) -> list[FusedDetection]:
    """Fuse per-model detection sets for one image with the configured method.

    Output is sorted by score descending with the documented deterministic
    tie-break. An empty input list is an error; empty sets are fine and an
    all-empty input yields an empty result.
    """
    if not inputs:
        raise ValueError("fuse requires at least one detection set")
    image_ids = {ds.image_id for ds in inputs}
    if len(image_ids) != 1:
        raise ValueError(f"detection sets span multiple images: {sorted(image_ids)}")

    if config.method == "nms":
        fused = _nms(_flatten(inputs), config.iou_threshold)
    elif config.method == "soft_nms":
        fused = _soft_nms(
            _flatten(inputs),
            config.iou_threshold,
            config.soft_mode,
            config.sigma,
            config.score_prune,
        )
    elif config.method == "wbf":
        fused = _wbf(
            inputs, config.iou_threshold, config.model_weights, config.score_rescale
        )
    else:
        fused = _nmw(inputs, config.iou_threshold)
    return fused


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> list[FusedDetection]:
    """Greedy NMS over a flat detection list (list order is the tie-break order)."""
    entries = [_Entry(d, 0, i, d.score) for i, d in enumerate(dets)]
    return _nms(entries, iou_threshold)


def soft_nms(
    dets: Sequence[Detection],
    iou_threshold: float = 0.5,
    mode: str = "linear",
    sigma: float = 0.5,
    score_prune: float = 0.001,
) -> list[FusedDetection]:
    """Soft-NMS over a flat detection list; survivors carry decayed scores."""
    entries = [_Entry(d, 0, i, d.score) for i, d in enumerate(dets)]
    return _soft_nms(entries, iou_threshold, mode, sigma, score_prune)


def wbf(
    inputs: Sequence[DetectionSet],
    iou_threshold: float = 0.5,
    model_weights: Mapping[str, float] | None = None,
    score_rescale: bool = True,
) -> list[FusedDetection]:
    return _wbf(inputs, iou_threshold, model_weights, score_rescale)


def nmw(inputs: Sequence[DetectionSet], iou_threshold: float = 0.5) -> list[FusedDetection]:
    return _nmw(inputs, iou_threshold)


def _models(entries: Sequence[_Entry]) -> frozenset[str]:
    return frozenset(e.det.model_id for e in entries)


def _nms(entries: list[_Entry], iou_threshold: float) -> list[FusedDetection]:
    remaining = sorted(entries, key=_Entry.order_key)
    out = []
    while remaining:
        best = remaining[0]
        cluster = [best]
        survivors = []
        for e in remaining[1:]:
            if iou(e.box, best.box) > iou_threshold:
                cluster.append(e)
            else:
                survivors.append(e)
        out.append(FusedDetection(best.box, best.score, len(cluster), _models(cluster)))
        remaining = survivors
    return out


def _soft_nms(
    entries: list[_Entry],
    iou_threshold: float,
    mode: str,
    sigma: float,
    score_prune: float,
) -> list[FusedDetection]:
    pool = [(e, e.score) for e in entries]
    out = []
    while pool:
        pool.sort(key=lambda pair: pair[0].order_key(pair[1]))
        best, best_score = pool.pop(0)
        out.append(FusedDetection(best.box, best_score, 1, _models([best])))
        decayed = []
        for e, s in pool:
            o = iou(e.box, best.box)
            if mode == "linear":
                if o > iou_threshold:
                    s = s * (1.0 - o)
            else:
                if o > 0.0:
                    s = s * math.exp(-(o * o) / sigma)
            if s >= score_prune:
                decayed.append((e, s))
        pool = decayed
    return out


@dataclass
class _Cluster:
    """Running weighted-average cluster; the fused box is recomputed on every join."""

    members: list[_Entry] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    fused: Box | None = None

    def add(self, entry: _Entry, weight: float) -> None:
        self.members.append(entry)
        self.weights.append(weight)
        self.fused = _weighted_box(self.members, self.weights)


def _weighted_box(members: Sequence[_Entry], weights: Sequence[float]) -> Box:
    """Weight-averaged corners clamped into the members' min/max envelope.

    A cluster whose weights are all zero (every member scored 0) falls back to
    the unweighted mean. The clamp makes the envelope invariant exact: an
    average of identical boxes is that box, bit for bit.
    """
    total = math.fsum(weights)
    coords = []
    for k in range(4):
        values = [m.box.corners()[k] for m in members]
        if total > 0.0:
            avg = math.fsum(w * v for w, v in zip(weights, values)) / total
        else:
            avg = math.fsum(values) / len(values)
        coords.append(min(max(avg, min(values)), max(values)))
    return Box(*coords)


def _finish_clusters(clusters: list[_Cluster], scores: list[float]) -> list[FusedDetection]:
    out = [
        FusedDetection(cl.fused, score, len(cl.members), _models(cl.members))
        for cl, score in zip(clusters, scores)
    ]
    order = sorted(
        range(len(out)),
        key=lambda i: (-out[i].score, clusters[i].members[0].model_pos, clusters[i].members[0].det_idx),
    )
    return [out[i] for i in order]


def _wbf(
    inputs: Sequence[DetectionSet],
    iou_threshold: float,
    model_weights: Mapping[str, float] | None,
    score_rescale: bool,
) -> list[FusedDetection]:
    n_models = len(inputs)
    weights = model_weights or {}
    raw = [float(weights.get(ds.model_id, 1.0)) for ds in inputs]
    # Normalizing by the largest weight keeps weighted scores (and therefore
    # fused scores) inside [0, 1] and makes the weighting scale-invariant.
    wmax = max(raw)
    eff = [w / wmax for w in raw]

    entries = _flatten(inputs)
    for e in entries:
        e.wscore = e.score * eff[e.model_pos]
    entries.sort(key=lambda e: (-e.wscore, e.model_pos, e.det_idx))

    clusters: list[_Cluster] = []
    for e in entries:
        for cl in clusters:
            if iou(e.box, cl.fused) > iou_threshold:
                cl.add(e, e.wscore)
                break
        else:
            fresh = _Cluster()
            fresh.add(e, e.wscore)
            clusters.append(fresh)

    scores = []
    for cl in clusters:
        n = len(cl.members)
        score = math.fsum(m.wscore for m in cl.members) / n
        if score_rescale:
            score = score * min(n, n_models) / n_models
        scores.append(score)
    return _finish_clusters(clusters, scores)


def _nmw(inputs: Sequence[DetectionSet], iou_threshold: float) -> list[FusedDetection]:
    entries = sorted(_flatten(inputs), key=_Entry.order_key)

    clusters: list[_Cluster] = []
    for e in entries:
        for cl in clusters:
            if iou(e.box, cl.fused) > iou_threshold:
                # Best member is the seed: processing order is score-descending.
                cl.add(e, e.score * iou(e.box, cl.members[0].box))
                break
        else:
            fresh = _Cluster()
            fresh.add(e, e.score * 1.0)
            clusters.append(fresh)

    scores = [cl.members[0].score for cl in clusters]
    return _finish_clusters(clusters, scores)
