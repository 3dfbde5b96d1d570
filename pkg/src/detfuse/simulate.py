"""Seeded synthetic detector benchmark.

Ground truth is generated inside a nominal 1024x1024 frame, then perturbed
into per-model prediction sets by parameterized pseudo-detectors (miss rate,
Poisson false positives, corner jitter, separate true/false score
distributions truncated to (0, 1]). Everything is driven by NumPy's PCG64
generator through SeedSequence-derived substreams, one per (purpose, image),
so results are reproducible bit for bit and independent of scheduling.

A detector's stream is keyed by its error parameters, not by its name or
position: two profiles with identical parameters are the same simulated
detector and produce identical outputs, which is what makes the duplicated-
profile degenerate benchmark collapse onto the solo result.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fusion import METHODS, FusionConfig, fuse
from .geometry import Box, iou
from .interchange import Detection, DetectionSet, GroundTruth, LABEL_FRACTURE
from .metrics import AP_RANGE_THRESHOLDS, EvalReport, evaluate_predictions, render_table

GENERATOR_NAME = "PCG64 (numpy.random.default_rng with SeedSequence substreams)"
DEFAULT_PREVALENCE = 117.0 / 207.0

_SEED_MASK = (1 << 64) - 1
_GT_STREAM = 0
_DET_STREAM = 1


@dataclass(frozen=True)
class ScoreModel:
    """Mean/spread of a score distribution, truncated to (0, 1] when sampled."""

    mean: float
    spread: float

    def __post_init__(self) -> None:
        if not (0.0 < self.mean < 1.0):
            raise ValueError(f"score mean must be in (0, 1), got {self.mean}")
        if self.spread < 0.0:
            raise ValueError(f"score spread must be >= 0, got {self.spread}")


@dataclass(frozen=True)
class DetectorProfile:
    """Error model of one pseudo-detector."""

    model_id: str
    p_miss: float
    fp_rate: float
    jitter_frac: float
    tp_score: ScoreModel
    fp_score: ScoreModel

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if not (0.0 <= self.p_miss <= 1.0):
            raise ValueError(f"p_miss must be in [0, 1], got {self.p_miss}")
        if self.fp_rate < 0.0:
            raise ValueError(f"fp_rate must be >= 0, got {self.fp_rate}")
        if self.jitter_frac < 0.0:
            raise ValueError(f"jitter_frac must be >= 0, got {self.jitter_frac}")
        if not self.tp_score.mean > self.fp_score.mean:
            raise ValueError(
                "profile must be better than chance: tp_score mean "
                f"{self.tp_score.mean} must exceed fp_score mean {self.fp_score.mean}"
            )

    def error_signature(self) -> tuple[float, ...]:
        """Parameters that define this detector's behaviour (name excluded)."""
        return (
            self.p_miss,
            self.fp_rate,
            self.jitter_frac,
            self.tp_score.mean,
            self.tp_score.spread,
            self.fp_score.mean,
            self.fp_score.spread,
        )


@dataclass(frozen=True)
class BoxGeometry:
    """Size/placement model for generated boxes inside the square frame."""

    frame_size: float = 1024.0
    min_side: float = 60.0
    max_side: float = 280.0
    two_box_prob: float = 0.3

    def __post_init__(self) -> None:
        if not (0.0 < self.min_side <= self.max_side < self.frame_size):
            raise ValueError("need 0 < min_side <= max_side < frame_size")
        if not (0.0 <= self.two_box_prob <= 1.0):
            raise ValueError("two_box_prob must be in [0, 1]")


def _image_rng(seed: int, stream: int, image_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed & _SEED_MASK, stream, image_index)))


def _random_box(rng: np.random.Generator, geometry: BoxGeometry) -> Box:
    w = rng.uniform(geometry.min_side, geometry.max_side)
    h = rng.uniform(geometry.min_side, geometry.max_side)
    x1 = rng.uniform(0.0, geometry.frame_size - w)
    y1 = rng.uniform(0.0, geometry.frame_size - h)
    return Box(x1, y1, x1 + w, y1 + h)


def generate_corpus(
    seed: int,
    n_images: int,
    fracture_prevalence: float = DEFAULT_PREVALENCE,
    geometry: BoxGeometry = BoxGeometry(),
) -> dict[str, GroundTruth]:
    """Generate ground truth: each image is independently fracture-positive with
    the given prevalence; positive images carry 1-2 non-overlapping boxes."""
    if n_images < 1:
        raise ValueError(f"n_images must be >= 1, got {n_images}")
    if not (0.0 < fracture_prevalence <= 1.0):
        raise ValueError(f"fracture_prevalence must be in (0, 1], got {fracture_prevalence}")

    out: dict[str, GroundTruth] = {}
    for i in range(n_images):
        image_id = f"img_{i:05d}"
        rng = _image_rng(seed, _GT_STREAM, i)
        boxes: tuple[Box, ...] = ()
        if rng.random() < fracture_prevalence:
            first = _random_box(rng, geometry)
            boxes = (first,)
            if rng.random() < geometry.two_box_prob:
                for _ in range(10000):
                    second = _random_box(rng, geometry)
                    if iou(first, second) == 0.0:
                        boxes = (first, second)
                        break
                else:
                    raise RuntimeError("could not place a disjoint second box; geometry too tight")
        out[image_id] = GroundTruth(image_id, boxes)
    return out


def _draw_score(rng: np.random.Generator, model: ScoreModel) -> float:
    if model.spread == 0.0:
        return model.mean
    for _ in range(100000):
        v = rng.normal(model.mean, model.spread)
        if 0.0 < v <= 1.0:
            return float(v)
    raise RuntimeError(f"score distribution {model} rejected too many draws")


def _jitter_box(rng: np.random.Generator, box: Box, frac: float, frame: float) -> Box:
    if frac == 0.0:
        return box
    sx = frac * box.width
    sy = frac * box.height
    x1 = box.x1 + rng.normal(0.0, sx)
    y1 = box.y1 + rng.normal(0.0, sy)
    x2 = box.x2 + rng.normal(0.0, sx)
    y2 = box.y2 + rng.normal(0.0, sy)
    # Clamp into the frame while keeping at least a 1px side.
    x1 = min(max(x1, 0.0), frame - 1.0)
    y1 = min(max(y1, 0.0), frame - 1.0)
    x2 = min(max(x2, x1 + 1.0), frame)
    y2 = min(max(y2, y1 + 1.0), frame)
    return Box(x1, y1, x2, y2)


def simulate_detector(
    ground_truth: Mapping[str, GroundTruth],
    profile: DetectorProfile,
    seed: int,
    geometry: BoxGeometry = BoxGeometry(),
) -> list[DetectionSet]:
    """Perturb ground truth into one model's predictions, one set per image."""
    out = []
    for i, (image_id, gt) in enumerate(ground_truth.items()):
        rng = _image_rng(seed, _DET_STREAM, i)
        dets = []
        for box in gt.boxes:
            if rng.random() < profile.p_miss:
                continue
            jittered = _jitter_box(rng, box, profile.jitter_frac, geometry.frame_size)
            dets.append(
                Detection(jittered, _draw_score(rng, profile.tp_score),
                          LABEL_FRACTURE, profile.model_id)
            )
        for _ in range(rng.poisson(profile.fp_rate)):
            spurious = _random_box(rng, geometry)
            dets.append(
                Detection(spurious, _draw_score(rng, profile.fp_score),
                          LABEL_FRACTURE, profile.model_id)
            )
        out.append(DetectionSet(image_id, profile.model_id, tuple(dets)))
    return out


def profile_seed(run_seed: int, profile: DetectorProfile) -> int:
    """Derive a detector stream seed from the run seed and the profile's error
    parameters. model_id is deliberately excluded (see module docstring)."""
    material = repr((run_seed & _SEED_MASK,) + profile.error_signature()).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


@dataclass(frozen=True)
class BenchConfig:
    seed: int
    n_images: int
    profiles: tuple[DetectorProfile, ...]
    prevalence: float = DEFAULT_PREVALENCE
    geometry: BoxGeometry = BoxGeometry()
    fusion_iou_threshold: float = 0.5
    decision_threshold: float = 0.5
    ap_thresholds: tuple[float, ...] = AP_RANGE_THRESHOLDS

    def __post_init__(self) -> None:
        if len(self.profiles) < 2:
            raise ValueError("benchmark needs at least 2 detector profiles")
        ids = [p.model_id for p in self.profiles]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate profile model_id in {ids}")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "BenchConfig":
        def score_model(d: Mapping) -> ScoreModel:
            return ScoreModel(float(d["mean"]), float(d["spread"]))

        profiles = tuple(
            DetectorProfile(
                model_id=str(p["model_id"]),
                p_miss=float(p["p_miss"]),
                fp_rate=float(p["fp_rate"]),
                jitter_frac=float(p["jitter_frac"]),
                tp_score=score_model(p["tp_score"]),
                fp_score=score_model(p["fp_score"]),
            )
            for p in raw["profiles"]
        )
        geometry = BoxGeometry(**raw.get("geometry", {}))
        return cls(
            seed=int(raw["seed"]),
            n_images=int(raw["n_images"]),
            profiles=profiles,
            prevalence=float(raw.get("prevalence", DEFAULT_PREVALENCE)),
            geometry=geometry,
            fusion_iou_threshold=float(raw.get("fusion_iou_threshold", 0.5)),
            decision_threshold=float(raw.get("decision_threshold", 0.5)),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_images": self.n_images,
            "prevalence": self.prevalence,
            "fusion_iou_threshold": self.fusion_iou_threshold,
            "decision_threshold": self.decision_threshold,
            "geometry": {
                "frame_size": self.geometry.frame_size,
                "min_side": self.geometry.min_side,
                "max_side": self.geometry.max_side,
                "two_box_prob": self.geometry.two_box_prob,
            },
            "profiles": [
                {
                    "model_id": p.model_id,
                    "p_miss": p.p_miss,
                    "fp_rate": p.fp_rate,
                    "jitter_frac": p.jitter_frac,
                    "tp_score": {"mean": p.tp_score.mean, "spread": p.tp_score.spread},
                    "fp_score": {"mean": p.fp_score.mean, "spread": p.fp_score.spread},
                }
                for p in self.profiles
            ],
        }


@dataclass(frozen=True)
class BenchRun:
    """One completed benchmark: ground truth, per-model predictions, and the
    solo/ensemble evaluation reports."""

    config: BenchConfig
    ground_truth: dict[str, GroundTruth]
    predictions: dict[str, list[DetectionSet]]
    solo: dict[str, EvalReport]
    ensemble: dict[str, EvalReport]

    def summary_table(self) -> str:
        rows = [(f"solo:{m}", r) for m, r in self.solo.items()]
        rows += [(f"ensemble:{m}", self.ensemble[m]) for m in METHODS]
        header = f"generator: {GENERATOR_NAME}\nseed: {self.config.seed}  images: {self.config.n_images}\n"
        return header + render_table(rows, name_header="Source")

    def to_dict(self) -> dict:
        return {
            "format_version": "1",
            "generator": GENERATOR_NAME,
            "config": self.config.to_dict(),
            "solo": {m: r.to_dict() for m, r in self.solo.items()},
            "ensemble": {m: r.to_dict() for m, r in self.ensemble.items()},
        }


def _preds_by_image(sets: Sequence[DetectionSet]) -> dict[str, tuple[Detection, ...]]:
    return {ds.image_id: ds.detections for ds in sets}


def run_bench(config: BenchConfig) -> BenchRun:
    """Generate a corpus, simulate every profile, evaluate each solo model and
    each fusion method over the ensemble."""
    ground_truth = generate_corpus(config.seed, config.n_images, config.prevalence, config.geometry)
    predictions = {
        p.model_id: simulate_detector(ground_truth, p, profile_seed(config.seed, p), config.geometry)
        for p in config.profiles
    }

    solo = {
        model_id: evaluate_predictions(
            _preds_by_image(sets),
            ground_truth,
            config.decision_threshold,
            config.ap_thresholds,
        )
        for model_id, sets in predictions.items()
    }

    per_model = list(predictions.values())
    ensemble = {}
    for method in METHODS:
        fusion_config = FusionConfig(method=method, iou_threshold=config.fusion_iou_threshold)
        fused_by_image = {}
        for i, image_id in enumerate(ground_truth):
            inputs = [sets[i] for sets in per_model]
            fused_by_image[image_id] = fuse(inputs, fusion_config)
        ensemble[method] = evaluate_predictions(
            fused_by_image, ground_truth, config.decision_threshold, config.ap_thresholds
        )
    return BenchRun(config, ground_truth, predictions, solo, ensemble)


def load_bench_config(data: bytes | str) -> BenchConfig:
    raw = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    if not isinstance(raw, Mapping):
        raise ValueError("bench config must be a JSON object")
    try:
        return BenchConfig.from_dict(raw)
    except KeyError as exc:
        raise ValueError(f"bench config missing required field {exc.args[0]!r}") from None
