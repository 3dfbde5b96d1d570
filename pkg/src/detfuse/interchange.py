"""Interchange JSON formats for per-model detections and ground truth.

Two file schemas, both UTF-8 JSON with an explicit ``format_version``:

Prediction file::

    { "format_version": "1",
      "records": [ { "image_id": str, "model_id": str,
                     "detections": [ { "bbox": [x1, y1, x2, y2],
                                       "score": number, "label": "fracture" } ] } ] }

Ground-truth file::

    { "format_version": "1",
      "images": [ { "image_id": str, "boxes": [ [x1, y1, x2, y2], ... ] } ] }

Boxes are stored in corner (x1, y1, x2, y2) format. Validation is total: no
invalid box, score, or label survives past the parse boundary, and a model that
found nothing on an image is an explicit empty record, never a missing one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .geometry import Box

FORMAT_VERSION = "1"
LABEL_FRACTURE = "fracture"
LABEL_NON_FRACTURE = "non-fracture"
KNOWN_LABELS = (LABEL_FRACTURE,)


class InterchangeError(ValueError):
    """Base class for interchange file problems."""


class ParseError(InterchangeError):
    """Input is not well-formed JSON; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class ValidationError(InterchangeError):
    """Well-formed JSON that violates the interchange schema."""


@dataclass(frozen=True, slots=True)
class Detection:
    """One detector output: a box with its confidence, class label, and source model."""

    box: Box
    score: float
    label: str = LABEL_FRACTURE
    model_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"score out of range [0, 1]: {self.score}")
        if self.label not in KNOWN_LABELS:
            raise ValidationError(f"unknown label {self.label!r}; known: {KNOWN_LABELS}")


@dataclass(frozen=True)
class DetectionSet:
    """All detections for one image from one model; empty means the model saw
    the image and found nothing."""

    image_id: str
    model_id: str
    detections: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if not self.model_id:
            raise ValidationError("model_id must be non-empty")
        object.__setattr__(self, "detections", tuple(self.detections))
        for det in self.detections:
            if det.model_id != self.model_id:
                raise ValidationError(
                    f"detection model_id {det.model_id!r} does not match set "
                    f"model_id {self.model_id!r}"
                )


@dataclass(frozen=True)
class GroundTruth:
    """Annotated boxes for one image; the image-level label is derived, never stored."""

    image_id: str
    boxes: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @property
    def image_label(self) -> str:
        return LABEL_FRACTURE if self.boxes else LABEL_NON_FRACTURE


@dataclass(frozen=True)
class Corpus:
    """A full evaluation corpus: image list, ground truth, and a complete
    (image, model) prediction grid with explicit empty sets where a model
    produced nothing."""

    images: tuple[str, ...]
    ground_truth: Mapping[str, GroundTruth]
    predictions: Mapping[tuple[str, str], DetectionSet]
    model_ids: tuple[str, ...] = field(default=())

    def sets_for_image(self, image_id: str) -> list[DetectionSet]:
        return [self.predictions[(image_id, m)] for m in self.model_ids]


def build_corpus(
    ground_truth: Mapping[str, GroundTruth],
    prediction_sets: Iterable[DetectionSet],
) -> Corpus:
    """Assemble a Corpus, filling in explicit empty sets for missing (image, model) pairs."""
    images = tuple(ground_truth.keys())
    known = set(images)
    model_ids: list[str] = []
    grid: dict[tuple[str, str], DetectionSet] = {}
    for ds in prediction_sets:
        if ds.image_id not in known:
            raise ValidationError(f"prediction for unknown image_id {ds.image_id!r}")
        if ds.model_id not in model_ids:
            model_ids.append(ds.model_id)
        key = (ds.image_id, ds.model_id)
        if key in grid:
            raise ValidationError(
                f"duplicate prediction record for image {ds.image_id!r}, model {ds.model_id!r}"
            )
        grid[key] = ds
    for image_id in images:
        for model_id in model_ids:
            grid.setdefault((image_id, model_id), DetectionSet(image_id, model_id))
    return Corpus(images, dict(ground_truth), grid, tuple(model_ids))


def _loads(data: bytes | str) -> object:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("input is not valid UTF-8", exc.start) from None
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", offset) from None


def _check_version(doc: object, what: str) -> dict:
    if not isinstance(doc, dict):
        raise ValidationError(f"{what} must be a JSON object, got {type(doc).__name__}")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported format_version {version!r}; this tool reads version {FORMAT_VERSION!r}"
        )
    return doc


def _as_number(value: object, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{context}: expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ValidationError(f"{context}: number must be finite, got {value!r}")
    return out


def _parse_box(raw: object, context: str) -> Box:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ValidationError(f"{context}: bbox must be a 4-element array, got {raw!r}")
    x1, y1, x2, y2 = (_as_number(v, context) for v in raw)
    if not (x1 < x2 and y1 < y2):
        raise ValidationError(f"{context}: degenerate box [{x1}, {y1}, {x2}, {y2}]")
    return Box(x1, y1, x2, y2)


def _require_str(record: Mapping, key: str, context: str) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value:
        raise ValidationError(f"{context}: missing or empty {key!r}")
    return value


def parse_predictions(data: bytes | str) -> list[DetectionSet]:
    """Parse a prediction file into one DetectionSet per record, order preserved."""
    doc = _check_version(_loads(data), "prediction file")
    records = doc.get("records")
    if not isinstance(records, list):
        raise ValidationError("prediction file: 'records' must be an array")
    out: list[DetectionSet] = []
    seen: set[tuple[str, str]] = set()
    for idx, record in enumerate(records):
        if not isinstance(record, dict):
            raise ValidationError(f"record {idx}: expected an object")
        image_id = _require_str(record, "image_id", f"record {idx}")
        model_id = _require_str(record, "model_id", f"record {idx}")
        context = f"image {image_id!r}, record {idx}"
        key = (image_id, model_id)
        if key in seen:
            raise ValidationError(f"{context}: duplicate record for model {model_id!r}")
        seen.add(key)
        raw_dets = record.get("detections")
        if not isinstance(raw_dets, list):
            raise ValidationError(f"{context}: 'detections' must be an array")
        dets = []
        for j, raw in enumerate(raw_dets):
            det_context = f"{context}, detection {j}"
            if not isinstance(raw, dict):
                raise ValidationError(f"{det_context}: expected an object")
            box = _parse_box(raw.get("bbox"), det_context)
            score = _as_number(raw.get("score"), f"{det_context}, score")
            if not (0.0 <= score <= 1.0):
                raise ValidationError(f"{det_context}: score {score} out of range [0, 1]")
            label = raw.get("label", LABEL_FRACTURE)
            if label not in KNOWN_LABELS:
                raise ValidationError(f"{det_context}: unknown label {label!r}")
            dets.append(Detection(box, score, label, model_id))
        out.append(DetectionSet(image_id, model_id, tuple(dets)))
    return out


def parse_ground_truth(data: bytes | str) -> dict[str, GroundTruth]:
    """Parse a ground-truth file into an ordered image_id -> GroundTruth map."""
    doc = _check_version(_loads(data), "ground-truth file")
    images = doc.get("images")
    if not isinstance(images, list):
        raise ValidationError("ground-truth file: 'images' must be an array")
    out: dict[str, GroundTruth] = {}
    for idx, record in enumerate(images):
        if not isinstance(record, dict):
            raise ValidationError(f"image record {idx}: expected an object")
        image_id = _require_str(record, "image_id", f"image record {idx}")
        if image_id in out:
            raise ValidationError(f"duplicate image_id {image_id!r} (image record {idx})")
        raw_boxes = record.get("boxes")
        if not isinstance(raw_boxes, list):
            raise ValidationError(f"image {image_id!r}: 'boxes' must be an array")
        boxes = tuple(
            _parse_box(raw, f"image {image_id!r}, box {j}") for j, raw in enumerate(raw_boxes)
        )
        out[image_id] = GroundTruth(image_id, boxes)
    return out


def serialize_detections(sets: Sequence[DetectionSet]) -> str:
    """Serialize prediction sets; parse(serialize(x)) reproduces x exactly,
    including detection order and bit-exact coordinates."""
    records = [
        {
            "image_id": ds.image_id,
            "model_id": ds.model_id,
            "detections": [
                {"bbox": list(d.box.corners()), "score": d.score, "label": d.label}
                for d in ds.detections
            ],
        }
        for ds in sets
    ]
    return json.dumps({"format_version": FORMAT_VERSION, "records": records}, indent=2) + "\n"


def serialize_ground_truth(ground_truth: Mapping[str, GroundTruth]) -> str:
    images = [
        {"image_id": gt.image_id, "boxes": [list(b.corners()) for b in gt.boxes]}
        for gt in ground_truth.values()
    ]
    return json.dumps({"format_version": FORMAT_VERSION, "images": images}, indent=2) + "\n"
