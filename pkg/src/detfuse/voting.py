"""Image-level binary decisions and multi-model voting policies.

A single model's image decision is "fracture" iff any of its detections
scores at or above the decision threshold (the boundary is closed: a score
equal to the threshold counts). Across models, three policies combine the
per-model decisions:

* affirmative -- any model saying fracture is enough (logical OR);
* unanimous   -- every model must say fracture (logical AND);
* consensus   -- majority rules; an exact tie resolves to fracture, which
                 keeps the triage-oriented bias toward sensitivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .interchange import (
    FORMAT_VERSION,
    LABEL_FRACTURE,
    LABEL_NON_FRACTURE,
    ValidationError,
    _loads,
)

POLICIES = ("affirmative", "unanimous", "consensus")


@dataclass(frozen=True)
class ImageDecision:
    image_id: str
    label: str
    evidence_score: float = 0.0

    def __post_init__(self) -> None:
        if self.label not in (LABEL_FRACTURE, LABEL_NON_FRACTURE):
            raise ValueError(f"unknown decision label {self.label!r}")
        if not (0.0 <= self.evidence_score <= 1.0):
            raise ValueError(f"evidence_score out of range: {self.evidence_score}")

    @property
    def is_fracture(self) -> bool:
        return self.label == LABEL_FRACTURE


@dataclass(frozen=True)
class VotePolicy:
    kind: str
    threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in POLICIES:
            raise ValueError(f"unknown vote policy {self.kind!r}; choose from {POLICIES}")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


def decide_image(image_id: str, dets: Sequence, threshold: float = 0.5) -> ImageDecision:
    """Per-model decision primitive over raw or fused detections.

    Fracture iff any detection score >= threshold; the evidence score is the
    maximum detection score (0 with no detections).
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    evidence = max((d.score for d in dets), default=0.0)
    label = LABEL_FRACTURE if evidence >= threshold else LABEL_NON_FRACTURE
    return ImageDecision(image_id, label, evidence)


def vote(decisions: Sequence[ImageDecision], policy: VotePolicy) -> ImageDecision:
    """Combine one decision per model into a single image decision."""
    if not decisions:
        raise ValueError("vote requires at least one per-model decision")
    image_ids = {d.image_id for d in decisions}
    if len(image_ids) != 1:
        raise ValueError(f"decisions span multiple images: {sorted(image_ids)}")
    image_id = decisions[0].image_id

    positive = [d for d in decisions if d.is_fracture]
    n = len(decisions)
    if policy.kind == "affirmative":
        fracture = bool(positive)
    elif policy.kind == "unanimous":
        fracture = len(positive) == n
    else:  # consensus: strict majority, exact ties resolve to fracture
        fracture = 2 * len(positive) >= n

    if fracture:
        evidence = max(d.evidence_score for d in positive)
        return ImageDecision(image_id, LABEL_FRACTURE, evidence)
    return ImageDecision(image_id, LABEL_NON_FRACTURE, 0.0)


def serialize_decisions(decisions: Sequence[ImageDecision]) -> str:
    payload = {
        "format_version": FORMAT_VERSION,
        "decisions": [
            {"image_id": d.image_id, "label": d.label, "evidence_score": d.evidence_score}
            for d in decisions
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def parse_decisions(data: bytes | str) -> list[ImageDecision]:
    doc = _loads(data)
    if not isinstance(doc, dict):
        raise ValidationError("decision file must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported format_version {doc.get('format_version')!r}; "
            f"this tool reads version {FORMAT_VERSION!r}"
        )
    raw = doc.get("decisions")
    if not isinstance(raw, list):
        raise ValidationError("decision file: 'decisions' must be an array")
    out = []
    seen = set()
    for idx, rec in enumerate(raw):
        if not isinstance(rec, dict):
            raise ValidationError(f"decision {idx}: expected an object")
        image_id = rec.get("image_id")
        if not isinstance(image_id, str) or not image_id:
            raise ValidationError(f"decision {idx}: missing or empty 'image_id'")
        if image_id in seen:
            raise ValidationError(f"duplicate decision for image {image_id!r} (decision {idx})")
        seen.add(image_id)
        label = rec.get("label")
        evidence = rec.get("evidence_score", 0.0)
        try:
            out.append(ImageDecision(image_id, label, float(evidence)))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"decision {idx} (image {image_id!r}): {exc}") from None
    return out
