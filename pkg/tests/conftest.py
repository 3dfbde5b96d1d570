"""Shared hypothesis strategies and helpers for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent))

from detfuse import Box, Detection, DetectionSet

# Coordinates stay in a sane pixel range with a minimum extent, so IoU and
# weighted averages never fight float noise from degenerate slivers.
_coord = st.floats(min_value=0.0, max_value=2000.0, allow_nan=False, allow_infinity=False)
_extent = st.floats(min_value=0.5, max_value=800.0, allow_nan=False, allow_infinity=False)
_score = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw) -> Box:
    x1 = draw(_coord)
    y1 = draw(_coord)
    return Box(x1, y1, x1 + draw(_extent), y1 + draw(_extent))


@st.composite
def detections(draw, model_id: str = "m") -> Detection:
    return Detection(draw(boxes()), draw(_score), "fracture", model_id)


@st.composite
def detection_sets(draw, image_id: str = "img", max_models: int = 3, max_dets: int = 6):
    n_models = draw(st.integers(min_value=1, max_value=max_models))
    sets = []
    for m in range(n_models):
        model_id = f"m{m}"
        dets = tuple(
            draw(detections(model_id))
            for _ in range(draw(st.integers(min_value=0, max_value=max_dets)))
        )
        sets.append(DetectionSet(image_id, model_id, dets))
    return sets


def as_plain(sets):
    """Convert DetectionSets into the plain model-major dicts the oracles eat."""
    return [
        [{"box": d.box.corners(), "score": d.score} for d in ds.detections]
        for ds in sets
    ]
