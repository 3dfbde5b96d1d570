#!/usr/bin/env python3
"""Convert detector inference output files into the interchange prediction format.

Two source kinds are supported:

* ``coco_results_json``  -- a flat JSON array of result objects
  ``{"image_id": ..., "category_id": ..., "bbox": [...], "score": ...}``,
  the standard results dump of most detection frameworks. Boxes default to
  the xywh convention.
* ``generic_records``    -- either a flat JSON array of records carrying
  ``image_id`` and ``bbox`` (score under a configurable key), or an
  interchange-style ``{"records": [...]}`` document. Boxes default to xyxy,
  so re-exporting an interchange file is the identity up to formatting.

Coordinates are converted to corner (x1, y1, x2, y2) format; scores pass
through unchanged. The output groups detections per image and always
validates under the interchange prediction schema:

    { "format_version": "1",
      "records": [ { "image_id": str, "model_id": str,
                     "detections": [ { "bbox": [x1, y1, x2, y2],
                                       "score": number, "label": "fracture" } ] } ] }

Usage:
    python export.py --in results.json --format coco_results_json \
        --model-id frcnn --out preds.json
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

FORMAT_VERSION = "1"
LABEL = "fracture"
SOURCE_KINDS = ("coco_results_json", "generic_records")
CONVENTIONS = ("xywh", "xyxy")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


class ExportError(ValueError):
    """Source data cannot be converted into a valid interchange file."""


def to_xyxy(bbox, convention):
    x, y, a, b = (float(v) for v in bbox)
    if convention == "xywh":
        return [x, y, x + a, y + b]
    return [x, y, a, b]


def _check_number_list(bbox, where):
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise ExportError(f"{where}: bbox must have 4 elements, got {bbox!r}")
    for v in bbox:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            raise ExportError(f"{where}: bbox has a non-finite or non-numeric value: {bbox!r}")


def _flatten_generic(doc):
    """Yield (image_id, bbox, score_container) from flat or nested records."""
    if isinstance(doc, dict) and isinstance(doc.get("records"), list):
        for rec in doc["records"]:
            if not isinstance(rec, dict):
                raise ExportError(f"record is not an object: {rec!r}")
            image_id = rec.get("image_id")
            dets = rec.get("detections")
            if isinstance(dets, list):
                for det in dets:
                    yield image_id, det
            else:
                yield image_id, rec
    elif isinstance(doc, list):
        for rec in doc:
            if not isinstance(rec, dict):
                raise ExportError(f"record is not an object: {rec!r}")
            yield rec.get("image_id"), rec
    else:
        raise ExportError("generic_records input must be a JSON array or a records object")


def load_records(doc, kind, score_key, category_id=None):
    """Normalize source records to (image_id, raw_bbox, score) triples."""
    triples = []
    if kind == "coco_results_json":
        if not isinstance(doc, list):
            raise ExportError("coco_results_json input must be a JSON array of results")
        for idx, rec in enumerate(doc):
            if not isinstance(rec, dict):
                raise ExportError(f"result {idx} is not an object")
            if category_id is not None and rec.get("category_id") != category_id:
                continue
            image_id = rec.get("image_id")
            if image_id is None:
                raise ExportError(f"result {idx} has no image_id")
            bbox = rec.get("bbox")
            score = rec.get(score_key)
            triples.append((str(image_id), bbox, score, idx))
    else:
        for idx, (image_id, rec) in enumerate(_flatten_generic(doc)):
            if image_id is None or not str(image_id):
                raise ExportError(f"record {idx} has no image_id")
            triples.append((str(image_id), rec.get("bbox"), rec.get(score_key), idx))
    return triples


def convert(triples, convention, image_size=None):
    """Convert and validate; collect every offending record before failing."""
    by_image: dict[str, list[dict]] = {}
    bad: list[str] = []
    for image_id, bbox, score, idx in triples:
        where = f"record {idx} (image {image_id!r})"
        _check_number_list(bbox, where)
        x1, y1, x2, y2 = to_xyxy(bbox, convention)
        if not (x1 < x2 and y1 < y2):
            bad.append(f"{where}: empty box after {convention} conversion "
                       f"[{x1}, {y1}, {x2}, {y2}]")
            continue
        if image_size is not None:
            width, height = image_size
            if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
                bad.append(f"{where}: box [{x1}, {y1}, {x2}, {y2}] outside "
                           f"declared {width}x{height} image")
                continue
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise ExportError(f"{where}: score is not a number: {score!r}")
        if not (0.0 <= float(score) <= 1.0):
            raise ExportError(f"{where}: score {score} out of range [0, 1]")
        by_image.setdefault(image_id, []).append(
            {"bbox": [x1, y1, x2, y2], "score": float(score), "label": LABEL}
        )
    if bad:
        summary = "\n  ".join(bad[:20])
        more = f"\n  ... and {len(bad) - 20} more" if len(bad) > 20 else ""
        raise ExportError(
            f"{len(bad)} record(s) failed conversion (declared convention "
            f"{convention!r} probably wrong):\n  {summary}{more}"
        )
    return by_image


def export(source_path, kind, convention, score_key, model_id, out_path,
           image_size=None, category_id=None):
    doc = json.loads(Path(source_path).read_text(encoding="utf-8"))
    triples = load_records(doc, kind, score_key, category_id)
    by_image = convert(triples, convention, image_size)
    records = [
        {"image_id": image_id, "model_id": model_id, "detections": dets}
        for image_id, dets in by_image.items()
    ]
    payload = {"format_version": FORMAT_VERSION, "records": records}
    Path(out_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return len(records), sum(len(r["detections"]) for r in records)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="export",
        description="Convert detector result files to the interchange prediction format.",
    )
    parser.add_argument("--in", dest="source", required=True, help="source results file")
    parser.add_argument("--format", required=True, choices=SOURCE_KINDS)
    parser.add_argument("--coords", choices=CONVENTIONS,
                        help="box convention in the source (default: xywh for "
                             "coco_results_json, xyxy for generic_records)")
    parser.add_argument("--score-key", default="score")
    parser.add_argument("--model-id", required=True)
    parser.add_argument("--category-id", type=int,
                        help="keep only this category (coco_results_json)")
    parser.add_argument("--image-size", nargs=2, type=float, metavar=("W", "H"),
                        help="declared image size for bounds validation")
    parser.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    convention = args.coords or ("xywh" if args.format == "coco_results_json" else "xyxy")
    try:
        n_images, n_dets = export(
            args.source, args.format, convention, args.score_key, args.model_id,
            args.out, image_size=args.image_size, category_id=args.category_id,
        )
    except (ExportError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"exported {n_dets} detection(s) over {n_images} image(s) -> {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
