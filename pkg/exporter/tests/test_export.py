"""Exporter shim: conversion fixtures, mismatch heuristics, and the
cross-component round trip through the primary toolkit's validating CLI."""

import json
import random
import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from export import ExportError, convert, load_records, main, to_xyxy


class TestConversionArithmetic:
    def test_xywh_fixture(self):
        assert to_xyxy([10, 10, 5, 5], "xywh") == [10, 10, 15, 15]

    def test_xywh_fractional(self):
        assert to_xyxy([1.5, 2.25, 3.5, 0.75], "xywh") == [1.5, 2.25, 5.0, 3.0]

    def test_xyxy_passthrough(self):
        assert to_xyxy([3, 4, 9, 11], "xyxy") == [3.0, 4.0, 9.0, 11.0]


def run_export(tmp_path, doc, *args):
    src = tmp_path / "src.json"
    out = tmp_path / "out.json"
    src.write_text(json.dumps(doc))
    code = main(["--in", str(src), "--out", str(out), *args])
    return code, out


class TestCocoResults:
    def test_basic_export(self, tmp_path):
        doc = [
            {"image_id": 17, "category_id": 1, "bbox": [10, 10, 5, 5], "score": 0.9},
            {"image_id": 17, "category_id": 1, "bbox": [50, 60, 20, 10], "score": 0.4},
            {"image_id": 18, "category_id": 1, "bbox": [0, 0, 30, 30], "score": 0.7},
        ]
        code, out = run_export(tmp_path, doc, "--format", "coco_results_json",
                               "--model-id", "frcnn")
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["format_version"] == "1"
        by_image = {r["image_id"]: r for r in payload["records"]}
        assert set(by_image) == {"17", "18"}
        assert by_image["17"]["model_id"] == "frcnn"
        assert by_image["17"]["detections"][0]["bbox"] == [10, 10, 15, 15]
        assert by_image["17"]["detections"][0]["score"] == 0.9
        assert by_image["17"]["detections"][0]["label"] == "fracture"

    def test_category_filter(self, tmp_path):
        doc = [
            {"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.9},
            {"image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "score": 0.8},
        ]
        code, out = run_export(tmp_path, doc, "--format", "coco_results_json",
                               "--model-id", "m", "--category-id", "1")
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["records"][0]["detections"]) == 1

    def test_score_out_of_range_rejected(self, tmp_path):
        doc = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 1.7}]
        code, _ = run_export(tmp_path, doc, "--format", "coco_results_json",
                             "--model-id", "m")
        assert code == 2


class TestConventionHeuristics:
    def test_xywh_data_declared_xyxy_lists_offenders(self, tmp_path):
        # widths smaller than x make x2 <= x1 under the wrong declaration
        doc = [
            {"image_id": 1, "category_id": 1, "bbox": [10, 10, 5, 5], "score": 0.9},
            {"image_id": 2, "category_id": 1, "bbox": [40, 40, 8, 8], "score": 0.8},
        ]
        src = tmp_path / "src.json"
        src.write_text(json.dumps(doc))
        code = main(["--in", str(src), "--format", "coco_results_json", "--coords", "xyxy",
                     "--model-id", "m", "--out", str(tmp_path / "out.json")])
        assert code == 2

    def test_offending_records_named(self):
        triples = [("1", [10, 10, 5, 5], 0.9, 0), ("2", [40, 40, 8, 8], 0.8, 1)]
        with pytest.raises(ExportError) as err:
            convert(triples, "xyxy")
        message = str(err.value)
        assert "record 0" in message and "record 1" in message

    def test_bounds_check_against_declared_image_size(self, tmp_path):
        doc = [{"image_id": 1, "category_id": 1, "bbox": [1000, 1000, 50, 50], "score": 0.9}]
        code, _ = run_export(tmp_path, doc, "--format", "coco_results_json",
                             "--model-id", "m", "--image-size", "1024", "1024")
        assert code == 2


class TestGenericRecords:
    def test_flat_list(self, tmp_path):
        doc = [
            {"image_id": "a", "bbox": [0, 0, 5, 5], "score": 0.9},
            {"image_id": "a", "bbox": [8, 8, 12, 12], "score": 0.3},
        ]
        code, out = run_export(tmp_path, doc, "--format", "generic_records",
                               "--model-id", "m")
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["records"][0]["detections"][0]["bbox"] == [0, 0, 5, 5]

    def test_custom_score_key(self, tmp_path):
        doc = [{"image_id": "a", "bbox": [0, 0, 5, 5], "confidence": 0.66}]
        code, out = run_export(tmp_path, doc, "--format", "generic_records",
                               "--model-id", "m", "--score-key", "confidence")
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["records"][0]["detections"][0]["score"] == 0.66

    def test_interchange_idempotence(self, tmp_path):
        """Exporting an already-interchange file reproduces its records exactly."""
        interchange = {
            "format_version": "1",
            "records": [
                {"image_id": "a", "model_id": "m",
                 "detections": [{"bbox": [0.5, 1.5, 10.25, 20.75], "score": 0.35,
                                 "label": "fracture"}]},
                {"image_id": "b", "model_id": "m", "detections": []},
            ],
        }
        code, out = run_export(tmp_path, interchange, "--format", "generic_records",
                               "--model-id", "m")
        assert code == 0
        payload = json.loads(out.read_text())
        # image "b" has no detections to re-group; the non-empty record survives exactly
        assert payload["records"][0] == interchange["records"][0]


class TestCrossComponentRoundTrip:
    def make_coco_results(self, rng, n=100):
        out = []
        for _ in range(n):
            x, y = rng.uniform(0, 900), rng.uniform(0, 900)
            out.append({
                "image_id": rng.randint(1, 12),
                "category_id": 1,
                "bbox": [x, y, rng.uniform(4, 100), rng.uniform(4, 100)],
                "score": rng.random(),
            })
        return out

    def test_hundred_record_file_passes_primary_validation(self, tmp_path):
        """[SECONDARY acceptance] the exported file must clear the primary
        toolkit's parser with zero validation errors, exercised through its CLI."""
        rng = random.Random(12)
        doc = self.make_coco_results(rng, 100)
        code, out = run_export(tmp_path, doc, "--format", "coco_results_json",
                               "--model-id", "frcnn")
        assert code == 0
        result = subprocess.run(
            [sys.executable, "-m", "detfuse.cli", "fuse", str(out),
             "--method", "nms", "--out", str(tmp_path / "fused.json")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr
        assert (tmp_path / "fused.json").exists()

    def test_total_detections_preserved(self, tmp_path):
        rng = random.Random(13)
        doc = self.make_coco_results(rng, 100)
        code, out = run_export(tmp_path, doc, "--format", "coco_results_json",
                               "--model-id", "frcnn")
        assert code == 0
        payload = json.loads(out.read_text())
        assert sum(len(r["detections"]) for r in payload["records"]) == 100
        # coordinates are lossless: spot-check one record end to end
        first = doc[0]
        x, y, w, h = first["bbox"]
        rec = next(r for r in payload["records"] if r["image_id"] == str(first["image_id"]))
        assert rec["detections"][0]["bbox"] == [x, y, x + w, y + h]
        assert rec["detections"][0]["score"] == first["score"]


class TestCliErrors:
    def test_missing_file_exit_1(self, tmp_path):
        code = main(["--in", str(tmp_path / "nope.json"), "--format", "generic_records",
                     "--model-id", "m", "--out", str(tmp_path / "o.json")])
        assert code == 1

    def test_malformed_json_exit_2(self, tmp_path):
        src = tmp_path / "bad.json"
        src.write_text("{nope")
        code = main(["--in", str(src), "--format", "generic_records",
                     "--model-id", "m", "--out", str(tmp_path / "o.json")])
        assert code == 2
