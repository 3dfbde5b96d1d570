"""Command-line front end: fuse / vote / evaluate / simulate / report.

Exit codes are a stable scripting contract: 0 success, 1 I/O failure,
2 validation or usage failure. Outputs are deterministic given the inputs
recorded in the manifest written next to each output file.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .fusion import METHODS, SOFT_MODES, FusionConfig, fuse
from .interchange import (
    Detection,
    DetectionSet,
    InterchangeError,
    parse_ground_truth,
    parse_predictions,
    serialize_detections,
    serialize_ground_truth,
)
from .manifest import build_manifest, manifest_path_for, write_manifest
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    classification_report,
    evaluate_predictions,
    render_table,
)
from .simulate import GENERATOR_NAME, load_bench_config, run_bench
from .voting import POLICIES, decide_image, parse_decisions, serialize_decisions, vote, VotePolicy

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2


class UsageError(ValueError):
    """Bad flag combination or value detected past argparse."""


def _read(path: Path) -> bytes:
    return path.read_bytes()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_prediction_files(paths: Sequence[Path]) -> list[DetectionSet]:
    sets: list[DetectionSet] = []
    for path in paths:
        for ds in parse_predictions(_read(path)):
            sets.append(ds)
    return sets


def _group_by_image(sets: Iterable[DetectionSet]) -> tuple[list[str], list[str], dict]:
    """Images (sorted), models (first appearance), and the (image, model) grid."""
    images: set[str] = set()
    models: list[str] = []
    grid: dict[tuple[str, str], DetectionSet] = {}
    for ds in sets:
        images.add(ds.image_id)
        if ds.model_id not in models:
            models.append(ds.model_id)
        key = (ds.image_id, ds.model_id)
        if key in grid:
            raise InterchangeError(
                f"duplicate record for image {ds.image_id!r}, model {ds.model_id!r} across inputs"
            )
        grid[key] = ds
    ordered = sorted(images)
    for image_id in ordered:
        for model_id in models:
            grid.setdefault((image_id, model_id), DetectionSet(image_id, model_id))
    return ordered, models, grid


def _parse_weights(spec: str | None) -> dict[str, float] | None:
    if spec is None:
        return None
    weights: dict[str, float] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        if not name or not value:
            raise UsageError(f"bad --weights entry {part!r}; expected model=value")
        try:
            weights[name] = float(value)
        except ValueError:
            raise UsageError(f"bad --weights value in {part!r}") from None
    if not weights:
        raise UsageError("--weights given but empty")
    return weights


def _parse_iou_spec(spec: str) -> list[float]:
    """Either a comma list ("0.5,0.75") or a range ("0.5:0.95:0.05")."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad --iou range {spec!r}; expected start:stop:step")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise UsageError(f"bad --iou range {spec!r}") from None
        if step <= 0 or stop < start:
            raise UsageError(f"bad --iou range {spec!r}")
        # Integer micro-steps keep thresholds exactly on k/100-style grid points.
        scale = 1_000_000
        istart, istop, istep = round(start * scale), round(stop * scale), round(step * scale)
        if istep == 0:
            raise UsageError(f"--iou step too small in {spec!r}")
        values = [v / scale for v in range(istart, istop + 1, istep)]
    else:
        try:
            values = [float(p) for p in spec.split(",") if p.strip()]
        except ValueError:
            raise UsageError(f"bad --iou list {spec!r}") from None
    if not values or any(not (0.0 < v < 1.0) for v in values):
        raise UsageError(f"--iou thresholds must lie in (0, 1): {spec!r}")
    return values


def _map_jobs(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map; results never depend on scheduling."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_fuse(args: argparse.Namespace) -> int:
    inputs = [Path(p) for p in args.predictions]
    sets = _load_prediction_files(inputs)
    images, models, grid = _group_by_image(sets)
    weights = _parse_weights(args.weights)
    if weights:
        unknown = sorted(set(weights) - set(models))
        if unknown:
            raise UsageError(f"--weights names unknown model(s): {', '.join(unknown)}")
    config = FusionConfig(
        method=args.method,
        iou_threshold=args.iou_thr,
        soft_mode=args.soft_mode,
        sigma=args.sigma,
        score_prune=args.score_prune,
        model_weights=weights,
        score_rescale=not args.no_score_rescale,
    )
    ensemble_id = f"ensemble:{args.method}"

    def fuse_image(image_id: str) -> DetectionSet:
        per_model = [grid[(image_id, m)] for m in models]
        fused = fuse(per_model, config)
        dets = tuple(
            Detection(f.box, f.score, "fracture", ensemble_id) for f in fused
        )
        return DetectionSet(image_id, ensemble_id, dets)

    fused_sets = _map_jobs(fuse_image, images, args.jobs)
    out = Path(args.out)
    _write(out, serialize_detections(fused_sets))
    manifest = build_manifest(
        "fuse",
        {
            "method": args.method,
            "iou_threshold": args.iou_thr,
            "soft_mode": args.soft_mode,
            "sigma": args.sigma,
            "score_prune": args.score_prune,
            "model_weights": weights,
            "score_rescale": not args.no_score_rescale,
            "models": models,
        },
        inputs,
    )
    write_manifest(manifest, manifest_path_for(out))
    print(f"fused {len(images)} image(s) from {len(models)} model(s) -> {out}")
    return EXIT_OK


def cmd_vote(args: argparse.Namespace) -> int:
    inputs = [Path(p) for p in args.predictions]
    sets = _load_prediction_files(inputs)
    images, models, grid = _group_by_image(sets)
    policy = VotePolicy(args.policy, args.threshold)

    decisions = []
    for image_id in images:
        per_model = [
            decide_image(image_id, grid[(image_id, m)].detections, policy.threshold)
            for m in models
        ]
        decisions.append(vote(per_model, policy))

    out = Path(args.out)
    _write(out, serialize_decisions(decisions))
    manifest = build_manifest(
        "vote",
        {"policy": args.policy, "threshold": args.threshold, "models": models},
        inputs,
    )
    write_manifest(manifest, manifest_path_for(out))
    print(f"voted on {len(images)} image(s) across {len(models)} model(s) -> {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    if (args.pred is None) == (args.decisions is None):
        raise UsageError("evaluate needs exactly one of --pred or --decisions")
    gt_path = Path(args.gt)
    ground_truth = parse_ground_truth(_read(gt_path))
    thresholds = _parse_iou_spec(args.iou)
    inputs = [gt_path]

    if args.pred is not None:
        pred_path = Path(args.pred)
        inputs.append(pred_path)
        sets = parse_predictions(_read(pred_path))
        preds_by_image: dict[str, list[Detection]] = {}
        for ds in sets:
            if ds.image_id not in ground_truth:
                raise InterchangeError(f"predictions for unknown image_id {ds.image_id!r}")
            preds_by_image.setdefault(ds.image_id, []).extend(ds.detections)
        report = evaluate_predictions(preds_by_image, ground_truth, args.threshold, thresholds)
        name = args.name or pred_path.stem
    else:
        dec_path = Path(args.decisions)
        inputs.append(dec_path)
        decisions = parse_decisions(_read(dec_path))
        report = classification_report(decisions, ground_truth)
        name = args.name or dec_path.stem

    table = render_table([(name, report)], name_header="Source")
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        payload = {"name": name, **report.to_dict()}
        _write(out, json.dumps(payload, indent=2) + "\n")
        manifest = build_manifest(
            "evaluate",
            {"iou": args.iou, "threshold": args.threshold, "name": name},
            inputs,
        )
        write_manifest(manifest, manifest_path_for(out))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    config = load_bench_config(_read(config_path))
    result = run_bench(config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "ground_truth.json", serialize_ground_truth(result.ground_truth))
    for model_id, sets in result.predictions.items():
        _write(out_dir / f"predictions_{model_id}.json", serialize_detections(sets))
    _write(out_dir / "results.json", json.dumps(result.to_dict(), indent=2) + "\n")
    table = result.summary_table()
    _write(out_dir / "summary.txt", table)
    manifest = build_manifest("simulate", config.to_dict(), [config_path], seed=config.seed)
    write_manifest(manifest, out_dir / "manifest.json")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    rows: list[tuple[str, EvalReport]] = []
    for raw_path in args.reports:
        payload = json.loads(_read(Path(raw_path)))
        if "solo" in payload and "ensemble" in payload:
            for model_id, raw in payload["solo"].items():
                rows.append((f"solo:{model_id}", _report_from_dict(raw)))
            for method, raw in payload["ensemble"].items():
                rows.append((f"ensemble:{method}", _report_from_dict(raw)))
        else:
            rows.append((payload.get("name", Path(raw_path).stem), _report_from_dict(payload)))
    sys.stdout.write(render_table(rows, name_header="Source"))
    return EXIT_OK


def _report_from_dict(raw: dict) -> EvalReport:
    confusion = raw.get("confusion", {})
    return EvalReport(
        accuracy=raw["accuracy"],
        precision=raw["precision"],
        recall=raw["recall"],
        f1=raw["f1"],
        sensitivity=raw.get("sensitivity", raw["recall"]),
        specificity=raw.get("specificity", 0.0),
        confusion=ConfusionMatrix(
            confusion.get("tp", 0), confusion.get("fp", 0),
            confusion.get("fn", 0), confusion.get("tn", 0),
        ),
        ap50=raw.get("ap50"),
        ap_50_95=raw.get("ap_50_95"),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detfuse",
        description="Multi-detector box fusion, image-level voting, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fuse = sub.add_parser("fuse", help="fuse per-model prediction files into one ensemble file")
    p_fuse.add_argument("predictions", nargs="+", help="prediction file(s), one or more models")
    p_fuse.add_argument("--method", required=True, choices=METHODS)
    p_fuse.add_argument("--iou-thr", type=float, default=0.5)
    p_fuse.add_argument("--soft-mode", choices=SOFT_MODES, default="linear")
    p_fuse.add_argument("--sigma", type=float, default=0.5)
    p_fuse.add_argument("--score-prune", type=float, default=0.001)
    p_fuse.add_argument("--weights", help="per-model weights, e.g. m1=1.0,m2=2.0 (wbf only)")
    p_fuse.add_argument("--no-score-rescale", action="store_true",
                        help="disable the min(n, T)/T wbf score rescale")
    p_fuse.add_argument("--jobs", type=int, default=1)
    p_fuse.add_argument("--out", required=True)
    p_fuse.set_defaults(handler=cmd_fuse)

    p_vote = sub.add_parser("vote", help="image-level voting across per-model predictions")
    p_vote.add_argument("predictions", nargs="+")
    p_vote.add_argument("--policy", required=True, choices=POLICIES)
    p_vote.add_argument("--threshold", type=float, default=0.5)
    p_vote.add_argument("--out", required=True)
    p_vote.set_defaults(handler=cmd_vote)

    p_eval = sub.add_parser("evaluate", help="score predictions or decisions against ground truth")
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--pred", help="prediction file to evaluate")
    p_eval.add_argument("--decisions", help="decision file to evaluate (classification only)")
    p_eval.add_argument("--iou", default="0.5:0.95:0.05",
                        help='IoU threshold list "0.5,0.75" or range "0.5:0.95:0.05"')
    p_eval.add_argument("--threshold", type=float, default=0.5,
                        help="decision threshold for image-level labels")
    p_eval.add_argument("--name", help="row label in the rendered table")
    p_eval.add_argument("--out", help="write the report JSON here")
    p_eval.set_defaults(handler=cmd_evaluate)

    p_sim = sub.add_parser("simulate", help="run the seeded synthetic detector benchmark")
    p_sim.add_argument("--config", required=True, help="bench config JSON")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(handler=cmd_simulate)

    p_rep = sub.add_parser("report", help="render saved report JSON files as one table")
    p_rep.add_argument("reports", nargs="+")
    p_rep.set_defaults(handler=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (InterchangeError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
