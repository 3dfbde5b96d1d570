#!/usr/bin/env python3
"""Multi-seed ensemble-vs-solo sweep over the bundled profiles.

Runs the default benchmark across a range of seeds and prints, per source,
the mean F1 with min/max, plus how often the NMW ensemble beats the best
solo model seed by seed. Handy for re-tuning detector profiles.

Usage: python scripts/sweep_seeds.py [n_seeds] [n_images]
"""

import statistics
import sys
from pathlib import Path

from detfuse.simulate import BenchConfig, load_bench_config, run_bench

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 50
    n_images = int(sys.argv[2]) if len(sys.argv) > 2 else 200
    base = load_bench_config((ROOT / "configs" / "default_bench.json").read_text())

    solo_f1 = {p.model_id: [] for p in base.profiles}
    ensemble_f1 = {m: [] for m in ("nms", "soft_nms", "wbf", "nmw")}
    nmw_wins = 0
    for seed in range(n_seeds):
        config = BenchConfig(
            seed=seed,
            n_images=n_images,
            profiles=base.profiles,
            prevalence=base.prevalence,
            geometry=base.geometry,
            fusion_iou_threshold=base.fusion_iou_threshold,
            decision_threshold=base.decision_threshold,
        )
        run = run_bench(config)
        best_solo = 0.0
        for model_id, report in run.solo.items():
            solo_f1[model_id].append(report.f1)
            best_solo = max(best_solo, report.f1)
        for method, report in run.ensemble.items():
            ensemble_f1[method].append(report.f1)
        if run.ensemble["nmw"].f1 >= best_solo:
            nmw_wins += 1

    print(f"{n_seeds} seeds x {n_images} images")
    for name, values in {**solo_f1, **ensemble_f1}.items():
        print(
            f"  {name:16s} F1 mean {statistics.mean(values):.4f} "
            f"min {min(values):.4f} max {max(values):.4f}"
        )
    print(f"  nmw >= best solo in {nmw_wins}/{n_seeds} seeds")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
