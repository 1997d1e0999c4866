#!/usr/bin/env python3
"""End-to-end reproduction run: detector comparison table and t-test.

Runs the default desk-scale pipeline (synthesize, simulate 8 x 20 images,
train, score, analyze), then evaluates the display-precision RGB-mean
baseline on the full-scale 1906x1794 geometry, where single-pixel steps are
far below display precision. The in-memory full-scale pass uses exact
integer channel sums, which is what the arithmetic mean of 8-bit pixels
reduces to; materializing the 160 full-size PNGs instead is
`somqe run-all --scale full` and takes a few minutes for the same numbers.

Prints one row per condition: map quantization error R^2 and normality
(both desk and scale-independent) versus display-mean R^2 and normality at
full scale, then the pooled t-test between the two R^2 groups.

Usage: python scripts/run_reproduction.py [out_dir]
"""

import sys
import time
from pathlib import Path

import numpy as np

from somqe.pipeline import (
    default_conditions,
    default_config,
    default_ground_truth_spec,
    run_all,
)
from somqe.simulate import synthesize_ground_truth
from somqe.stats import classify_series, t_test


def full_scale_baseline():
    """Display-mean classification per condition on the full-scale geometry."""
    gt = synthesize_ground_truth(default_ground_truth_spec("full"))
    total = int(gt.to_u8()[..., 0].astype(np.int64).sum()) * 3
    n = gt.n_pixels
    ks = np.arange(1, 21, dtype=float)
    out = {}
    for cond in default_conditions(20):
        delta = cond.target.value - cond.source.value
        display = np.array(
            [round(((total + 3.0 * k * delta) / (3.0 * n)) * 1000) / 1000 for k in range(1, 21)]
        )
        out[cond.label] = classify_series(ks, display)
    return out


def normality_cell(cls) -> str:
    if cls.normality_status == "degenerate":
        return "failed (flat)"
    verdict = "passed" if cls.normality.p_value > 0.05 else "failed"
    return f"{cls.normality.p_value:.2f} {verdict}"


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/reproduction")
    print(f"desk-scale pipeline -> {out_dir}")
    start = time.perf_counter()
    report = run_all(default_config("desk", out_dir=out_dir))
    print(f"  done in {time.perf_counter() - start:.1f} s")
    print("full-scale display-mean baseline (in-memory)")
    baseline = full_scale_baseline()

    header = (
        f"{'normality (QE)':<16} {'normality (mean)':<17} "
        f"{'QE r2':>7} {'mean r2':>8}   condition"
    )
    print()
    print(header)
    print("-" * len(header))
    qe_r2, mean_r2 = [], []
    for cond_report in report.conditions:
        label = cond_report["condition"]
        bl = baseline[label]
        qe_p = cond_report["qe"]["sw_p"]
        print(
            f"{f'{qe_p:.2f} passed' if qe_p > 0.05 else f'{qe_p:.2f} failed':<16} "
            f"{normality_cell(bl):<17} "
            f"{cond_report['qe']['r_squared']:>7.2f} {bl.fit.r_squared:>8.2f}   {label}"
        )
        qe_r2.append(cond_report["qe"]["r_squared"])
        mean_r2.append(bl.fit.r_squared)
    comparison = t_test(qe_r2, mean_r2)
    print()
    print(
        f"detector R^2 comparison: t({comparison.df}) = {comparison.t:.3f}, "
        f"p = {comparison.p_value:.2e}"
    )
    for note in report.notes:
        print(f"note: {note}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
