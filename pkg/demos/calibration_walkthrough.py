"""
Calibrating an over-confident edge model
=========================================

Generate a trace whose confidences are sharpened, look at its reliability
table, then fit temperature scaling and a Dirichlet map on one half and
score the other half.
"""

import numpy as np

from offloadsim import calibration, reliability, synth

# sharpening by 2 pushes every confidence toward 1
params = synth.SynthParams(n=10000, edge_acc=0.6, overconfidence_sharpen=2.0, seed=0)
trace = synth.generate(params)
print("edge accuracy", trace.edge_correct.mean())
print("mean confidence", trace.confidence.mean())

# bins where confidence exceeds accuracy
report = reliability.bin_stats(trace)
for b in report.occupied:
    print(f"({b.lower:.1f}, {b.upper:.1f}]  n={b.count:5d}  conf={b.mean_conf:.3f}  acc={b.accuracy:.3f}")
print("ECE", round(report.ece, 4))

# fit on half, evaluate on the other half
for method in ("ts", "dc", "hist"):
    held_out, model, fit = calibration.calibrate_trace(trace, method, fit_split=0.5, seed=0)
    print(f"{method:5s} ECE {fit.eval_pre_ece:.4f} -> {fit.eval_post_ece:.4f}")

# the fitted temperature undoes the sharpening
_, model, _ = calibration.calibrate_trace(trace, "ts", 0.5, seed=0)
print("temperature", round(model.T, 3))

# argmax never moves, so the edge answers are unchanged
print("same predictions:", np.array_equal(held_out.edge_pred, trace.subset(
    [i for i, r in enumerate(trace) if r.sample_id in set(held_out.sample_ids)]).edge_pred))
