"""
A mix of seen and unseen objects
================================

Blend 80% familiar objects with 20% novel ones and read off the
accuracy/latency trade-off and its non-dominated points.
"""

from offloadsim import calibration, controller, experience, synth
from offloadsim.trace import split_by_tag

trace = synth.generate_preset("mix-80-20", 10000, seed=3)
for tag in ("seen", "unseen"):
    part = split_by_tag(trace, tag)
    print(tag, len(part), "edge acc", round(part.edge_correct.mean(), 3))

held_out, _, _ = calibration.calibrate_trace(trace, "ts", 0.5, seed=0)
cfg = experience.LatencyConfig(network_rtt_ms=50.0, deadline_ms=150.0)
points = experience.operating_points(held_out, controller.default_grid(), cfg, method="ts")
base = experience.baseline_points(held_out, cfg)

# the front mixes both baselines with intermediate thresholds
for p in experience.pareto_front(points + base):
    print(f"{p.method:10s} theta={p.threshold:<5} acc={p.accuracy:.3f} latency={p.mean_latency_ms:6.1f} ms "
          f"deadline hit={p.deadline_hit_rate:.2f}")
