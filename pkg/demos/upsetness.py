"""
Scenarios and the upsetness index
=================================

Label every record with what the user experiences, weigh the labels with
penalties and pick the threshold that upsets the user least.
"""

from offloadsim import calibration, controller, experience, synth

trace = synth.generate_preset("unseen-only", 10000, seed=2)
held_out, _, _ = calibration.calibrate_trace(trace, "dc", 0.5, seed=0)
grid = controller.default_grid()

# scenario counts at a few thresholds
for th, counts in experience.scenario_distribution(held_out, [0.0, 0.3, 0.6, 1.0]):
    print(th, {s.name: n for s, n in counts.items()})

# UII along the grid
for th in grid[::2]:
    print(f"theta={th:.2f}  UII={experience.uii(held_out, th):.3f}")

best, u = experience.min_uii_threshold(held_out, grid)
print("least upsetting threshold", best, "UII", round(u, 3))

# heavier penalties on a wrong override move the optimum
harsh = experience.PenaltyTable(0, 1, 5, 6, 20)
print("with S5 = 20:", experience.min_uii_threshold(held_out, grid, penalties=harsh))
