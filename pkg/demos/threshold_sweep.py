"""
Sweeping the offload threshold
==============================

Each record is either answered at the edge or sent to the cloud when its
confidence falls below the threshold. Compare that choice with the model
that would have been best for the record.
"""

from offloadsim import controller, synth

trace = synth.generate_preset("seen-only", 5000, seed=1)

# precision and recall are about keeping records at the edge
result = controller.sweep(trace, controller.default_grid())
print("theta   tp    fp    fn    tn   recall  specificity")
for th, c, m in zip(result.thresholds, result.counts, result.rows):
    spec = "  -  " if m.specificity is None else f"{m.specificity:.3f}"
    rec = "  -  " if m.recall is None else f"{m.recall:.3f}"
    print(f"{th:4.2f} {c.tp:5d} {c.fp:5d} {c.fn:5d} {c.tn:5d}   {rec}   {spec}")

# undefined entries are left out of the means
print({k: round(v, 4) for k, v in result.means.items()})

# the same table as CSV
print(result.to_csv().splitlines()[0])
