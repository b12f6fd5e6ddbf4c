from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_trace, record, trace_from_rows
from offloadsim.controller import (
    SWEEP_COLUMNS,
    ConfusionCounts,
    DecisionOutcome,
    ModelChoice,
    confusion_counts,
    decide,
    default_grid,
    ideal_model,
    metrics,
    outcome,
    sweep,
)
from offloadsim.trace import load_trace

FIXTURE = Path(__file__).parent / "data" / "controller_12.jsonl"
E, C = ModelChoice.EDGE, ModelChoice.CLOUD


def loop_counts(trace, threshold):
    """Record-at-a-time oracle for the confusion table."""
    tally = {o: 0 for o in DecisionOutcome}
    for r in trace:
        pred = "C" if r.confidence < threshold else "E"
        if r.edge_correct:
            ideal = "E"
        elif r.cloud_correct:
            ideal = "C"
        else:
            ideal = "E"
        key = {("E", "E"): "TP", ("E", "C"): "FP", ("C", "E"): "FN", ("C", "C"): "TN"}[(pred, ideal)]
        tally[DecisionOutcome(key)] += 1
    return ConfusionCounts(tally[DecisionOutcome.TP], tally[DecisionOutcome.FP],
                           tally[DecisionOutcome.FN], tally[DecisionOutcome.TN])


def test_decide_examples():
    assert decide(0.49, 0.5) is C
    assert decide(0.5, 0.5) is E
    assert decide(0.51, 0.5) is E
    assert decide(0.0, 0.0) is E
    assert decide(1.0, 1.0) is E
    assert decide(0.999, 1.0) is C


def test_ideal_model_cases():
    assert ideal_model(record(0, 1, 1, 0.9, 1)) is E
    assert ideal_model(record(0, 1, 1, 0.9, 2)) is E
    assert ideal_model(record(0, 1, 2, 0.9, 1)) is C
    assert ideal_model(record(0, 1, 2, 0.9, 3)) is E


def test_outcome_table():
    assert outcome(E, E) is DecisionOutcome.TP
    assert outcome(E, C) is DecisionOutcome.FP
    assert outcome(C, E) is DecisionOutcome.FN
    assert outcome(C, C) is DecisionOutcome.TN
    assert outcome("C", "C") is DecisionOutcome.TN


def test_four_record_example():
    # one of each outcome at threshold 0.5
    t = trace_from_rows([
        (0, 0, 0.9, 0),  # kept, edge right -> TP
        (1, 0, 0.9, 1),  # kept, cloud would fix it -> FP
        (2, 2, 0.3, 4),  # offloaded, edge was right -> FN
        (3, 1, 0.3, 3),  # offloaded, cloud fixes it -> TN
    ])
    c = confusion_counts(t, 0.5)
    assert c == ConfusionCounts(1, 1, 1, 1)
    m = metrics(c)
    assert (m.precision, m.recall, m.f1, m.specificity, m.accuracy) == (0.5, 0.5, 0.5, 0.5, 0.5)


def test_fixture_counts_and_metrics():
    t = load_trace(FIXTURE)
    c = confusion_counts(t, 0.5)
    assert c == ConfusionCounts(tp=4, fp=2, fn=4, tn=2)
    m = metrics(c)
    assert m.precision == pytest.approx(2 / 3, abs=1e-9)
    assert m.recall == pytest.approx(0.5, abs=1e-9)
    assert m.f1 == pytest.approx(4 / 7, abs=1e-9)
    assert m.specificity == pytest.approx(0.5, abs=1e-9)
    assert m.accuracy == pytest.approx(0.5, abs=1e-9)


def test_metrics_undefined_denominators():
    m = metrics(ConfusionCounts(0, 0, 3, 2))
    assert m.precision is None and m.f1 is None
    assert m.recall == 0.0
    assert m.specificity == 1.0
    m = metrics(ConfusionCounts(0, 2, 0, 0))
    assert m.precision == 0.0 and m.recall is None and m.f1 is None
    assert m.specificity == 0.0
    m = metrics(ConfusionCounts(0, 1, 1, 0))
    assert m.f1 == 0.0


def test_default_grid():
    g = default_grid()
    assert len(g) == 21
    assert g[0] == 0.0 and g[-1] == 1.0
    assert g[10] == 0.5


def test_sweep_endpoints():
    rng = np.random.default_rng(3)
    t = random_trace(rng, 200, 5)
    res = sweep(t, [0.0, 1.0])
    n_ideal_cloud = int(np.sum(~t.edge_correct & t.cloud_correct))
    assert res.counts[0] == ConfusionCounts(200 - n_ideal_cloud, n_ideal_cloud, 0, 0)
    # every confidence here is below 1, so everything is offloaded at 1
    assert np.all(t.confidence < 1.0)
    assert res.counts[1] == ConfusionCounts(0, 0, 200 - n_ideal_cloud, n_ideal_cloud)
    assert res.rows[1].precision is None


def test_sweep_mean_skips_undefined():
    t = trace_from_rows([(0, 0, 0.9, 0), (1, 0, 0.3, 1)])
    res = sweep(t, [0.0, 0.5, 1.0])
    # precision is 1/2, 1, undefined
    assert res.rows[2].precision is None
    assert res.means["precision"] == pytest.approx(0.75)


def test_sweep_rejects_bad_grid():
    t = trace_from_rows([(0, 0, 0.9, 0)])
    with pytest.raises(ValueError):
        sweep(t, [])
    with pytest.raises(ValueError):
        sweep(t, [1.5])
    with pytest.raises(ValueError):
        confusion_counts(t.subset([]), 0.5)


def test_sweep_csv_layout():
    t = load_trace(FIXTURE)
    text = sweep(t, default_grid()).to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 1 + 21 + 1
    assert lines[-1].startswith("mean,")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 60), st.integers(2, 8))
def test_counts_match_loop_oracle_and_are_monotone(seed, n, k):
    rng = np.random.default_rng(seed)
    t = random_trace(rng, n, k)
    grid = default_grid()
    prev = None
    for th in grid:
        c = confusion_counts(t, th)
        assert c == loop_counts(t, th)
        assert c.n == n
        if prev is not None:
            # raising the threshold only moves records from kept to offloaded
            assert c.tp <= prev.tp and c.fp <= prev.fp
            assert c.fn >= prev.fn and c.tn >= prev.tn
        prev = c
