import math
import xml  # noqa: F401

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_trace, trace_from_rows
from offloadsim.reliability import (
    Bin,
    ReliabilityReport,
    assign_bin,
    bin_stats,
    bin_stats_arrays,
    ece,
    export_reliability,
    parse_reliability_csv,
    reliability_csv,
)


def brute_force_ece(confs, hits, num_bins):
    """Record-level evaluation: each record contributes |acc - conf| of its bin / n."""
    n = len(confs)
    members = {}
    for c, h in zip(confs, hits):
        k = 0
        for j in range(num_bins):
            if c > j / num_bins:
                k = j
        members.setdefault(k, []).append((c, h))
    total = 0.0
    for c, h in zip(confs, hits):
        k = 0
        for j in range(num_bins):
            if c > j / num_bins:
                k = j
        group = members[k]
        acc = sum(x[1] for x in group) / len(group)
        conf = sum(x[0] for x in group) / len(group)
        total += abs(acc - conf) / n
    return total


def test_assign_bin_examples():
    assert assign_bin(1.0, 10) == 9
    assert assign_bin(0.0, 10) == 0
    assert assign_bin(0.55, 10) == 5
    assert assign_bin(0.5, 10) == 4
    assert assign_bin(0.3, 10) == 2
    with pytest.raises(ValueError):
        assign_bin(1.2, 10)
    with pytest.raises(ValueError):
        assign_bin(-0.1, 10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(1, 30))
def test_assign_bin_half_open_low(c, k):
    b = assign_bin(c, k)
    assert 0 <= b < k
    if b > 0:
        assert b / k < c
    assert c <= (b + 1) / k


def test_bin_stats_hand_case():
    # four records in (0.8, 0.9], three correct
    rows = [(0, 0, 0.85, 0), (1, 1, 0.85, 1), (2, 2, 0.81, 2), (3, 4, 0.89, 3)]
    rep = bin_stats(trace_from_rows(rows), 10)
    b = rep.bins[8]
    assert b.count == 4
    assert b.mean_conf == pytest.approx(0.85, abs=1e-12)
    assert b.accuracy == pytest.approx(0.75, abs=1e-12)
    assert sum(x.count for x in rep.bins) == 4


def test_perfect_trace_single_bin():
    rep = bin_stats_arrays([1.0] * 7, [True] * 7, 10)
    occ = rep.occupied
    assert len(occ) == 1 and occ[0].mean_conf == 1.0 and occ[0].accuracy == 1.0
    assert rep.ece == 0.0


def test_single_bin_reduction():
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1, 50)
    h = rng.random(50) < 0.4
    rep = bin_stats_arrays(c, h, 1)
    assert rep.bins[0].mean_conf == pytest.approx(c.mean())
    assert rep.bins[0].accuracy == pytest.approx(h.mean())


def test_ece_examples():
    same = ReliabilityReport(2, (Bin(0, .5, 5, .3, .3), Bin(.5, 1, 5, .8, .8)), 0.0, 10)
    assert ece(same) == 0.0
    one = ReliabilityReport(1, (Bin(0, 1, 10, 0.9, 0.7),), 0.2, 10)
    assert ece(one) == pytest.approx(0.2)
    two = ReliabilityReport(10, (Bin(.8, .9, 60, 0.9, 0.8), Bin(.5, .6, 40, 0.6, 0.7)), 0.1, 100)
    assert ece(two) == pytest.approx(0.10)


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        bin_stats_arrays([], [], 10)


@pytest.mark.parametrize("seed", range(10))
def test_ece_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    t = random_trace(rng, int(rng.integers(1, 400)), int(rng.choice([2, 4, 13])))
    rep = bin_stats(t, 10)
    assert abs(rep.ece - brute_force_ece(t.confidence.tolist(), t.edge_correct.tolist(), 10)) < 1e-12
    assert sum(b.count for b in rep.bins) == len(t)
    assert 0.0 <= rep.ece <= 1.0


def test_ece_zero_when_confidence_equals_bin_accuracy():
    # 10 records at 0.7 with 7 hits, 5 at 0.2 with 1 hit
    c = [0.7] * 10 + [0.2] * 5
    h = [True] * 7 + [False] * 3 + [True] + [False] * 4
    assert bin_stats_arrays(c, h, 10).ece == 0.0


def test_over_and_under_confidence_flags():
    over = bin_stats_arrays([0.9, 0.9, 0.6, 0.6], [True, False, False, False], 10)
    assert over.over_confident and not over.under_confident
    under = bin_stats_arrays([0.3, 0.3], [True, True], 10)
    assert under.under_confident and not under.over_confident


def test_export_rows_and_round_trip():
    rep = bin_stats_arrays([0.95, 0.91, 0.42], [True, False, True], 10)
    rows = export_reliability(rep)
    assert rows[0] == ["bin_lower", "bin_upper", "count", "mean_conf", "accuracy"]
    assert len(rows) == 1 + 10 + 1
    assert rows[-1][0] == "ECE"
    empty = rows[1]
    assert empty[2] == "0" and empty[3] == "" and empty[4] == ""
    back = parse_reliability_csv(reliability_csv(rep))
    assert back == rep
