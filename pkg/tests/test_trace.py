import json
import logging
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import record, trace_from_rows
from offloadsim.synth import SynthParams, generate
from offloadsim.trace import (
    Trace,
    TraceError,
    load_trace,
    mix_traces,
    split_by_tag,
    top_confidence,
    validate,
    write_trace,
)


@pytest.fixture
def small():
    return generate(SynthParams(n=3, seed=4))


def test_round_trip_is_exact(tmp_path, small):
    path = tmp_path / "t.jsonl"
    write_trace(small, path)
    back = load_trace(path)
    assert len(back) == 3 and back.num_classes == 13
    assert back == small
    assert back.records[0].edge_probs == small.records[0].edge_probs


def test_round_trip_keeps_features(tmp_path):
    t = generate(SynthParams(n=5, feature_dim=3, num_classes=4, seed=1))
    write_trace(t, tmp_path / "f.jsonl")
    assert load_trace(tmp_path / "f.jsonl") == t


def test_bad_probability_sum_names_line_and_field(tmp_path, small):
    path = tmp_path / "bad.jsonl"
    write_trace(small, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[2])
    rec["edge_probs"] = [v * 0.8 for v in rec["edge_probs"]]
    lines[2] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError, match=r"line 3.*edge_probs"):
        load_trace(path)


def test_bad_probability_sum_without_header(tmp_path, small):
    path = tmp_path / "bad.jsonl"
    recs = [r.to_dict() for r in small.records]
    recs[1]["edge_probs"] = [v * 0.8 for v in recs[1]["edge_probs"]]
    path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    with pytest.raises(TraceError, match=r"line 2.*edge_probs"):
        load_trace(path)


def test_parse_error_names_line(tmp_path, small):
    path = tmp_path / "bad.jsonl"
    write_trace(small, path)
    path.write_text(path.read_text() + "{not json\n")
    with pytest.raises(TraceError, match="line 5"):
        load_trace(path)


def test_mixed_class_counts_rejected(tmp_path):
    a = record(0, 0, 0, 0.9, 0, num_classes=3).to_dict()
    b = record(1, 0, 0, 0.9, 0, num_classes=4).to_dict()
    path = tmp_path / "mixed.jsonl"
    path.write_text(json.dumps(a) + "\n" + json.dumps(b) + "\n")
    with pytest.raises(TraceError, match="line 2"):
        load_trace(path)


def test_empty_file_is_valid_and_warns(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        t = load_trace(path)
    assert len(t) == 0
    assert "no records" in caplog.text


def test_validate_clean(small):
    assert validate(small) == []


def test_validate_duplicate_id():
    t = trace_from_rows([(0, 0, 0.9, 0), (1, 1, 0.8, 1)])
    dup = Trace((t.records[0], replace(t.records[1], sample_id="r00")), 6)
    problems = validate(dup)
    assert len(problems) == 1 and "r00" in problems[0]


def test_validate_partial_features():
    t = trace_from_rows([(0, 0, 0.9, 0), (1, 1, 0.8, 1), (2, 2, 0.7, 2)])
    mixed = Trace((replace(t.records[0], features=(1.0, 2.0)),) + t.records[1:], 6)
    assert len(validate(mixed)) == 1


def test_validate_field_violations():
    r = record(0, 0, 0, 0.9, 0, num_classes=3)
    bad = [replace(r, sample_id="a", ground_truth=3), replace(r, sample_id="b", cloud_pred=-1),
           replace(r, sample_id="c", edge_latency_ms=-1.0), replace(r, sample_id="d", object_tag="new")]
    problems = validate(Trace(tuple(bad), 3))
    assert len(problems) == 4
    assert any("ground_truth" in p for p in problems)
    assert any("cloud_pred" in p for p in problems)
    assert any("edge_latency_ms" in p for p in problems)
    assert any("object_tag" in p for p in problems)


def _tagged(n_seen, n_unseen):
    rows = [(0, 0, 0.9, 0)] * (n_seen + n_unseen)
    t = trace_from_rows(rows)
    recs = tuple(replace(r, object_tag="seen" if i < n_seen else "unseen") for i, r in enumerate(t.records))
    return Trace(recs, 6)


def test_split_by_tag():
    t = _tagged(3, 2)
    assert len(split_by_tag(t, "unseen")) == 2
    assert len(split_by_tag(_tagged(4, 0), "unseen")) == 0
    ids = set(split_by_tag(t, "seen").sample_ids) | set(split_by_tag(t, "unseen").sample_ids)
    assert ids == set(t.sample_ids)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), max_size=30))
def test_split_is_partition(flags):
    t = _tagged(0, 0)
    base = record(0, 0, 0, 0.9, 0)
    recs = tuple(replace(base, sample_id=f"q{i}", object_tag="unseen" if f else "seen")
                 for i, f in enumerate(flags))
    t = Trace(recs, 6)
    a, b = split_by_tag(t, "seen"), split_by_tag(t, "unseen")
    assert len(a) + len(b) == len(t)
    assert sorted(a.sample_ids + b.sample_ids) == sorted(t.sample_ids)


def test_mix_counts_and_determinism():
    seen = generate(SynthParams(n=2000, edge_acc=0.8, seed=1, id_prefix="s"))
    unseen = generate(SynthParams(n=500, edge_acc=0.37, seed=2, id_prefix="u", unseen_fraction=1.0))
    m = mix_traces(seen, unseen, 0.8, 2500, seed=7)
    tags = [r.object_tag for r in m]
    assert tags.count("seen") == 2000 and tags.count("unseen") == 500
    assert validate(m) == []
    assert m.sample_ids == mix_traces(seen, unseen, 0.8, 2500, seed=7).sample_ids
    assert m.metadata["replacement"] == []


def test_mix_all_seen_and_replacement():
    seen = generate(SynthParams(n=10, seed=1))
    unseen = generate(SynthParams(n=10, seed=2, unseen_fraction=1.0))
    m = mix_traces(seen, unseen, 1.0, 25, seed=0)
    assert all(r.object_tag == "seen" for r in m)
    assert m.metadata["replacement"] == ["seen"]
    assert validate(m) == []


def test_mix_rejects_class_mismatch():
    a = generate(SynthParams(n=3, num_classes=4))
    b = generate(SynthParams(n=3, num_classes=5))
    with pytest.raises(TraceError):
        mix_traces(a, b, 0.5, 4, 0)


def test_mix_bytewise_deterministic(tmp_path):
    seen = generate(SynthParams(n=50, seed=1))
    unseen = generate(SynthParams(n=50, seed=2))
    write_trace(mix_traces(seen, unseen, 0.8, 40, 3), tmp_path / "a")
    write_trace(mix_traces(seen, unseen, 0.8, 40, 3), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_top_confidence_examples():
    assert top_confidence([0.7, 0.2, 0.1]) == (0, 0.7)
    onehot = [0.0] * 13
    onehot[5] = 1.0
    assert top_confidence(onehot) == (5, 1.0)
    assert top_confidence([0.5, 0.5]) == (0, 0.5)
    with pytest.raises(TraceError):
        top_confidence([0.5, 0.2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20).filter(lambda v: sum(v) > 1e-6))
def test_top_confidence_at_least_uniform(raw):
    p = np.array(raw) / sum(raw)
    _, conf = top_confidence(p)
    assert conf >= 1.0 / len(p) - 1e-12
