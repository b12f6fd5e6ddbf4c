"""Builders for small hand-made traces."""

import numpy as np

from offloadsim.trace import PredictionRecord, Trace


def probs_with_top(pred, conf, num_classes):
    """Vector with ``conf`` on ``pred`` and the rest spread evenly."""
    rest = (1.0 - conf) / (num_classes - 1)
    p = [rest] * num_classes
    p[pred] = conf
    return tuple(p)


def record(i, truth, pred, conf, cloud, num_classes=6, tag="seen",
           edge_ms=20.0, cloud_ms=186.0, features=None):
    return PredictionRecord(
        sample_id=f"r{i:02d}",
        object_tag=tag,
        ground_truth=truth,
        edge_probs=probs_with_top(pred, conf, num_classes),
        edge_latency_ms=edge_ms,
        cloud_pred=cloud,
        cloud_latency_ms=cloud_ms,
        features=features,
    )


def trace_from_rows(rows, num_classes=6, **kw):
    """rows: (truth, edge_pred, conf, cloud_pred) tuples."""
    recs = [record(i, t, p, c, cl, num_classes, **kw) for i, (t, p, c, cl) in enumerate(rows)]
    return Trace(tuple(recs), num_classes)


def random_trace(rng, n, num_classes, edge_ms=20.0, cloud_ms=186.0, tags=False):
    """Unstructured random trace: Dirichlet probabilities, random labels."""
    alpha = rng.uniform(0.2, 3.0)
    p = rng.dirichlet(np.full(num_classes, alpha), size=n)
    truth = rng.integers(0, num_classes, n)
    # bias the labels toward the argmax so accuracy is not trivially 1/C
    hit = rng.random(n) < rng.random()
    truth = np.where(hit, p.argmax(axis=1), truth)
    cloud = np.where(rng.random(n) < rng.random(), truth, rng.integers(0, num_classes, n))
    recs = tuple(
        PredictionRecord(f"x{i}", "unseen" if tags and rng.random() < 0.3 else "seen", int(truth[i]),
                         tuple(p[i].tolist()), edge_ms, int(cloud[i]), cloud_ms)
        for i in range(n)
    )
    return Trace(recs, num_classes)
