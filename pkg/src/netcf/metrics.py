"""Accuracy (RMSE, MAE) and list-quality (precision/recall/F1, BCRI) metrics."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np


class UndefinedMetricError(ValueError):
    pass


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise UndefinedMetricError("RMSE of an empty error vector")
    return float(np.sqrt(np.mean(e * e)))


def mae(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise UndefinedMetricError("MAE of an empty error vector")
    return float(np.mean(np.abs(e)))


class F1Result(NamedTuple):
    precision: float
    recall: float
    f1: float
    applicable: bool


def _ranked(scores: Mapping, keys=None):
    """Keys by descending score, ties by ascending key; ``None`` scores rank last."""
    keys = scores.keys() if keys is None else keys
    return sorted(keys, key=lambda k: (scores[k] is None, -(scores[k] or 0.0), k))


def f1(predicted: Mapping, actual: Mapping, threshold=4, list_size=10) -> F1Result:
    """Precision, recall and F1 of the recommended list against relevant test items.

    Relevant items have an actual rating ``>= threshold``; the recommended list
    holds the top ``list_size`` items whose prediction is ``>= threshold``. When
    either list is empty all three values are 0 and ``applicable`` is False.
    """
    relevant = {k for k, r in actual.items() if r >= threshold}
    eligible = [k for k in actual if predicted.get(k) is not None and predicted[k] >= threshold]
    recommended = set(_ranked(predicted, eligible)[:list_size])
    if not relevant or not recommended:
        return F1Result(0.0, 0.0, 0.0, False)
    hits = len(relevant & recommended)
    p = hits / len(recommended)
    r = hits / len(relevant)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return F1Result(p, r, f, True)


def bcri(predicted: Mapping, actual: Mapping, t=5) -> int:
    """Overlap of the top-``t`` actually rated and top-``t`` predicted test items.

    Ties break by ascending item index; abstained predictions rank last. With
    fewer than ``t`` test items, ``t`` is lowered to their number.
    """
    t = min(t, len(actual))
    best_actual = set(_ranked(actual)[:t])
    pred = {k: predicted.get(k) for k in actual}
    best_pred = set(_ranked(pred)[:t])
    return len(best_actual & best_pred)


def count_undefined(s, anchors, candidates=None) -> int:
    """Number of (anchor, candidate) pairs, anchor != candidate, with an undefined score."""
    anchors = np.asarray(list(anchors), dtype=np.int64)
    if len(anchors) == 0:
        return 0
    if candidates is None:
        cand = np.arange(s.n)
    else:
        cand = np.asarray(list(candidates), dtype=np.int64)
    undefined = ~s.defined[np.ix_(anchors, cand)]
    undefined &= anchors[:, None] != cand[None, :]
    return int(undefined.sum())


METRIC_NAMES = ("rmse", "mae", "precision", "recall", "f1", "bcri")


@dataclass
class EntityScores:
    rmse: float
    mae: float
    precision: float
    recall: float
    f1: float
    bcri: int
    f1_applicable: bool
    bcri_t: int
    n_test: int
    n_predicted: int


@dataclass
class EvaluationReport:
    per_entity: dict
    aggregate: dict
    undefined_similarity_count: int = 0
    abstained_count: int = 0
    f1_inapplicable_count: int = 0
    bcri_lowered_count: int = 0
    config: dict = field(default_factory=dict)

    def rows(self, entity_ids=None):
        """Per-entity rows followed by one ``ALL`` aggregate row."""
        for e in sorted(self.per_entity):
            sc = self.per_entity[e]
            label = entity_ids[e] if entity_ids is not None else e
            yield [label] + [getattr(sc, m) for m in METRIC_NAMES]
        yield ["ALL"] + [self.aggregate[m] for m in METRIC_NAMES]


def evaluate(predictions: Iterable, test: Mapping, axis="user", threshold=4, list_size=10,
             t=5, undefined_similarity_count=0, config=None) -> EvaluationReport:
    """Score predictions of held-out ratings per entity on ``axis``.

    Entities with no valued prediction are left out of the aggregates, which are
    unweighted means over the remaining entities. ``aggregate["f1_applicable"]``
    averages F1 over entities where it is applicable only.
    """
    by_entity_pred = defaultdict(dict)
    by_entity_actual = defaultdict(dict)
    abstained = 0
    for p in predictions:
        key, other = (p.user, p.item) if axis == "user" else (p.item, p.user)
        by_entity_pred[key][other] = p.value
        abstained += p.value is None
    for (u, i), r in test.items():
        key, other = (u, i) if axis == "user" else (i, u)
        by_entity_actual[key][other] = r

    per_entity = {}
    inapplicable = lowered = 0
    for e in sorted(by_entity_actual):
        actual = by_entity_actual[e]
        pred = by_entity_pred.get(e, {})
        errors = [pred[k] - actual[k] for k in sorted(actual) if pred.get(k) is not None]
        if not errors:
            continue
        fr = f1(pred, actual, threshold, list_size)
        inapplicable += not fr.applicable
        lowered += len(actual) < t
        per_entity[e] = EntityScores(rmse(errors), mae(errors), fr.precision, fr.recall, fr.f1,
                                     bcri(pred, actual, t), fr.applicable, min(t, len(actual)),
                                     len(actual), len(errors))

    aggregate = {}
    scores = [per_entity[e] for e in sorted(per_entity)]
    for m in METRIC_NAMES:
        vals = [float(getattr(sc, m)) for sc in scores]
        aggregate[m] = math.fsum(vals) / len(vals) if vals else float("nan")
    applicable = [sc.f1 for sc in scores if sc.f1_applicable]
    aggregate["f1_applicable"] = math.fsum(applicable) / len(applicable) if applicable else float("nan")
    aggregate["n_entities"] = len(scores)
    return EvaluationReport(per_entity, aggregate, int(undefined_similarity_count), abstained,
                            inapplicable, lowered, dict(config or {}))


def write_report_csv(report: EvaluationReport, path, entity_ids=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", *METRIC_NAMES])
        for row in report.rows(entity_ids):
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return "NA" if math.isnan(v) else repr(v)
