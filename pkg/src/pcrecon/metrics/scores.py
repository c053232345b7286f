"""Chamfer distance, F-score and challenge track scores."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyCloud, NonPositiveTau
from ..geometry.types import as_points
from . import bruteforce
from .kdtree import NnIndex

CHAMFER_MODES = ("l2", "squared_l2")
AGGREGATIONS = ("mean", "max")
TRACK_WEIGHTS = {"A": 0.5, "B": 0.3}  # weight on the CD term; F-score gets the rest
DEFAULT_TAU = 0.02
# below this many distance evaluations an exhaustive scan beats building trees;
# both paths return bit-identical results
BRUTE_FORCE_PAIRS = 4096


def _points(cloud, what):
    try:
        return as_points(cloud)
    except EmptyCloud:
        raise EmptyCloud(f"{what} cloud is empty") from None


def nn_both_ways(s, t):
    """Squared NN distances and indices from s into t and from t into s."""
    s, t = _points(s, "first"), _points(t, "second")
    if len(s) * len(t) <= BRUTE_FORCE_PAIRS:
        d_st, i_st = bruteforce.nearest_d2(s, t)
        d_ts, i_ts = bruteforce.nearest_d2(t, s)
        return d_st, i_st, d_ts, i_ts
    d_st, i_st = NnIndex(t).query_d2(s)
    d_ts, i_ts = NnIndex(s).query_d2(t)
    return d_st, i_st, d_ts, i_ts


def chamfer_terms(d_st2, d_ts2, mode, aggregation):
    if mode not in CHAMFER_MODES:
        raise ValueError(f"unknown chamfer mode {mode!r}")
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    if mode == "l2":
        d_st2, d_ts2 = np.sqrt(d_st2), np.sqrt(d_ts2)
    reduce = bounded_mean if aggregation == "mean" else np.max
    return float(reduce(d_st2)), float(reduce(d_ts2))


def bounded_mean(x):
    """Mean clipped to [min, max]; summation rounding can otherwise push the
    mean of equal values one ulp past their maximum."""
    return min(max(np.mean(x), np.min(x)), np.max(x))


def chamfer(s, t, mode="l2", aggregation="mean"):
    """Symmetric Chamfer distance.

    With ``mode="l2"`` and ``aggregation="mean"`` this is the mean nearest
    neighbour distance from ``s`` to ``t`` plus the mean from ``t`` to ``s``.
    ``aggregation="max"`` takes the largest distance in each direction
    instead; ``mode="squared_l2"`` uses squared distances.
    """
    d_st, _, d_ts, _ = nn_both_ways(s, t)
    a, b = chamfer_terms(d_st, d_ts, mode, aggregation)
    return a + b


def _fscore_from_distances(d_pg, d_gp, tau):
    precision = 100.0 * np.count_nonzero(d_pg <= tau) / len(d_pg)
    recall = 100.0 * np.count_nonzero(d_gp <= tau) / len(d_gp)
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f


def fscore(pred, gt, tau=DEFAULT_TAU):
    """Precision, recall and F-score in percent at threshold ``tau`` (inclusive)."""
    if not tau > 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    d_pg, _, d_gp, _ = nn_both_ways(pred, gt)
    return _fscore_from_distances(np.sqrt(d_pg), np.sqrt(d_gp), tau)


def track_score(cd, fscore, track="A"):
    """Challenge score from a raw (not x100) Chamfer distance and a percent F-score.

    CD outside [0, 2] is clamped and a ``RuntimeWarning`` is issued.
    """
    if track not in TRACK_WEIGHTS:
        raise ValueError(f"unknown track {track!r}; expected 'A' or 'B'")
    if not 0.0 <= cd <= 2.0:
        warnings.warn(f"CD {cd!r} outside [0, 2]; clamped for the track score", RuntimeWarning, stacklevel=2)
        cd = min(max(cd, 0.0), 2.0)
    w = TRACK_WEIGHTS[track]
    return 100.0 * (2.0 - cd) / 2.0 * w + fscore * (1.0 - w)


# Order of fields in MetricsReport.to_record(); part of the harness contract.
RECORD_FIELDS = ("cd", "precision", "recall", "fscore", "tau", "score_track_a", "score_track_b")


@dataclass
class MetricsReport:
    cd: float
    precision: float
    recall: float
    fscore: float
    tau: float
    score_track_a: float
    score_track_b: float
    warnings: list = field(default_factory=list)

    def to_kv(self):
        """Flat ``key=value`` lines. CD is raw, not x100."""
        lines = [f"{name}={getattr(self, name)!r}" for name in RECORD_FIELDS]
        lines += [f"warning={w}" for w in self.warnings]
        return "\n".join(lines) + "\n"

    def to_record(self):
        """Single tab-separated line with the fields of ``RECORD_FIELDS``, in order."""
        return "\t".join(repr(float(getattr(self, name))) for name in RECORD_FIELDS)

    @classmethod
    def from_record(cls, line):
        values = [float(v) for v in line.strip().split("\t")]
        if len(values) != len(RECORD_FIELDS):
            raise ValueError(f"record has {len(values)} fields, expected {len(RECORD_FIELDS)}")
        return cls(*values)


def report_from_values(cd, precision, recall, f, tau):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a = track_score(cd, f, "A")
        b = track_score(cd, f, "B")
    notes = sorted({str(w.message) for w in caught})
    return MetricsReport(cd, precision, recall, f, tau, a, b, notes)


def evaluate(pred, gt, tau=DEFAULT_TAU):
    """All challenge metrics for one prediction (l2, mean-aggregated CD)."""
    if not tau > 0:
        raise NonPositiveTau(f"tau must be > 0, got {tau}")
    d_pg2, _, d_gp2, _ = nn_both_ways(pred, gt)
    a, b = chamfer_terms(d_pg2, d_gp2, "l2", "mean")
    precision, recall, f = _fscore_from_distances(np.sqrt(d_pg2), np.sqrt(d_gp2), tau)
    return report_from_values(a + b, precision, recall, f, tau)
