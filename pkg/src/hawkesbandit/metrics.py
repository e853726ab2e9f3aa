"""Per-visit evaluation of a ranked recommendation.

``gains`` are the event counts of the recommended cells in rank order;
``true_gains`` are the counts of every cell in the same window.  A cell is
relevant when it holds at least one event.

Degenerate windows with no events anywhere score NDCG = 1 and 0 on every
hit-based metric.  The hit-based metrics are ratios of small integers; they
are evaluated exactly and rounded once.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class RankedResult:
    gains: tuple
    true_gains: tuple

    @classmethod
    def from_counts(cls, ranked_cells, counts):
        counts = np.asarray(counts)
        return cls(tuple(int(counts[a]) for a in ranked_cells), tuple(int(c) for c in counts))

    @property
    def n(self):
        return len(self.gains)

    @property
    def hits(self):
        return [1 if g > 0 else 0 for g in self.gains]

    @property
    def n_relevant(self):
        return sum(1 for g in self.true_gains if g > 0)


def reward_bar(total_reward, total_events):
    """Fraction of all events that were discovered (0 when there were none)."""
    if total_events < 0:
        raise ValueError("total_events must be >= 0")
    if total_events == 0:
        return 0.0
    return total_reward / total_events


def _dcg(gains):
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


def ndcg_at_n(result):
    """Linear-gain NDCG over the ranked list; the ideal list takes the N largest true gains."""
    ideal = sorted(result.true_gains, reverse=True)[: result.n]
    idcg = _dcg(ideal)
    if idcg == 0:
        return 1.0
    return _dcg(result.gains) / idcg


def mrhr(result):
    """Modified reciprocal hit rank: consecutive hits share a rank, each miss advances it."""
    g = result.n_relevant
    if g == 0:
        return 0.0
    total = Fraction(0)
    rank = 1
    prev_hit = None
    for h in result.hits:
        if prev_hit is not None and not prev_hit:
            rank += 1
        total += Fraction(h, rank)
        prev_hit = h
    return float(total / g)


def _prf(result):
    hits = sum(result.hits)
    g = result.n_relevant
    rec = Fraction(hits, g) if g else Fraction(0)
    prc = Fraction(hits, result.n) if result.n else Fraction(0)
    f1 = 2 * rec * prc / (rec + prc) if (rec + prc) > 0 else Fraction(0)
    return rec, prc, f1


def prf(result):
    """(recall, precision, f1)."""
    return tuple(float(v) for v in _prf(result))


def _norm_precision_at(hits, g, k):
    return Fraction(sum(hits[:k]), k) / Fraction(min(g, k), k)


def norm_precision(result):
    """Precision divided by the best precision any list of the same length could reach."""
    g = result.n_relevant
    if g == 0:
        return 0.0
    return float(_norm_precision_at(result.hits, g, result.n))


def avg_norm_precision(result):
    """Sum of normalised precision at each cut-off k <= N, divided by the number of
    relevant cells and clamped to 1 (it can exceed 1 when N > |relevant|)."""
    g = result.n_relevant
    if g == 0:
        return 0.0
    hits = result.hits
    total = sum((_norm_precision_at(hits, g, k) for k in range(1, result.n + 1)), Fraction(0))
    return float(min(Fraction(1), total / g))
METRIC_NAMES = ("ndcg", "mrhr", "rec", "prc", "f1", "nprc", "aprc")


def evaluate(result):
    """All per-visit ranking metrics as a dict."""
    rec, prc, f1 = prf(result)
    return {
        "ndcg": ndcg_at_n(result),
        "mrhr": mrhr(result),
        "rec": rec,
        "prc": prc,
        "f1": f1,
        "nprc": norm_precision(result),
        "aprc": avg_norm_precision(result),
    }
