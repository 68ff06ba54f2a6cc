"""Pair classification and explanation quality metrics.

All three metrics are conditional frequencies over the *related* pairs of
a log (those satisfying the despite clause and either the observed or the
expected clause):

    relevance   = P(exp | des' ^ des)
    precision   = P(obs | bec ^ des' ^ des)
    generality  = P(bec | des' ^ des)

A zero denominator gives an undefined metric (``None``), kept distinct
from 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .pairs import EncodedLog, PairExample, PairTable
from .pxql import Clause, PXQLQuery, TRUE_CLAUSE, clause_mask, eval_clause

OBSERVED = "observed"
EXPECTED = "expected"
UNRELATED = "unrelated"


@dataclass(frozen=True)
class Ratio:
    num: int
    den: int

    @property
    def value(self) -> float | None:
        return self.num / self.den if self.den else None

    def __add__(self, other: "Ratio") -> "Ratio":
        return Ratio(self.num + other.num, self.den + other.den)

    def to_dict(self) -> dict:
        return {"value": self.value, "num": self.num, "den": self.den}


@dataclass(frozen=True)
class Scores:
    relevance: Ratio
    precision: Ratio
    generality: Ratio

    def to_dict(self) -> dict:
        return {
            "relevance": self.relevance.value,
            "precision": self.precision.value,
            "generality": self.generality.value,
            "counts": {
                "relevance": {"num": self.relevance.num, "den": self.relevance.den},
                "precision": {"num": self.precision.num, "den": self.precision.den},
                "generality": {"num": self.generality.num, "den": self.generality.den},
            },
        }


@dataclass
class Explanation:
    """A (despite', because) pair plus how it scored.

    ``des_prime`` is the full despite clause: the user's atoms followed by
    any generated extension.
    """
    des_prime: Clause = TRUE_CLAUSE
    bec: Clause = TRUE_CLAUSE
    scores: Scores | None = None
    per_atom_marginals: list[tuple[str, str, float | None]] = field(default_factory=list)
    method: str = "perfxplain"
    trace: list[dict] = field(default_factory=list)

    def text(self) -> str:
        return f"DESPITE {self.des_prime}\nBECAUSE {self.bec}"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "despite": [str(a) for a in self.des_prime],
            "because": [str(a) for a in self.bec],
            "text": self.text(),
            "scores": self.scores.to_dict() if self.scores else None,
            "marginals": [
                {"clause": c, "atom": a, "score": s} for c, a, s in self.per_atom_marginals
            ],
            "trace": self.trace,
        }


def classify_pair(pair: PairExample, q: PXQLQuery) -> str:
    if not eval_clause(q.des, pair):
        return UNRELATED
    if eval_clause(q.obs, pair):
        return OBSERVED
    if eval_clause(q.exp, pair):
        return EXPECTED
    return UNRELATED


def query_masks(table: PairTable, q: PXQLQuery) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (observed, expected) masks of a pair table under a query."""
    des = clause_mask(q.des, table)
    obs = des & clause_mask(q.obs, table)
    exp = des & clause_mask(q.exp, table) & ~obs
    return obs, exp


def _blocks(pairs) -> Iterable[PairTable]:
    if isinstance(pairs, EncodedLog):
        return pairs.iter_blocks()
    if isinstance(pairs, PairTable):
        return (pairs,)
    return pairs


def score(des_prime: Clause, bec: Clause, q: PXQLQuery, pairs) -> Scores:
    """Count the three metrics over ``pairs``.

    ``pairs`` is a :class:`PairTable`, an :class:`EncodedLog` (all ordered
    pairs, streamed in blocks), or an iterable of pair tables.
    """
    rel_num = rel_den = prec_num = prec_den = 0
    for table in _blocks(pairs):
        obs, exp = query_masks(table, q)
        context = clause_mask(des_prime, table)
        related = context & (obs | exp)
        because = related & clause_mask(bec, table)
        rel_num += int(np.count_nonzero(context & exp))
        rel_den += int(np.count_nonzero(related))
        prec_num += int(np.count_nonzero(because & obs))
        prec_den += int(np.count_nonzero(because))
    return Scores(
        relevance=Ratio(rel_num, rel_den),
        precision=Ratio(prec_num, prec_den),
        generality=Ratio(prec_den, rel_den),
    )


def score_explanation(e: Explanation, q: PXQLQuery, pairs) -> Scores:
    return score(e.des_prime, e.bec, q, pairs)


def relevance(e: Explanation, q: PXQLQuery, pairs) -> float | None:
    return score_explanation(e, q, pairs).relevance.value


def precision(e: Explanation, q: PXQLQuery, pairs) -> float | None:
    return score_explanation(e, q, pairs).precision.value


def generality(e: Explanation, q: PXQLQuery, pairs) -> float | None:
    return score_explanation(e, q, pairs).generality.value


def is_applicable(e: Explanation, pair: PairExample) -> bool:
    return eval_clause(e.des_prime, pair) and eval_clause(e.bec, pair)
