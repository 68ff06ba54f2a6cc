"""Two naive explainers used as comparison points.

RuleOfThumb ranks raw features once by regression Relief importance for
duration and explains any pair by the top-ranked features it disagrees
on.  SimButDiff looks at related pairs that agree with the pair of
interest on most isSame features and scores each feature by how often
disagreeing on it coincides with the expected behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .explainer import ExplainError, Problem, prepare
from .logmodel import NOMINAL, OUTCOME, ExecutionLog
from .metrics import Explanation, query_masks
from .pairs import FALSE, ISSAME, PairExample, derived_name
from .pxql import EQ, AtomicPredicate, Clause, PXQLQuery


class DegenerateLogError(ExplainError):
    pass


@dataclass(frozen=True)
class FeatureWeightTable:
    weights: dict[str, float]

    def ranking(self) -> list[str]:
        """Raw feature names, most important first (ties by name)."""
        return sorted(self.weights, key=lambda f: (-self.weights[f], f))

    def to_dict(self) -> dict:
        return dict(self.weights)


# -- Relief --------------------------------------------------------------------

def _diff_matrix(log: ExecutionLog, name: str) -> np.ndarray:
    """Per-feature difference between every two records, in [0, 1]."""
    f = log.feature(name)
    vals = [r.values.get(name) for r in log.records]
    missing = np.array([v is None for v in vals])
    if f.kind == NOMINAL:
        codes = np.array([-1 if v is None else f.domain.index(v) for v in vals])
        d = (codes[:, None] != codes[None, :]).astype(float)
    else:
        x = np.array([np.nan if v is None else float(v) for v in vals])
        present = x[~missing]
        span = (present.max() - present.min()) if len(present) else 0.0
        if span > 0:
            d = np.abs(x[:, None] - x[None, :]) / span
        else:
            d = np.zeros((len(x), len(x)))
    either = missing[:, None] | missing[None, :]
    return np.where(either, 0.5, d)


def relief_weights(log: ExecutionLog, k_neighbors: int = 10, iterations: int | None = None,
                   rng: np.random.Generator | None = None) -> FeatureWeightTable:
    """Regression Relief (RReliefF) importance of each raw feature for duration.

    For each sampled record R and each of its k nearest neighbours I
    (Manhattan distance over the feature differences), with equal neighbour
    weights 1/k, accumulate

        N_dC      += diff(duration, R, I) / k
        N_dA[f]   += diff(f, R, I) / k
        N_dCdA[f] += diff(duration, R, I) * diff(f, R, I) / k

    and finally W[f] = N_dCdA/N_dC - (N_dA - N_dCdA)/(m - N_dC).
    ``iterations`` defaults to the log size, in which case every record is
    used exactly once; smaller values sample records without replacement.
    """
    n = len(log)
    if n < k_neighbors + 1:
        k_neighbors = n - 1
    if k_neighbors < 1:
        raise DegenerateLogError("relief needs at least two records")
    names = [f.name for f in log.schema if f.name != OUTCOME]
    diffs = {name: _diff_matrix(log, name) for name in names}
    target = _diff_matrix(log, OUTCOME)
    if not target.any():
        raise DegenerateLogError("all records have the same duration")
    dist = sum(diffs.values()) if names else np.zeros((n, n))

    m = n if iterations is None else min(iterations, n)
    if m >= n:
        sampled = np.arange(n)
    else:
        rng = rng or np.random.default_rng(0)
        sampled = rng.choice(n, size=m, replace=False)

    n_dc = 0.0
    n_da = dict.fromkeys(names, 0.0)
    n_dcda = dict.fromkeys(names, 0.0)
    for i in sampled:
        others = np.array([j for j in range(n) if j != i])
        order = np.lexsort((others, dist[i, others]))
        near = others[order[:k_neighbors]]
        w = 1.0 / k_neighbors
        dc = target[i, near]
        n_dc += w * dc.sum()
        for name in names:
            da = diffs[name][i, near]
            n_da[name] += w * da.sum()
            n_dcda[name] += w * (dc * da).sum()

    weights = {}
    for name in names:
        first = n_dcda[name] / n_dc if n_dc else 0.0
        rest = m - n_dc
        second = (n_da[name] - n_dcda[name]) / rest if rest > 0 else 0.0
        weights[name] = first - second
    return FeatureWeightTable(weights)


def rule_of_thumb_explain(q: PXQLQuery, table: FeatureWeightTable, pair: PairExample,
                          width: int) -> Explanation:
    """Top-``width`` most important raw features the pair disagrees on, as isSame = F atoms."""
    atoms = []
    for raw in table.ranking():
        if len(atoms) >= width:
            break
        name = derived_name(raw, ISSAME)
        if pair.derived.get(name) == FALSE:
            atoms.append(AtomicPredicate(name, EQ, FALSE))
    return Explanation(des_prime=q.des, bec=Clause(tuple(atoms)), method="ruleofthumb")


# -- SimButDiff ------------------------------------------------------------------

@dataclass
class SimButDiffResult:
    scores: dict[str, float]
    similar: int
    explanation: Explanation


def sim_but_diff_scores(same: dict[str, np.ndarray], expected: np.ndarray,
                        poi_values: dict[str, int], s: float) -> tuple[dict[str, float], np.ndarray]:
    """Score isSame features over training examples given as 1/0/-1 columns.

    Returns the per-feature scores and the mask of examples deemed similar.
    """
    names = sorted(poi_values)
    if not names:
        return {}, np.zeros(len(expected), bool)
    k = math.ceil(s * len(names) - 1e-9)
    agree = sum((same[f] == poi_values[f]).astype(int) for f in names)
    similar = agree >= k
    scores = {}
    for f in names:
        col = same[f][similar]
        disagree = (col != -1) & (col != poi_values[f])
        d = int(disagree.sum())
        o = int((disagree & expected[similar]).sum())
        scores[f] = o / d if d else 0.0
    return scores, similar


def sim_but_diff_explain(q: PXQLQuery, log: ExecutionLog, pair: PairExample | None = None,
                         width: int = 3, s: float = 0.9, problem: Problem | None = None,
                         similarity_threshold: float = 0.10) -> SimButDiffResult:
    from .explainer import ExplainerConfig
    problem = problem or prepare(q, log, ExplainerConfig(similarity_threshold=similarity_threshold))
    pair = pair or problem.pair
    q = problem.query
    raws = [f.name for f in log.schema if f.role != "outcome"]
    poi_values = {}
    for raw in raws:
        v = pair.derived.get(derived_name(raw, ISSAME))
        if v is not None:
            poi_values[derived_name(raw, ISSAME)] = 1 if v == "T" else 0

    poi_l = problem.encoded.index_of(q.left_id)
    poi_r = problem.encoded.index_of(q.right_id)
    same_parts = {f: [] for f in poi_values}
    exp_parts = []
    for block in problem.encoded.iter_blocks():
        obs, exp = query_masks(block, q)
        keep = (obs | exp) & ~((block.left == poi_l) & (block.right == poi_r))
        if not keep.any():
            continue
        sub = block.take(np.flatnonzero(keep))
        exp_parts.append(exp[keep])
        for f in poi_values:
            same_parts[f].append(sub.column(f))
    if not exp_parts:
        raise ExplainError("no related pairs")
    expected = np.concatenate(exp_parts)
    same = {f: np.concatenate(v) for f, v in same_parts.items()}
    scores, similar = sim_but_diff_scores(same, expected, poi_values, s)
    if not similar.any():
        raise ExplainError(f"no similar pairs at threshold s={s}")
    ranked = sorted(scores, key=lambda f: (-scores[f], f))
    atoms = [AtomicPredicate(f, EQ, "T" if poi_values[f] else "F") for f in ranked[:width]]
    e = Explanation(des_prime=q.des, bec=Clause(tuple(atoms)), method="simbutdiff")
    return SimButDiffResult(scores, int(similar.sum()), e)
