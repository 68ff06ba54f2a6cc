"""Greedy explanation generation.

The because clause is grown one atom at a time.  Each round picks, for
every derived feature, the atom with the highest information gain that
still holds on the pair of interest; those per-feature winners are then
ranked by a weighted mix of the percentile ranks of their precision and
generality over the surviving sample, and the best one is appended.
The despite extension is grown the same way with relevance in place of
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .logmodel import ExecutionLog
from .metrics import Explanation, query_masks, score
from .pairs import (
    DerivedFeature, EncodedLog, PairExample, PairFeatureCatalog, PairTable, build_pair,
)
from .pxql import (
    EQ, GT_OP, LE, AtomicPredicate, Clause, PXQLQuery, TRUE_CLAUSE,
    atom_mask, clause_mask, eval_clause, validate_query,
)

TIE_EPS = 1e-12


class ExplainError(Exception):
    exit_code = 1


class InvalidQueryError(ExplainError):
    exit_code = 2

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid query:\n" + "\n".join("  " + d for d in self.diagnostics))


class NoRelatedPairsError(ExplainError):
    exit_code = 3


class PairNotFoundError(ExplainError):
    exit_code = 2


@dataclass(frozen=True)
class ExplainerConfig:
    width: int = 3
    precision_weight: float = 0.8
    sample_size: int = 2000
    similarity_threshold: float = 0.10
    feature_level: int = 3
    relevance_threshold: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("width must be >= 0")
        if not 0.0 <= self.precision_weight <= 1.0:
            raise ValueError("precision_weight must lie in [0, 1]")
        if self.sample_size <= 0:
            raise ValueError("sample_size must be positive")
        if self.similarity_threshold < 0:
            raise ValueError("similarity_threshold must be >= 0")
        if self.feature_level not in (1, 2, 3):
            raise ValueError("feature_level must be 1, 2 or 3")
        if self.relevance_threshold is not None and not 0.0 <= self.relevance_threshold <= 1.0:
            raise ValueError("relevance_threshold must lie in [0, 1]")


@dataclass
class CandidatePredicate:
    atom: AtomicPredicate
    info_gain: float
    precision: float | None = None
    generality: float | None = None
    score: float = 0.0

    def to_dict(self) -> dict:
        return {"atom": str(self.atom), "info_gain": self.info_gain, "precision": self.precision,
                "generality": self.generality, "score": self.score}


# -- information gain ----------------------------------------------------------

def entropy(p: float) -> float:
    """Binary entropy in bits, with H(0) = H(1) = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def split_gain(n: int, pos: int, n_sat: int, pos_sat: int) -> float:
    """Information gain of splitting ``n`` examples (``pos`` positive) on a predicate."""
    if n == 0:
        return 0.0
    n_rest, pos_rest = n - n_sat, pos - pos_sat
    h = entropy(pos / n)
    h_sat = entropy(pos_sat / n_sat) if n_sat else 0.0
    h_rest = entropy(pos_rest / n_rest) if n_rest else 0.0
    return h - (n_sat / n) * h_sat - (n_rest / n) * h_rest


def information_gain(labels, satisfied) -> float:
    labels = np.asarray(labels, dtype=bool)
    satisfied = np.asarray(satisfied, dtype=bool)
    if len(labels) == 0:
        raise ValueError("information gain of an empty population")
    return split_gain(len(labels), int(labels.sum()), int(satisfied.sum()),
                      int((labels & satisfied).sum()))


def _pick(items, value):
    """Max by ``value`` with near-ties broken by the atom's lexicographic key."""
    best = None
    for it in items:
        v = value(it)
        if best is None or v > best[0] + TIE_EPS:
            best = (v, it)
        elif v >= best[0] - TIE_EPS and it.atom.sort_key() < best[1].atom.sort_key():
            best = (max(v, best[0]), it)
    return None if best is None else best[1]


def best_predicate_for_feature(feature: DerivedFeature, table: PairTable, positive: np.ndarray,
                               poi: int, exclude=frozenset()) -> CandidatePredicate | None:
    """The max-information-gain atom on ``feature`` that holds on pair ``poi`` of ``table``.

    Pairs missing the feature take no part in the gain computation.
    """
    col = table.column(feature)
    if feature.is_numeric:
        present = ~np.isnan(col)
    else:
        present = col != -1
    if not present[poi]:
        return None
    vals = col[present]
    lab = positive[present]
    n, pos = len(vals), int(lab.sum())
    candidates = []
    if not feature.is_numeric:
        atom = AtomicPredicate(feature.name, EQ, table.decode(feature, poi))
        if atom not in exclude:
            sat = vals == col[poi]
            candidates.append(CandidatePredicate(atom, split_gain(n, pos, int(sat.sum()), int(lab[sat].sum()))))
        return _pick(candidates, lambda c: c.info_gain)

    v0 = float(col[poi])
    order = np.argsort(vals, kind="stable")
    sv, sl = vals[order], lab[order]
    uniq, first = np.unique(sv, return_index=True)
    cum_n = np.append(first[1:], n)                       # count of values <= uniq[i]
    cum_pos = np.concatenate([[0], np.cumsum(sl)])[cum_n]  # positives among them
    eq_idx = int(np.searchsorted(uniq, v0))
    n_eq = cum_n[eq_idx] - (cum_n[eq_idx - 1] if eq_idx else 0)
    pos_eq = cum_pos[eq_idx] - (cum_pos[eq_idx - 1] if eq_idx else 0)
    atom = AtomicPredicate(feature.name, EQ, v0)
    if atom not in exclude:
        candidates.append(CandidatePredicate(atom, split_gain(n, pos, int(n_eq), int(pos_eq))))
    for i in range(len(uniq) - 1):
        t = float((uniq[i] + uniq[i + 1]) / 2.0)
        n_le, pos_le = int(cum_n[i]), int(cum_pos[i])
        if v0 <= t:
            atom = AtomicPredicate(feature.name, LE, t)
            n_sat, pos_sat = n_le, pos_le
        else:
            atom = AtomicPredicate(feature.name, GT_OP, t)
            n_sat, pos_sat = n - n_le, pos - pos_le
        if atom not in exclude:
            candidates.append(CandidatePredicate(atom, split_gain(n, pos, n_sat, pos_sat)))
    return _pick(candidates, lambda c: c.info_gain)


def normalize_scores(values) -> list[float]:
    """Percentile ranks: share of defined values <= v; undefined values map to 0."""
    defined = sorted(v for v in values if v is not None)
    total = len(defined)
    out = []
    for v in values:
        if v is None:
            out.append(0.0)
        else:
            out.append(int(np.searchsorted(defined, v, side="right")) / total)
    return out


# -- sampling ------------------------------------------------------------------

def keep_probabilities(n_obs: int, n_exp: int, m: int) -> tuple[float, float]:
    if m <= 0:
        raise ValueError("sample size must be positive")
    p_obs = min(1.0, m / (2 * n_obs)) if n_obs else 1.0
    p_exp = min(1.0, m / (2 * n_exp)) if n_exp else 1.0
    return p_obs, p_exp


def balanced_sample(observed, expected, m: int, rng: np.random.Generator,
                    keep: int | None = None) -> np.ndarray:
    """Indices of a label-balanced Bernoulli sample of labelled examples.

    Each observed example is kept with probability m / (2 * #observed),
    each expected one with m / (2 * #expected), both capped at 1.  Index
    ``keep`` (the pair of interest) is always included.
    """
    observed = np.asarray(observed, dtype=bool)
    expected = np.asarray(expected, dtype=bool)
    p_obs, p_exp = keep_probabilities(int(observed.sum()), int(expected.sum()), m)
    prob = np.where(observed, p_obs, np.where(expected, p_exp, 0.0))
    kept = rng.random(len(prob)) < prob
    if keep is not None:
        kept[keep] = True
    return np.flatnonzero(kept)


# -- problem setup ---------------------------------------------------------------

@dataclass
class Problem:
    """A validated query bound to a log, ready for explanation."""
    query: PXQLQuery
    log: ExecutionLog
    encoded: EncodedLog
    catalog: PairFeatureCatalog
    pair: PairExample

    @property
    def features(self) -> list[DerivedFeature]:
        return self.catalog.candidates()


def prepare(q: PXQLQuery, log: ExecutionLog, cfg: ExplainerConfig | None = None,
            encoded: EncodedLog | None = None) -> Problem:
    cfg = cfg or ExplainerConfig()
    if not q.bound:
        raise PairNotFoundError("the query does not name its pair of interest")
    for rid in (q.left_id, q.right_id):
        if rid not in log:
            raise PairNotFoundError(f"record {rid!r} is not in the log")
    if encoded is None or encoded.log is not log or encoded.threshold != cfg.similarity_threshold:
        encoded = EncodedLog(log, cfg.similarity_threshold)
    full = PairFeatureCatalog.for_log(log, 3)
    for clause in (q.des, q.obs, q.exp):
        for a in clause:
            if a.feature not in full.features:
                raise InvalidQueryError([f"unknown feature {a.feature!r}"])
    pair = build_pair(log.record(q.left_id), log.record(q.right_id), log.schema, cfg.similarity_threshold)
    diags = validate_query(q, pair, full)
    if diags:
        raise InvalidQueryError(diags)
    return Problem(q, log, encoded, PairFeatureCatalog.for_log(log, cfg.feature_level), pair)


def sample_related(problem: Problem, context: Clause, m: int, rng: np.random.Generator):
    """Two passes over all ordered pairs: count labels, then draw the balanced sample.

    Returns (table, observed mask, expected mask, index of the pair of interest).
    """
    q = problem.query
    n_obs = n_exp = 0
    for block in problem.encoded.iter_blocks():
        obs, exp = query_masks(block, q)
        ctx = clause_mask(context, block)
        n_obs += int(np.count_nonzero(obs & ctx))
        n_exp += int(np.count_nonzero(exp & ctx))
    if n_obs + n_exp == 0:
        raise NoRelatedPairsError("no pair in the log is related to the query")
    p_obs, p_exp = keep_probabilities(n_obs, n_exp, m)
    poi_l = problem.encoded.index_of(q.left_id)
    poi_r = problem.encoded.index_of(q.right_id)
    lefts, rights = [], []
    for block in problem.encoded.iter_blocks():
        obs, exp = query_masks(block, q)
        ctx = clause_mask(context, block)
        prob = np.where(obs & ctx, p_obs, np.where(exp & ctx, p_exp, 0.0))
        related = np.flatnonzero(prob > 0)
        draw = rng.random(len(related)) < prob[related]
        is_poi = (block.left[related] == poi_l) & (block.right[related] == poi_r)
        kept = related[draw | is_poi]
        lefts.append(block.left[kept])
        rights.append(block.right[kept])
    table = PairTable(problem.encoded, np.concatenate(lefts), np.concatenate(rights))
    poi = table.find(q.left_id, q.right_id)
    if poi is None:
        # the pair of interest always belongs to the sample, even when the context excludes it
        table = table.concat(problem.encoded.pair(q.left_id, q.right_id))
        poi = len(table) - 1
    obs, exp = query_masks(table, q)
    return table, obs, exp, poi


# -- greedy growth -----------------------------------------------------------------

@dataclass
class GrowthResult:
    atoms: list[AtomicPredicate] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)


def grow_clause(table: PairTable, target: np.ndarray, other: np.ndarray, poi: int,
                features, width: int, weight: float, stop=None) -> GrowthResult:
    """Greedily grow a conjunction of up to ``width`` atoms over a labelled population.

    ``target`` marks the examples whose conditional frequency plays the role
    of precision (observed for because clauses, expected for despite
    clauses); ``other`` marks the opposite label.  ``stop(atoms)`` may end
    growth early.
    """
    result = GrowthResult()
    alive = np.ones(len(table), dtype=bool)
    labelled = target | other
    for _ in range(width):
        if stop is not None and stop(result.atoms):
            break
        idx = np.flatnonzero(alive & labelled)
        if not target[idx].any() or not other[idx].any():
            break
        poi_pos = int(np.searchsorted(idx, poi))
        sub = table.take(idx)
        pos = target[idx]
        exclude = frozenset(result.atoms)
        cands = []
        for f in features:
            c = best_predicate_for_feature(f, sub, pos, poi_pos, exclude)
            if c is None:
                continue
            sat = atom_mask(c.atom, sub)
            n_sat = int(sat.sum())
            if n_sat == len(idx):
                continue  # true on every surviving pair: not a split
            c.precision = int((sat & pos).sum()) / n_sat if n_sat else None
            c.generality = n_sat / len(idx)
            cands.append(c)
        if not cands:
            break
        prec_rank = normalize_scores([c.precision for c in cands])
        gen_rank = normalize_scores([c.generality for c in cands])
        for c, pr, gr in zip(cands, prec_rank, gen_rank):
            c.score = weight * pr + (1 - weight) * gr
        best = _pick(cands, lambda c: c.score)
        result.atoms.append(best.atom)
        result.trace.append({
            "chosen": str(best.atom),
            "population": int(len(idx)),
            "candidates": [c.to_dict() for c in sorted(cands, key=lambda c: c.atom.sort_key())],
        })
        alive &= atom_mask(best.atom, table)
    return result


def _rng(cfg: ExplainerConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.rng_seed, stream])


def _check_applicable(problem: Problem, clause: Clause, what: str) -> None:
    if not eval_clause(clause, problem.pair):
        raise AssertionError(f"generated {what} clause `{clause}` does not hold on the pair of interest")


def _despite_extension(problem: Problem, cfg: ExplainerConfig, width: int) -> tuple[Clause, list, list]:
    q = problem.query
    r = cfg.relevance_threshold
    full_rel = lambda atoms: score(q.des & Clause(tuple(atoms)), TRUE_CLAUSE, q, problem.encoded).relevance

    def stop(atoms):
        if r is None:
            return False
        rel = full_rel(atoms).value
        return rel is not None and rel >= r

    if r is not None and stop([]):
        return TRUE_CLAUSE, [], []
    table, obs, exp, poi = sample_related(problem, q.des, cfg.sample_size, _rng(cfg, 1))
    grown = grow_clause(table, exp, obs, poi, problem.features, width, cfg.precision_weight, stop)
    marginals = []
    for i, a in enumerate(grown.atoms):
        marginals.append(("despite", str(a), full_rel(grown.atoms[: i + 1]).value))
    return Clause(tuple(grown.atoms)), marginals, grown.trace


def generate_des_prime(q: PXQLQuery, log: ExecutionLog, cfg: ExplainerConfig | None = None,
                       problem: Problem | None = None) -> Clause:
    """Extend the query's despite clause to raise relevance; returns the full clause."""
    cfg = cfg or ExplainerConfig()
    problem = problem or prepare(q, log, cfg)
    ext, _, _ = _despite_extension(problem, cfg, cfg.width)
    des_prime = problem.query.des & ext
    _check_applicable(problem, des_prime, "despite")
    return des_prime


def generate_bec(q: PXQLQuery, log: ExecutionLog, cfg: ExplainerConfig | None = None,
                 des_prime: Clause | None = None, problem: Problem | None = None) -> Explanation:
    cfg = cfg or ExplainerConfig()
    problem = problem or prepare(q, log, cfg)
    q = problem.query
    des_prime = q.des if des_prime is None else des_prime
    table, obs, exp, poi = sample_related(problem, des_prime, cfg.sample_size, _rng(cfg, 0))
    grown = grow_clause(table, obs, exp, poi, problem.features, cfg.width, cfg.precision_weight)
    bec = Clause(tuple(grown.atoms))
    _check_applicable(problem, des_prime, "despite")
    _check_applicable(problem, bec, "because")
    marginals = []
    for i, a in enumerate(bec.atoms):
        s = score(des_prime, Clause(bec.atoms[: i + 1]), q, problem.encoded)
        marginals.append(("because", str(a), s.precision.value))
    return Explanation(
        des_prime=des_prime,
        bec=bec,
        scores=score(des_prime, bec, q, problem.encoded),
        per_atom_marginals=marginals,
        method="perfxplain",
        trace=[dict(t, clause="because") for t in grown.trace],
    )


def explain(q: PXQLQuery, log: ExecutionLog, cfg: ExplainerConfig | None = None,
            despite_width: int = 0, problem: Problem | None = None) -> Explanation:
    """Full explanation: optional despite extension, then the because clause."""
    cfg = cfg or ExplainerConfig()
    problem = problem or prepare(q, log, cfg)
    width = despite_width if cfg.relevance_threshold is None else max(despite_width, len(problem.features))
    ext, des_marg, des_trace = (TRUE_CLAUSE, [], [])
    if width > 0:
        ext, des_marg, des_trace = _despite_extension(problem, cfg, width)
    e = generate_bec(problem.query, problem.log, cfg, problem.query.des & ext, problem)
    e.per_atom_marginals = des_marg + e.per_atom_marginals
    e.trace = [dict(t, clause="despite") for t in des_trace] + e.trace
    return e

