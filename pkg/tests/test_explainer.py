import numpy as np
import pytest

from perfxplain.explainer import (
    ExplainerConfig, InvalidQueryError, NoRelatedPairsError, PairNotFoundError,
    balanced_sample, best_predicate_for_feature, entropy, explain, generate_bec,
    generate_des_prime, information_gain, keep_probabilities, normalize_scores, prepare,
)
from perfxplain.metrics import score
from perfxplain.pairs import EncodedLog, PairFeatureCatalog
from perfxplain.pxql import TRUE_CLAUSE, AtomicPredicate as A, Clause, PXQLQuery, eval_clause, parse_clause

from oracles import (
    all_atoms, all_raw_pairs, brute_force_grow, derived_features, gain, holds, holds_all,
    label, random_atom, random_log,
)


# -- information gain --------------------------------------------------------------

def test_entropy_values():
    assert entropy(0.5) == 1.0
    assert entropy(0.0) == entropy(1.0) == 0.0
    assert entropy(0.6) == pytest.approx(0.971, abs=0.001)


def worked_split_a():
    # 200 examples, 60% positive; the split leaves partitions of weighted entropy ~0.1
    labels = [1] * 120 + [0] * 80
    sat = [1] * 120 + [1] * 3 + [0] * 77
    return labels, sat


def test_worked_split_gains():
    labels, sat = worked_split_a()
    assert information_gain(labels, sat) == pytest.approx(0.87, abs=0.01)
    labels_b = [1] * 6 + [0] * 4
    sat_b = [1, 1, 1, 0, 0, 0, 1, 1, 0, 0]  # 3+/2- on each side
    assert information_gain(labels_b, sat_b) == pytest.approx(0.0, abs=1e-12)


def test_gain_zero_for_trivial_splits():
    labels = [1, 0, 1, 1, 0]
    assert information_gain(labels, [1] * 5) == 0.0
    assert information_gain(labels, [0] * 5) == 0.0


# -- per-feature atom choice ---------------------------------------------------------

def test_best_predicate_matches_brute_force(rng):
    for _ in range(40):
        log = random_log(rng, int(rng.integers(3, 9)), missing=0.2)
        enc = EncodedLog(log)
        table = enc.all_pairs()
        raw = [p for _, p in all_raw_pairs(log)]
        positive = rng.random(len(raw)) < 0.5
        poi = int(rng.integers(len(raw)))
        cat = PairFeatureCatalog.for_log(log)
        for f in cat.candidates():
            got = best_predicate_for_feature(f, table, positive, poi)
            cands = [a for a in all_atoms(f.name, f.is_numeric, raw) if holds(a, raw[poi])]
            if not cands:
                assert got is None
                continue
            gains = [gain(raw, list(positive), a) for a in cands]
            assert got.info_gain == pytest.approx(max(gains), abs=1e-9)


def test_threshold_example():
    # values {4, 8, 12, 16}; the pair of interest has 8
    from perfxplain.logmodel import ExecutionLog, ExecutionRecord, FeatureSchema
    schema = (FeatureSchema("x", "numeric"), FeatureSchema("duration", "numeric", role="outcome"))
    recs = []
    for v in (4.0, 8.0, 12.0, 16.0):
        recs += [ExecutionRecord(f"r{v}{k}", {"x": v, "duration": 100.0 * (k + 1)}) for k in range(2)]
    log = ExecutionLog(schema, tuple(recs))
    table = EncodedLog(log).all_pairs()
    base = table.column("x")
    same = ~np.isnan(base)
    positive = same & (base <= 8)
    poi = int(np.flatnonzero(same & (base == 8))[0])
    got = best_predicate_for_feature(PairFeatureCatalog.for_log(log)["x"], table, positive, poi)
    assert got.atom == A("x", "<=", 10.0)
    assert got.info_gain == pytest.approx(1.0)


def test_missing_on_pair_of_interest_gives_none(rng):
    log = random_log(rng, 6, missing=0.0)
    table = EncodedLog(log).all_pairs()
    col = table.column("a")
    poi = int(np.flatnonzero(np.isnan(col))[0])
    f = PairFeatureCatalog.for_log(log)["a"]
    assert best_predicate_for_feature(f, table, np.ones(len(table), bool), poi) is None


def test_normalize_examples():
    assert normalize_scores([0.2, 0.5, 0.9]) == pytest.approx([1 / 3, 2 / 3, 1.0])
    assert normalize_scores([0.4, 0.4]) == [1.0, 1.0]
    assert normalize_scores([None, 0.7]) == [0.0, 1.0]


# -- sampling ------------------------------------------------------------------------

def test_keep_probabilities():
    assert keep_probabilities(300, 100, 200) == (pytest.approx(1 / 3), 1.0)
    assert keep_probabilities(50, 1000, 200) == (1.0, 0.1)


def test_sampler_statistics():
    observed = np.array([True] * 300 + [False] * 100)
    expected = ~observed
    poi = 7
    kept_obs, kept_exp = [], []
    for seed in range(500):
        idx = balanced_sample(observed, expected, 200, np.random.default_rng(seed), keep=poi)
        assert poi in idx
        kept_obs.append(int(observed[idx].sum()))
        kept_exp.append(int(expected[idx].sum()))
    # binomial(300, 1/3) plus the forced pair of interest
    sigma = np.sqrt(300 * (1 / 3) * (2 / 3) / 500)
    assert abs(np.mean(kept_obs) - 100) <= 3 * sigma + 1 / 3
    assert np.mean(kept_exp) == 100


# -- generate_bec against the step-exact oracle ------------------------------------------

def random_problem(rng, n=4):
    """A random log of n records and a bound query, or None if no pair is observed."""
    log = random_log(rng, n, missing=0.15)
    raw = dict(all_raw_pairs(log))
    obs = (A("duration_compare", "=", "GT"),)
    exp = (A("duration_compare", "=", "SIM"),) if rng.random() < 0.5 else (A("duration_compare", "!=", "GT"),)
    candidates = [ids for ids, p in raw.items() if holds_all(obs, p)]
    if not candidates:
        return None
    ids = candidates[int(rng.integers(len(candidates)))]
    des = ()
    if rng.random() < 0.5:
        feats = derived_features(log.schema)
        atom = random_atom(rng, list(raw.values()), feats)
        if holds(atom, raw[ids]):
            des = (atom,)
    q = PXQLQuery(ids[0], ids[1], Clause(des), Clause(obs), Clause(exp))
    return log, q, raw, ids


def test_generate_bec_matches_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 25:
        made = random_problem(rng, int(rng.integers(3, 5)))
        if made is None:
            continue
        log, q, raw, ids = made
        width = int(rng.integers(1, 4))
        cfg = ExplainerConfig(width=width, sample_size=10_000)
        got = generate_bec(q, log, cfg).bec.atoms
        pop = [p for p in raw.values() if label(p, q.des.atoms, q.obs.atoms, q.exp.atoms) != "unrelated"]
        pos = [label(p, q.des.atoms, q.obs.atoms, q.exp.atoms) == "observed" for p in pop]
        want = brute_force_grow(pop, pos, raw[ids], derived_features(log.schema), width)
        assert list(got) == want, (str(q), got, want)
        checked += 1


# -- end to end on the planted log ----------------------------------------------------------

SLOWER = ("FOR J1, J2 DESPITE numinstances_isSame = T ^ pig_script_isSame = T "
          "OBSERVED duration_compare = GT EXPECTED duration_compare = SIM")


@pytest.fixture(scope="module")
def slower_query(planted_log):
    from perfxplain.evaluation import pick_pair_of_interest
    from perfxplain.pxql import parse_query
    q = parse_query(SLOWER, PairFeatureCatalog.for_log(planted_log))
    return pick_pair_of_interest(planted_log, q, np.random.default_rng(3))


def test_explanation_is_applicable_and_deterministic(planted_log, slower_query):
    cfg = ExplainerConfig(width=3, rng_seed=11)
    a = explain(slower_query, planted_log, cfg)
    b = explain(slower_query, planted_log, cfg)
    assert a.bec == b.bec and a.scores == b.scores
    pair = prepare(slower_query, planted_log, cfg).pair
    assert eval_clause(a.des_prime, pair) and eval_clause(a.bec, pair)
    assert 1 <= len(a.bec) <= 3


def test_width_zero(planted_log, slower_query):
    e = generate_bec(slower_query, planted_log, ExplainerConfig(width=0))
    assert e.bec == TRUE_CLAUSE
    base = score(slower_query.des, TRUE_CLAUSE, slower_query, EncodedLog(planted_log))
    assert e.scores.precision == base.precision
    assert e.scores.precision.value == pytest.approx(1 - base.relevance.value)


def test_generality_monotone_in_width(planted_log, slower_query):
    e = generate_bec(slower_query, planted_log, ExplainerConfig(width=4))
    enc = EncodedLog(planted_log)
    gens = [score(e.des_prime, Clause(e.bec.atoms[:w]), slower_query, enc).generality.value
            for w in range(len(e.bec) + 1)]
    assert all(x >= y for x, y in zip(gens, gens[1:]))


def test_despite_threshold_zero_is_empty(planted_log, slower_query):
    q = slower_query.with_des(TRUE_CLAUSE)
    assert generate_des_prime(q, planted_log, ExplainerConfig(relevance_threshold=0.0)) == TRUE_CLAUSE


def test_despite_keeps_user_atoms(planted_log, slower_query):
    d = generate_des_prime(slower_query, planted_log, ExplainerConfig(width=2))
    assert d.atoms[:2] == slower_query.des.atoms


def test_prepare_errors(planted_log, slower_query):
    with pytest.raises(PairNotFoundError):
        prepare(slower_query.bind("nope", "job_0001"), planted_log)
    with pytest.raises(PairNotFoundError):
        prepare(slower_query.bind(None, None), planted_log)
    bad = slower_query.with_des(parse_clause("numinstances_isSame = F"))
    with pytest.raises(InvalidQueryError) as info:
        prepare(bad, planted_log)
    assert info.value.exit_code == 2
    unknown = slower_query.with_des(parse_clause("nodes_isSame = T"))
    with pytest.raises(InvalidQueryError):
        prepare(unknown, planted_log)


def test_no_related_pairs(small_log):
    # des holds only on the pair of interest, which is observed, so nothing is expected...
    q = PXQLQuery("j2", "j1", parse_clause("iosortfactor_compare = GT"),
                  parse_clause("duration_compare = GT"), parse_clause("duration_compare = SIM"))
    e = generate_bec(q, small_log, ExplainerConfig(width=2))
    assert e.bec == TRUE_CLAUSE  # single-label sample stops growth at once
    # ...and an unrelated context has no related pairs at all
    from perfxplain.explainer import sample_related
    problem = prepare(q, small_log)
    with pytest.raises(NoRelatedPairsError):
        sample_related(problem, parse_clause("numinstances > 100"), 10, np.random.default_rng(0))


def test_config_validation():
    for bad in (dict(width=-1), dict(precision_weight=1.5), dict(sample_size=0),
                dict(feature_level=4), dict(relevance_threshold=2.0)):
        with pytest.raises(ValueError):
            ExplainerConfig(**bad)
