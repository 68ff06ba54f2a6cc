import numpy as np
from perfxplain.logmodel import ExecutionLog, ExecutionRecord, FeatureSchema
from perfxplain.metrics import (
    Explanation, Ratio, classify_pair, generality, precision, relevance, score,
)
from perfxplain.pairs import EncodedLog, build_pair
from perfxplain.pxql import TRUE_CLAUSE, Clause, PXQLQuery, parse_clause

from oracles import all_raw_pairs, count_metrics, derived_features, random_clause, random_log

SCHEMA = (
    FeatureSchema("size", "numeric"),
    FeatureSchema("flag", "nominal", ("a", "b")),
    FeatureSchema("duration", "numeric", role="outcome"),
)
Q = PXQLQuery(None, None, TRUE_CLAUSE, parse_clause("duration_compare = GT"),
              parse_clause("duration_compare = SIM"))


def log_of(rows):
    recs = tuple(ExecutionRecord(f"r{i}", {"size": s, "flag": f, "duration": d})
                 for i, (s, f, d) in enumerate(rows))
    return ExecutionLog(SCHEMA, recs)


def test_classify():
    a = ExecutionRecord("a", {"size": 1.0, "flag": "a", "duration": 300.0})
    b = ExecutionRecord("b", {"size": 1.0, "flag": "b", "duration": 100.0})
    q = Q.with_des(parse_clause("size_isSame = T"))
    assert classify_pair(build_pair(a, b, SCHEMA), q) == "observed"
    assert classify_pair(build_pair(a, b, SCHEMA), q.with_des(parse_clause("flag_isSame = T"))) == "unrelated"
    # des holds but neither obs nor exp
    assert classify_pair(build_pair(b, a, SCHEMA), q) == "unrelated"


def test_constructed_relevance_049():
    # related = big-before-small pairs; 49 big jobs match the small job's duration, 51 are slower
    rows = [(10.0, "a", 100.0)] * 49 + [(10.0, "a", 1000.0)] * 51 + [(1.0, "a", 100.0)]
    q = Q.with_des(parse_clause("size_compare = GT"))
    s = score(TRUE_CLAUSE, TRUE_CLAUSE, q, EncodedLog(log_of(rows)))
    assert s.relevance == Ratio(49, 100)
    assert s.relevance.value == 0.49


def test_width_zero_precision_is_share_observed():
    rows = [(1.0, "a", 100.0), (1.0, "b", 300.0), (2.0, "a", 104.0), (2.0, "b", 900.0)]
    s = score(TRUE_CLAUSE, TRUE_CLAUSE, Q, EncodedLog(log_of(rows)))
    assert s.precision.value == 1 - s.relevance.value
    assert s.generality.value == 1.0


def test_undefined_and_half():
    log = log_of([(1.0, "a", 100.0), (2.0, "b", 300.0), (1.0, "a", 300.0), (2.0, "b", 100.0)])
    enc = EncodedLog(log)
    never = parse_clause("size > 100")
    s = score(TRUE_CLAUSE, never, Q, enc)
    assert s.precision.value is None and s.precision == Ratio(0, 0)
    assert s.generality.value == 0.0
    assert score(never, TRUE_CLAUSE, Q, enc).relevance.value is None
    assert score(never, TRUE_CLAUSE, Q, enc).generality.value is None
    # 8 related pairs: 4 SIM and 4 GT
    half = parse_clause("duration_compare = SIM")
    assert score(TRUE_CLAUSE, half, Q, enc).generality.value == 0.5


def test_accessors_match_score():
    log = log_of([(1.0, "a", 100.0), (2.0, "b", 300.0), (1.0, "b", 103.0)])
    e = Explanation(TRUE_CLAUSE, parse_clause("flag_isSame = F"))
    enc = EncodedLog(log)
    s = score(e.des_prime, e.bec, Q, enc)
    assert (relevance(e, Q, enc), precision(e, Q, enc), generality(e, Q, enc)) == (
        s.relevance.value, s.precision.value, s.generality.value)


def test_counting_equivalence_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        log = random_log(rng, int(rng.integers(2, 21)), missing=0.15)
        raw = [p for _, p in all_raw_pairs(log)]
        feats = derived_features(log.schema)
        outcome = derived_features(log.schema, include_outcome=True)
        des, dp, bec = (random_clause(rng, raw, feats) for _ in range(3))
        obs = random_clause(rng, raw, outcome, 2)
        exp = random_clause(rng, raw, outcome, 2)
        q = PXQLQuery(None, None, Clause(des), Clause(obs), Clause(exp))
        s = score(Clause(dp), Clause(bec), q, EncodedLog(log))
        want = count_metrics(raw, des, obs, exp, dp, bec)
        got = ((s.relevance.num, s.relevance.den), (s.precision.num, s.precision.den),
               (s.generality.num, s.generality.den))
        assert got == want


def test_streamed_equals_materialized(rng):
    log = random_log(rng, 30)
    enc = EncodedLog(log)
    bec = parse_clause("c_isSame = F")
    assert score(TRUE_CLAUSE, bec, Q, enc) == score(TRUE_CLAUSE, bec, Q, enc.all_pairs())
