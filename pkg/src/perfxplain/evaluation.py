"""Train/test evaluation of the three explanation methods."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import relief_weights, rule_of_thumb_explain, sim_but_diff_explain
from .explainer import ExplainerConfig, NoRelatedPairsError, explain, prepare
from .logmodel import ExecutionLog
from .metrics import Explanation, Scores, query_masks, score
from .pairs import EncodedLog
from .pxql import Clause, PXQLQuery, clause_mask, eval_clause
from .synthlog import split_log

METHODS = ("perfxplain", "ruleofthumb", "simbutdiff")
CSV_HEADER = ("method", "width", "repeat", "precision", "generality", "relevance")


def pick_pair_of_interest(log: ExecutionLog, q: PXQLQuery, rng: np.random.Generator,
                          threshold: float = 0.10) -> PXQLQuery:
    """Bind the query to a random pair that performed as observed."""
    enc = EncodedLog(log, threshold)
    lefts, rights = [], []
    for block in enc.iter_blocks():
        obs, _ = query_masks(block, q)
        obs &= ~clause_mask(q.exp, block)
        lefts.append(block.left[obs])
        rights.append(block.right[obs])
    left = np.concatenate(lefts) if lefts else np.array([], int)
    if len(left) == 0:
        raise NoRelatedPairsError("no pair in the log performs as observed")
    k = int(rng.integers(len(left)))
    right = np.concatenate(rights)
    return q.bind(enc.ids[left[k]], enc.ids[right[k]])


def run_method(method: str, q: PXQLQuery, log: ExecutionLog, cfg: ExplainerConfig,
               despite_width: int = 0, s: float = 0.9, k_neighbors: int = 10) -> Explanation:
    problem = prepare(q, log, cfg)
    if method == "perfxplain":
        return explain(q, log, cfg, despite_width=despite_width, problem=problem)
    if method == "ruleofthumb":
        table = relief_weights(log, k_neighbors, rng=np.random.default_rng([cfg.rng_seed, 2]))
        e = rule_of_thumb_explain(problem.query, table, problem.pair, cfg.width)
    elif method == "simbutdiff":
        e = sim_but_diff_explain(problem.query, log, problem.pair, cfg.width, s, problem).explanation
    else:
        raise ValueError(f"unknown method {method!r}")
    e.scores = score(e.des_prime, e.bec, problem.query, problem.encoded)
    return e


def prefix(e: Explanation, width: int) -> Explanation:
    return replace(e, bec=Clause(e.bec.atoms[:width]), scores=None, trace=[])


@dataclass
class EvalRow:
    method: str
    width: int
    repeat: int
    precision: float | None
    generality: float | None
    relevance: float | None
    train_fraction: float = 0.5
    explanation: str = ""
    applicable: bool = True

    def csv_cells(self, with_fraction: bool = False) -> list[str]:
        fmt = lambda v: "" if v is None else repr(float(v))
        cells = [self.method, str(self.width), str(self.repeat),
                 fmt(self.precision), fmt(self.generality), fmt(self.relevance)]
        if with_fraction:
            cells.append(repr(self.train_fraction))
        return cells


@dataclass
class EvalSummary:
    method: str
    width: int
    train_fraction: float
    mean: float | None
    sd: float | None
    n_defined: int
    n: int


@dataclass
class EvalResult:
    rows: list[EvalRow] = field(default_factory=list)

    def summary(self) -> list[EvalSummary]:
        groups: dict[tuple, list[EvalRow]] = {}
        for r in self.rows:
            groups.setdefault((r.train_fraction, r.method, r.width), []).append(r)
        out = []
        for (frac, method, width), rows in groups.items():
            vals = [r.precision for r in rows if r.precision is not None]
            mean = statistics.fmean(vals) if vals else None
            sd = statistics.pstdev(vals) if len(vals) > 1 else (0.0 if vals else None)
            out.append(EvalSummary(method, width, frac, mean, sd, len(vals), len(rows)))
        return out

    def mean_precision(self, method: str, width: int, train_fraction: float | None = None) -> float | None:
        for s in self.summary():
            if s.method == method and s.width == width and (
                    train_fraction is None or s.train_fraction == train_fraction):
                return s.mean
        raise KeyError((method, width))


def _one_repeat(args) -> list[EvalRow]:
    q, log, methods, widths, cfg, repeat, train_fraction, despite_width = args
    rng = np.random.default_rng([cfg.rng_seed, repeat, int(train_fraction * 1000)])
    train, test = split_log(log, train_fraction, rng, keep_in_both=(q.left_id, q.right_id))
    enc_test = EncodedLog(test, cfg.similarity_threshold)
    rows = []
    max_w = max(widths)
    run_cfg = replace(cfg, width=max_w, rng_seed=cfg.rng_seed * 1000 + repeat)
    for method in methods:
        full = run_method(method, q, train, run_cfg, despite_width)
        pair = prepare(q, train, run_cfg).pair
        for w in widths:
            e = prefix(full, w)
            s: Scores = score(e.des_prime, e.bec, q, enc_test)
            rows.append(EvalRow(
                method, w, repeat, s.precision.value, s.generality.value, s.relevance.value,
                train_fraction, e.text().replace("\n", " "),
                eval_clause(e.des_prime, pair) and eval_clause(e.bec, pair),
            ))
    return rows


def run_evaluation(q: PXQLQuery, log: ExecutionLog, methods=METHODS, widths=(0, 1, 2, 3),
                   cfg: ExplainerConfig | None = None, repeats: int = 10,
                   train_fractions=(0.5,), despite_width: int = 0, jobs: int = 1) -> EvalResult:
    """Repeat: split the log, explain on the training half, score on the test half.

    The pair of interest is placed in both halves.
    """
    cfg = cfg or ExplainerConfig()
    tasks = [(q, log, tuple(methods), tuple(widths), cfg, r, f, despite_width)
             for f in train_fractions for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_one_repeat, tasks))
    else:
        chunks = [_one_repeat(t) for t in tasks]
    return EvalResult([row for chunk in chunks for row in chunk])
