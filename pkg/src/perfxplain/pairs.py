"""Pairwise feature encoding of two execution records.

Every raw feature ``f`` yields four derived features on an ordered pair
(left, right):

    f_isSame   T / F
    f_compare  LT / SIM / GT           (numeric raw features only)
    f_diff     (left value, right value)  (nominal raw features only)
    f          the shared raw value when both sides agree

A derived value of ``None`` means missing.  Two representations exist:
:func:`build_pair` produces a :class:`PairExample` holding plain Python
values, and :class:`PairTable` holds the same information column-wise
as numpy arrays for many pairs at once.  They must always agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator, Sequence

import numpy as np

from .logmodel import NOMINAL, NUMERIC, ExecutionLog, ExecutionRecord, FeatureSchema

ISSAME = "isSame"
COMPARE = "compare"
DIFF = "diff"
BASE = "base"
FAMILIES = (ISSAME, COMPARE, DIFF, BASE)

FEATURE_LEVELS = {
    1: (ISSAME,),
    2: (ISSAME, COMPARE, DIFF),
    3: (ISSAME, COMPARE, DIFF, BASE),
}

TRUE, FALSE = "T", "F"
LT, SIM, GT = "LT", "SIM", "GT"
COMPARE_VALUES = (LT, SIM, GT)
DEFAULT_SIMILARITY = 0.10

_MISSING_CODE = -1


def similarity(a: float, b: float, threshold: float = DEFAULT_SIMILARITY) -> str:
    """Three-way comparison where values within ``threshold`` relative distance are SIM."""
    if abs(a - b) <= threshold * max(abs(a), abs(b)):
        return SIM
    return LT if a < b else GT


@dataclass(frozen=True)
class DerivedFeature:
    name: str
    raw: FeatureSchema
    family: str

    @property
    def is_numeric(self) -> bool:
        """True for features whose values are ordered numbers (numeric base features)."""
        return self.family == BASE and self.raw.kind == NUMERIC

    @property
    def applicable(self) -> bool:
        """False when the family is never defined for the raw feature's kind."""
        if self.family == COMPARE:
            return self.raw.kind == NUMERIC
        if self.family == DIFF:
            return self.raw.kind == NOMINAL
        return True

    @property
    def value_domain(self) -> tuple | None:
        """Finite set of admissible values, or None for numeric base features."""
        if self.family == ISSAME:
            return (TRUE, FALSE)
        if self.family == COMPARE:
            return COMPARE_VALUES
        if self.family == DIFF:
            dom = self.raw.domain or ()
            return tuple((a, b) for a in dom for b in dom)
        if self.raw.kind == NOMINAL:
            return self.raw.domain
        return None

    @property
    def is_outcome(self) -> bool:
        return self.raw.role == "outcome"


def derived_name(raw: str, family: str) -> str:
    return raw if family == BASE else f"{raw}_{family}"


class PairFeatureCatalog:
    """The set of derived features available for a schema at a feature level."""

    def __init__(self, schema: Sequence[FeatureSchema], feature_level: int = 3, level: str = "job"):
        if feature_level not in FEATURE_LEVELS:
            raise ValueError(f"feature level must be 1, 2 or 3, not {feature_level!r}")
        self.schema = tuple(schema)
        self.feature_level = feature_level
        self.level = level
        families = FEATURE_LEVELS[feature_level]
        self.features: dict[str, DerivedFeature] = {}
        for family in FAMILIES:
            if family not in families:
                continue
            for raw in self.schema:
                d = DerivedFeature(derived_name(raw.name, family), raw, family)
                self.features[d.name] = d

    @classmethod
    def for_log(cls, log: ExecutionLog, feature_level: int = 3) -> "PairFeatureCatalog":
        return cls(log.schema, feature_level, log.level)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features.values())

    def __contains__(self, name: str) -> bool:
        return self.resolve(name) is not None

    def resolve(self, name: str) -> DerivedFeature | None:
        """Look up a derived feature; ``inputsize.isSame`` is accepted for ``inputsize_isSame``."""
        d = self.features.get(name)
        if d is not None:
            return d
        head, sep, tail = name.rpartition(".")
        if sep and tail in (ISSAME, COMPARE, DIFF):
            return self.features.get(f"{head}_{tail}")
        return None

    def __getitem__(self, name: str) -> DerivedFeature:
        d = self.resolve(name)
        if d is None:
            raise KeyError(name)
        return d

    def candidates(self) -> list[DerivedFeature]:
        """Features an explainer may place in a clause: defined families, outcome excluded."""
        return sorted((d for d in self if d.applicable and not d.is_outcome), key=lambda d: d.name)


@dataclass
class PairExample:
    left_id: str
    right_id: str
    derived: dict[str, Any]
    label: str = "unlabeled"

    def get(self, name: str) -> Any:
        return self.derived.get(name)


def _derive_one(f: FeatureSchema, a: Any, b: Any, threshold: float) -> dict[str, Any]:
    out = {derived_name(f.name, fam): None for fam in FAMILIES}
    if a is None or b is None:
        return out
    same = a == b
    out[derived_name(f.name, ISSAME)] = TRUE if same else FALSE
    if f.kind == NUMERIC:
        out[derived_name(f.name, COMPARE)] = similarity(a, b, threshold)
    else:
        out[derived_name(f.name, DIFF)] = (a, b)
    if same:
        out[f.name] = a
    return out


def build_pair(left: ExecutionRecord, right: ExecutionRecord, schema: Sequence[FeatureSchema],
               threshold: float = DEFAULT_SIMILARITY) -> PairExample:
    names = {f.name for f in schema}
    for rec in (left, right):
        extra = set(rec.values) - names
        if extra:
            raise ValueError(f"record {rec.id} has features outside the schema: {sorted(extra)}")
    derived: dict[str, Any] = {}
    for f in schema:
        derived.update(_derive_one(f, left.values.get(f.name), right.values.get(f.name), threshold))
    return PairExample(left.id, right.id, derived)


def enumerate_pairs(log: ExecutionLog, threshold: float = DEFAULT_SIMILARITY) -> Iterator[PairExample]:
    """Yield every ordered pair of distinct records, lazily."""
    recs = log.records
    for i, a in enumerate(recs):
        for j, b in enumerate(recs):
            if i != j:
                yield build_pair(a, b, log.schema, threshold)


def filter_level(example: PairExample, catalog: PairFeatureCatalog) -> PairExample:
    derived = {k: v for k, v in example.derived.items() if k in catalog.features}
    return PairExample(example.left_id, example.right_id, derived, example.label)


# -- columnar representation -------------------------------------------------

class EncodedLog:
    """Raw feature values of a log as numpy arrays (NaN / -1 mark missing)."""

    def __init__(self, log: ExecutionLog, threshold: float = DEFAULT_SIMILARITY):
        self.log = log
        self.threshold = threshold
        self.n = len(log.records)
        self.ids = [r.id for r in log.records]
        self.columns: dict[str, np.ndarray] = {}
        self.codes: dict[str, dict[Any, int]] = {}
        for f in log.schema:
            vals = [r.values.get(f.name) for r in log.records]
            if f.kind == NUMERIC:
                self.columns[f.name] = np.array(
                    [np.nan if v is None else float(v) for v in vals], dtype=float)
            else:
                code = {v: i for i, v in enumerate(f.domain)}
                self.codes[f.name] = code
                self.columns[f.name] = np.array(
                    [_MISSING_CODE if v is None else code[v] for v in vals], dtype=np.int64)

    def index_of(self, record_id: str) -> int:
        return self.log.index_of(record_id)

    def all_pairs(self) -> "PairTable":
        n = self.n
        left, right = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = left != right
        return PairTable(self, left[keep], right[keep])

    def iter_blocks(self, block_rows: int = 256) -> Iterator["PairTable"]:
        """All ordered pairs, grouped by blocks of left records."""
        n = self.n
        right_all = np.arange(n)
        for start in range(0, n, block_rows):
            lefts = np.arange(start, min(n, start + block_rows))
            left, right = np.meshgrid(lefts, right_all, indexing="ij")
            keep = left != right
            if keep.any():
                yield PairTable(self, left[keep], right[keep])

    def pair(self, left_id: str, right_id: str) -> "PairTable":
        i, j = self.index_of(left_id), self.index_of(right_id)
        return PairTable(self, np.array([i]), np.array([j]))


class PairTable:
    """A set of ordered pairs with derived feature columns computed on demand.

    Column encodings: isSame 1/0, compare 0/1/2 for LT/SIM/GT, diff the
    code ``left * |dom| + right``, nominal base the domain code, numeric base
    the float value.  Missing is -1 (NaN for numeric base).
    """

    def __init__(self, encoded: EncodedLog, left: np.ndarray, right: np.ndarray):
        self.encoded = encoded
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self._cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.left)

    def take(self, index) -> "PairTable":
        sub = PairTable(self.encoded, self.left[index], self.right[index])
        for k, col in self._cache.items():
            sub._cache[k] = col[index]
        return sub

    def concat(self, other: "PairTable") -> "PairTable":
        return PairTable(self.encoded, np.concatenate([self.left, other.left]),
                         np.concatenate([self.right, other.right]))

    def pair_ids(self, k: int) -> tuple[str, str]:
        ids = self.encoded.ids
        return ids[self.left[k]], ids[self.right[k]]

    def find(self, left_id: str, right_id: str) -> int | None:
        i, j = self.encoded.index_of(left_id), self.encoded.index_of(right_id)
        hit = np.flatnonzero((self.left == i) & (self.right == j))
        return int(hit[0]) if len(hit) else None

    def column(self, feature: DerivedFeature | str) -> np.ndarray:
        if isinstance(feature, DerivedFeature):
            raw, family = feature.raw, feature.family
            key = feature.name
        else:
            key = feature
            raw, family = self._lookup(feature)
        col = self._cache.get(key)
        if col is None:
            col = self._compute(raw, family)
            self._cache[key] = col
        return col

    def _lookup(self, name: str) -> tuple[FeatureSchema, str]:
        log = self.encoded.log
        for family in (ISSAME, COMPARE, DIFF):
            suffix = "_" + family
            if name.endswith(suffix) and name[: -len(suffix)] in log._by_name:
                return log.feature(name[: -len(suffix)]), family
        return log.feature(name), BASE

    def _compute(self, raw: FeatureSchema, family: str) -> np.ndarray:
        vals = self.encoded.columns[raw.name]
        a, b = vals[self.left], vals[self.right]
        if raw.kind == NUMERIC:
            present = ~(np.isnan(a) | np.isnan(b))
        else:
            present = (a != _MISSING_CODE) & (b != _MISSING_CODE)
        same = present & (a == b)
        missing = np.full(len(a), _MISSING_CODE, dtype=np.int64)
        if family == ISSAME:
            return np.where(present, same.astype(np.int64), missing)
        if family == COMPARE:
            if raw.kind != NUMERIC:
                return missing
            with np.errstate(invalid="ignore"):
                sim = np.abs(a - b) <= self.encoded.threshold * np.maximum(np.abs(a), np.abs(b))
                code = np.where(sim, 1, np.where(a < b, 0, 2))
            return np.where(present, code, missing)
        if family == DIFF:
            if raw.kind != NOMINAL:
                return missing
            return np.where(present, a * len(raw.domain) + b, missing)
        if raw.kind == NUMERIC:
            return np.where(same, a, np.nan)
        return np.where(same, a, missing)

    def decode(self, feature: DerivedFeature | str, k: int) -> Any:
        """The Python-level value of one cell, for cross-checks against :func:`build_pair`."""
        if isinstance(feature, str):
            raw, family = self._lookup(feature)
        else:
            raw, family = feature.raw, feature.family
        v = self.column(feature)[k]
        if raw.kind == NUMERIC and family == BASE:
            return None if np.isnan(v) else float(v)
        if v == _MISSING_CODE:
            return None
        v = int(v)
        if family == ISSAME:
            return TRUE if v else FALSE
        if family == COMPARE:
            return COMPARE_VALUES[v]
        dom = raw.domain
        if family == DIFF:
            return (dom[v // len(dom)], dom[v % len(dom)])
        return dom[v]

    def to_examples(self, catalog: PairFeatureCatalog | None = None) -> list[PairExample]:
        names = [d for d in (catalog or PairFeatureCatalog(self.encoded.log.schema))]
        out = []
        for k in range(len(self)):
            lid, rid = self.pair_ids(k)
            out.append(PairExample(lid, rid, {d.name: self.decode(d, k) for d in names}))
        return out
