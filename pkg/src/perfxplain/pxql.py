"""PXQL: the query language for asking why a pair of executions performed as it did.

Example::

    FOR J1, J2 WHERE J1.JobID = "job_17" AND J2.JobID = "job_3"
    DESPITE numinstances_isSame = T ^ pig_script_isSame = T
    OBSERVED duration_compare = GT
    EXPECTED duration_compare = SIM

The grammar (EBNF) is documented in ``docs/pxql.md``.  Clauses are
conjunctions of atoms ``feature op constant``; an atom on a feature whose
value is missing is false.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .pairs import (
    BASE, COMPARE, COMPARE_VALUES, DIFF, ISSAME, TRUE, FALSE,
    DerivedFeature, PairExample, PairFeatureCatalog, PairTable,
)

EQ, NE, LT_OP, LE, GT_OP, GE = "=", "!=", "<", "<=", ">", ">="
OPERATORS = (EQ, NE, LT_OP, LE, GT_OP, GE)
ORDER_OPERATORS = (LT_OP, LE, GT_OP, GE)
_OP_ALIASES = {"==": EQ, "≠": NE, "<>": NE, "≤": LE, "≥": GE}

KEYWORDS = ("FOR", "WHERE", "DESPITE", "OBSERVED", "EXPECTED", "AND")
UNITS = {"B": 1, "KB": 2**10, "MB": 2**20, "GB": 2**30, "TB": 2**40}


class PXQLError(ValueError):
    pass


class PXQLSyntaxError(PXQLError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class PXQLTypeError(PXQLError):
    pass


@dataclass(frozen=True)
class AtomicPredicate:
    feature: str
    op: str
    constant: Any

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ValueError(f"unknown operator {self.op!r}")

    def sort_key(self) -> tuple:
        c = self.constant
        # numbers sort before strings; pairs by their parts
        if isinstance(c, tuple):
            ck = (2, tuple(str(x) for x in c))
        elif isinstance(c, str):
            ck = (1, c)
        else:
            ck = (0, float(c))
        return (self.feature, self.op, ck)

    def __str__(self) -> str:
        return f"{self.feature} {self.op} {format_constant(self.constant)}"


@dataclass(frozen=True)
class Clause:
    atoms: tuple[AtomicPredicate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))

    def __and__(self, other: "Clause") -> "Clause":
        return Clause(self.atoms + other.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __bool__(self) -> bool:
        return True

    def extend(self, atom: AtomicPredicate) -> "Clause":
        return Clause(self.atoms + (atom,))

    def features(self) -> set[str]:
        return {a.feature for a in self.atoms}

    def __str__(self) -> str:
        return " ^ ".join(str(a) for a in self.atoms) if self.atoms else "true"


TRUE_CLAUSE = Clause()


@dataclass(frozen=True)
class PXQLQuery:
    left_id: str | None
    right_id: str | None
    des: Clause = TRUE_CLAUSE
    obs: Clause = TRUE_CLAUSE
    exp: Clause = TRUE_CLAUSE
    level: str = "job"
    left_var: str = "J1"
    right_var: str = "J2"

    @property
    def bound(self) -> bool:
        return self.left_id is not None and self.right_id is not None

    def bind(self, left_id: str, right_id: str) -> "PXQLQuery":
        return PXQLQuery(left_id, right_id, self.des, self.obs, self.exp,
                         self.level, self.left_var, self.right_var)

    def with_des(self, des: Clause) -> "PXQLQuery":
        return PXQLQuery(self.left_id, self.right_id, des, self.obs, self.exp,
                         self.level, self.left_var, self.right_var)

    def __str__(self) -> str:
        return print_query(self)


# -- printing ----------------------------------------------------------------

def _format_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_constant(c: Any) -> str:
    if isinstance(c, tuple):
        return "(" + ", ".join(format_constant(x) for x in c) + ")"
    if isinstance(c, str):
        if c in (TRUE, FALSE) or c in COMPARE_VALUES:
            return c
        return _quote(c)
    return _format_number(c)


def print_query(q: PXQLQuery) -> str:
    field_name = "TaskID" if q.level == "task" else "JobID"
    head = f"FOR {q.left_var}, {q.right_var}"
    if q.bound:
        head += (f" WHERE {q.left_var}.{field_name} = {_quote(q.left_id)}"
                 f" AND {q.right_var}.{field_name} = {_quote(q.right_id)}")
    lines = [head]
    if len(q.des):
        lines.append(f"DESPITE {q.des}")
    lines.append(f"OBSERVED {q.obs}")
    lines.append(f"EXPECTED {q.exp}")
    return "\n".join(lines)


# -- lexing ------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?(?:[KMGT]?B\b)?)
  | (?P<string>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<op><=|>=|!=|<>|==|=|<|>|≠|≤|≥)
  | (?P<conj>\^|∧|&&)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<punct>[(),?])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    column: int
    value: Any = None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PXQLSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        s = m.group()
        col = pos - line_start + 1
        if kind == "number":
            unit = re.search(r"[KMGT]?B$", s)
            mult = 1
            if unit:
                mult = UNITS[unit.group()]
                s_num = s[: unit.start()]
            else:
                s_num = s
            tokens.append(Token("number", s, line, col, float(s_num) * mult))
        elif kind == "string":
            body = s[1:-1]
            tokens.append(Token("string", s, line, col, re.sub(r"\\(.)", r"\1", body)))
        elif kind == "op":
            tokens.append(Token("op", s, line, col, _OP_ALIASES.get(s, s)))
        elif kind == "conj":
            tokens.append(Token("and", s, line, col))
        elif kind == "ident":
            if s.upper() in KEYWORDS:
                kw = s.upper()
                tokens.append(Token("and" if kw == "AND" else "kw", s, line, col, kw))
            else:
                tokens.append(Token("ident", s, line, col, s))
        elif kind == "punct":
            tokens.append(Token(s, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parsing -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, catalog: PairFeatureCatalog | None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.catalog = catalog

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise PXQLSyntaxError(message, tok.line, tok.column)

    def expect(self, kind: str, value: Any = None) -> Token:
        t = self.tok
        if t.kind != kind or (value is not None and t.value != value):
            want = value or kind
            got = t.text or "end of input"
            self.error(f"expected {want}, found {got!r}")
        return self.advance()

    def at_kw(self, *names: str) -> bool:
        return self.tok.kind == "kw" and self.tok.value in names

    def parse(self) -> PXQLQuery:
        self.expect("kw", "FOR")
        left_var, left_id = self.parse_binding()
        self.expect(",")
        right_var, right_id = self.parse_binding()
        level = self.catalog.level if self.catalog is not None else "job"
        if self.at_kw("WHERE"):
            self.advance()
            ids, level = self.parse_where(left_var, right_var, level)
            left_id = ids.get(left_var, left_id)
            right_id = ids.get(right_var, right_id)
        clauses: dict[str, Clause] = {}
        while self.at_kw("DESPITE", "OBSERVED", "EXPECTED"):
            kw = self.advance()
            if kw.value in clauses:
                self.error(f"{kw.value} given twice", kw)
            clauses[kw.value] = self.parse_clause()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        for kw in ("OBSERVED", "EXPECTED"):
            if kw not in clauses:
                self.error(f"missing {kw} clause")
        return PXQLQuery(left_id, right_id,
                         clauses.get("DESPITE", TRUE_CLAUSE), clauses["OBSERVED"], clauses["EXPECTED"],
                         level, left_var, right_var)

    def parse_binding(self) -> tuple[str, str | None]:
        t = self.tok
        if t.kind == "ident":
            self.advance()
            return t.value, None
        if t.kind == "string":
            self.advance()
            return None, t.value
        self.error("expected a variable name or a quoted id")

    def parse_where(self, left_var, right_var, level):
        ids = {}
        while True:
            var_tok = self.expect("ident")
            var, dot, fld = var_tok.value.partition(".")
            if not dot or var not in (left_var, right_var):
                self.error(f"expected {left_var}.JobID or {right_var}.JobID", var_tok)
            fld = fld.upper()
            if fld == "JOBID":
                level = "job"
            elif fld == "TASKID":
                level = "task"
            else:
                self.error(f"unknown id field {fld!r}", var_tok)
            op = self.expect("op")
            if op.value != EQ:
                self.error("id bindings use '='", op)
            t = self.advance()
            if t.kind == "?":
                ids[var] = None
            elif t.kind in ("string", "ident"):
                ids[var] = t.value
            elif t.kind == "number":
                ids[var] = t.text
            else:
                self.error("expected an id literal or '?'", t)
            if self.tok.kind != "and":
                break
            self.advance()
        return ids, level

    def parse_clause(self) -> Clause:
        atoms = [self.parse_atom()]
        while self.tok.kind == "and":
            self.advance()
            atoms.append(self.parse_atom())
        return Clause(tuple(atoms))

    def parse_atom(self) -> AtomicPredicate:
        ftok = self.expect("ident")
        name = ftok.value
        feature = None
        if self.catalog is not None:
            feature = self.catalog.resolve(name)
            if feature is None:
                raise PXQLTypeError(f"line {ftok.line}, column {ftok.column}: unknown feature {name!r}")
            name = feature.name
        optok = self.expect("op")
        const_tok = self.tok
        nominal = feature is not None and feature.raw.kind == "nominal"
        constant = self.parse_literal(nominal)
        atom = AtomicPredicate(name, optok.value, constant)
        if feature is not None:
            problem = type_check(atom, feature)
            if problem:
                raise PXQLTypeError(f"line {const_tok.line}, column {const_tok.column}: {problem}")
        return atom

    def parse_literal(self, nominal: bool = False) -> Any:
        t = self.tok
        if t.kind == "(":
            self.advance()
            a = self.parse_scalar(nominal)
            self.expect(",")
            b = self.parse_scalar(nominal)
            self.expect(")")
            return (a, b)
        return self.parse_scalar(nominal)

    def parse_scalar(self, nominal: bool = False) -> Any:
        t = self.advance()
        if t.kind == "number":
            # nominal domains hold strings, even ones that look like numbers
            return t.text if nominal else t.value
        if t.kind in ("string", "ident"):
            return t.value
        raise PXQLSyntaxError(f"expected a constant, found {t.text or 'end of input'!r}", t.line, t.column)


def type_check(atom: AtomicPredicate, feature: DerivedFeature) -> str | None:
    """Return a description of the type error, or None if the atom is well typed."""
    op, c = atom.op, atom.constant
    if op in ORDER_OPERATORS and not feature.is_numeric:
        return f"order operator {op} on non-numeric feature {feature.name}"
    if not feature.applicable:
        return f"{feature.name} is never defined ({feature.family} of a {feature.raw.kind} feature)"
    if feature.family == ISSAME:
        ok = c in (TRUE, FALSE)
    elif feature.family == COMPARE:
        ok = c in COMPARE_VALUES
    elif feature.family == DIFF:
        ok = isinstance(c, tuple) and all(x in feature.raw.domain for x in c)
    elif feature.is_numeric:
        ok = isinstance(c, (int, float)) and not isinstance(c, bool)
    else:
        ok = isinstance(c, str) and c in feature.raw.domain
    if not ok:
        return f"constant {format_constant(c)} is not in the domain of {feature.name}"
    return None


def parse_query(text: str, catalog: PairFeatureCatalog | None = None) -> PXQLQuery:
    """Parse PXQL text.  With a catalog, feature names are resolved and atoms type-checked."""
    return _Parser(text, catalog).parse()


def parse_clause(text: str, catalog: PairFeatureCatalog | None = None) -> Clause:
    p = _Parser(text, catalog)
    if p.tok.kind == "eof":
        return TRUE_CLAUSE
    c = p.parse_clause()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return c


# -- evaluation --------------------------------------------------------------

def eval_atom(atom: AtomicPredicate, value: Any) -> bool:
    if value is None:
        return False
    c = atom.constant
    op = atom.op
    if op == EQ:
        return value == c
    if op == NE:
        return value != c
    if op == LT_OP:
        return value < c
    if op == LE:
        return value <= c
    if op == GT_OP:
        return value > c
    return value >= c


def eval_clause(clause: Clause, pair: PairExample) -> bool:
    return all(eval_atom(a, pair.derived.get(a.feature)) for a in clause.atoms)


def atom_mask(atom: AtomicPredicate, table: PairTable) -> np.ndarray:
    raw, family = table._lookup(atom.feature)
    col = table.column(atom.feature)
    c, op = atom.constant, atom.op
    if raw.kind == "numeric" and family == BASE:
        present = ~np.isnan(col)
        with np.errstate(invalid="ignore"):
            if op == EQ:
                return col == c
            if op == NE:
                return present & (col != c)
            if op == LT_OP:
                return col < c
            if op == LE:
                return col <= c
            if op == GT_OP:
                return col > c
            return col >= c
    present = col != -1
    if family == ISSAME:
        code = {TRUE: 1, FALSE: 0}.get(c)
    elif family == COMPARE:
        code = COMPARE_VALUES.index(c) if c in COMPARE_VALUES else None
    elif family == DIFF:
        codes = table.encoded.codes.get(raw.name, {})
        if isinstance(c, tuple) and len(c) == 2 and c[0] in codes and c[1] in codes:
            code = codes[c[0]] * len(raw.domain) + codes[c[1]]
        else:
            code = None
    else:
        code = table.encoded.codes[raw.name].get(c)
    if op == EQ:
        return np.zeros(len(col), bool) if code is None else col == code
    if op == NE:
        return present if code is None else present & (col != code)
    raise PXQLTypeError(f"operator {op} is not defined on {atom.feature}")


def clause_mask(clause: Clause, table: PairTable) -> np.ndarray:
    mask = np.ones(len(table), dtype=bool)
    for a in clause.atoms:
        mask &= atom_mask(a, table)
    return mask


# -- validation --------------------------------------------------------------

def _finite_allowed(atoms: Iterable[AtomicPredicate], domain: Sequence) -> set:
    return {v for v in domain if all(eval_atom(a, v) for a in atoms)}


def _numeric_satisfiable(atoms: Sequence[AtomicPredicate]) -> bool:
    lo, lo_open = -np.inf, True
    hi, hi_open = np.inf, True
    eqs, nes = set(), set()
    for a in atoms:
        c = float(a.constant)
        if a.op == EQ:
            eqs.add(c)
        elif a.op == NE:
            nes.add(c)
        elif a.op in (GT_OP, GE):
            strict = a.op == GT_OP
            if c > lo or (c == lo and strict):
                lo, lo_open = c, strict
        else:
            strict = a.op == LT_OP
            if c < hi or (c == hi and strict):
                hi, hi_open = c, strict
    if eqs:
        return len(eqs) == 1 and all(eval_atom(a, next(iter(eqs))) for a in atoms)
    if lo < hi:
        return True
    return lo == hi and not lo_open and not hi_open and lo not in nes


def entails_negation(obs: Clause, exp: Clause, catalog: PairFeatureCatalog) -> bool:
    """Conservative check that ``obs`` implies ``not exp``.

    Holds when some feature constrained by both clauses admits no value
    satisfying both (or ``obs`` alone is unsatisfiable).
    """
    by_feature: dict[str, list[AtomicPredicate]] = {}
    for a in obs.atoms:
        by_feature.setdefault(a.feature, []).append(a)
    for name, obs_atoms in by_feature.items():
        feature = catalog[name]
        exp_atoms = [a for a in exp.atoms if a.feature == name]
        dom = feature.value_domain
        if dom is not None:
            allowed = _finite_allowed(obs_atoms, dom)
            if not allowed:
                return True
            if exp_atoms and not (allowed & _finite_allowed(exp_atoms, dom)):
                return True
        else:
            if not _numeric_satisfiable(obs_atoms):
                return True
            if exp_atoms and not _numeric_satisfiable(obs_atoms + exp_atoms):
                return True
    return False


def validate_query(q: PXQLQuery, pair: PairExample, catalog: PairFeatureCatalog) -> list[str]:
    """Diagnostics for every violated requirement on a query and its pair of interest."""
    if q.bound and (pair.left_id, pair.right_id) != (q.left_id, q.right_id):
        raise KeyError(f"pair ({pair.left_id}, {pair.right_id}) is not the query's pair of interest")
    diags = []
    for a in q.des.atoms:
        if not eval_atom(a, pair.derived.get(a.feature)):
            diags.append(f"DESPITE atom `{a}` is false on the pair of interest")
    if not eval_clause(q.obs, pair):
        failing = [str(a) for a in q.obs.atoms if not eval_atom(a, pair.derived.get(a.feature))]
        diags.append(f"OBSERVED clause is false on the pair of interest (`{' ^ '.join(failing)}`)")
    if eval_clause(q.exp, pair):
        diags.append("EXPECTED clause is true on the pair of interest")
    if not entails_negation(q.obs, q.exp, catalog):
        diags.append("cannot establish that OBSERVED excludes EXPECTED")
    return diags
