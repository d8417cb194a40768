"""Terms, atoms, dependencies and schemas.

Terms are small tagged tuples so that hashing and equality stay in C; the
second field keeps kinds apart (``Var("x") != Const("x")``).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union


class Var(NamedTuple):
    name: str
    kind: str = "var"

    def __repr__(self) -> str:
        return self.name


class Null(NamedTuple):
    id: int
    kind: str = "null"

    def __repr__(self) -> str:
        return f"_n{self.id}"


class Const(NamedTuple):
    name: str
    kind: str = "const"

    def __repr__(self) -> str:
        return self.name


#: The critical constant; it stands for any value of a source instance.
CRITICAL = Const("*", "critical")

Term = Union[Var, Null, Const]
Substitution = Dict[Term, Term]


def is_var(t: Term) -> bool:
    return t[1] == "var"


def is_null(t: Term) -> bool:
    return t[1] == "null"


def is_constant(t: Term) -> bool:
    return t[1] == "const" or t[1] == "critical"


class NullFactory:
    """Monotone source of fresh labeled nulls for one chase run."""

    def __init__(self, start: int = 1):
        self._next = start

    def fresh(self) -> Null:
        n = Null(self._next)
        self._next += 1
        return n

    @property
    def next_id(self) -> int:
        return self._next


class Atom(NamedTuple):
    relation: str
    terms: Tuple[Term, ...]

    def __repr__(self) -> str:
        return f"{self.relation}({', '.join(map(repr, self.terms))})"

    @property
    def arity(self) -> int:
        return len(self.terms)

    def position(self, i: int) -> Term:
        """The i-th term, 1-based."""
        return self.terms[i - 1]

    def variables(self) -> Iterator[Var]:
        return (t for t in self.terms if t[1] == "var")

    def nulls(self) -> Iterator[Null]:
        return (t for t in self.terms if t[1] == "null")

    def is_ground(self) -> bool:
        return all(t[1] != "var" for t in self.terms)

    def substitute(self, mapping: Mapping[Term, Term]) -> "Atom":
        get = mapping.get
        return Atom(self.relation, tuple(get(t, t) for t in self.terms))


Fact = Atom


def atom(relation: str, *terms: Union[str, Term]) -> Atom:
    """Build an atom; plain strings become variables, ``"*"`` the critical constant."""
    out = []
    for t in terms:
        if isinstance(t, str):
            out.append(CRITICAL if t == "*" else Var(t))
        else:
            out.append(t)
    return Atom(relation, tuple(out))


def atoms_variables(atoms: Iterable[Atom]) -> List[Var]:
    """Variables of ``atoms`` in order of first occurrence."""
    seen: Dict[Var, None] = {}
    for a in atoms:
        for t in a.terms:
            if t[1] == "var":
                seen.setdefault(t, None)
    return list(seen)


def atoms_nulls(atoms: Iterable[Atom]) -> List[Null]:
    seen: Dict[Null, None] = {}
    for a in atoms:
        for t in a.terms:
            if t[1] == "null":
                seen.setdefault(t, None)
    return list(seen)


class Schema(Mapping[str, int]):
    """Relation name to arity; immutable and hashable."""

    def __init__(self, relations: Union[Mapping[str, int], Iterable[Tuple[str, int]]] = ()):
        items = list(relations.items()) if isinstance(relations, Mapping) else list(relations)
        rel: Dict[str, int] = {}
        for name, arity in items:
            if name in rel:
                raise ValueError(f"duplicate relation {name!r} in schema")
            if arity < 0:
                raise ValueError(f"negative arity for {name!r}")
            rel[name] = int(arity)
        self._rel = rel
        self._key = tuple(rel.items())

    def __getitem__(self, name: str) -> int:
        return self._rel[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rel)

    def __len__(self) -> int:
        return len(self._rel)

    def __hash__(self) -> int:
        return hash(self._key)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Schema):
            return self._key == other._key
        return NotImplemented

    def __repr__(self) -> str:
        return "Schema(" + ", ".join(f"{n}/{a}" for n, a in self._key) + ")"

    def check_atom(self, a: Atom) -> None:
        if a.relation not in self._rel:
            raise KeyError(f"unknown relation {a.relation!r}")
        if self._rel[a.relation] != a.arity:
            raise ValueError(
                f"arity mismatch for {a.relation}: expected {self._rel[a.relation]}, got {a.arity}"
            )

    @classmethod
    def infer(cls, atoms: Iterable[Atom]) -> "Schema":
        rel: Dict[str, int] = {}
        for a in atoms:
            known = rel.setdefault(a.relation, a.arity)
            if known != a.arity:
                raise ValueError(f"relation {a.relation} used with arities {known} and {a.arity}")
        return cls(rel)


@dataclass(frozen=True)
class Tgd:
    """A tuple-generating dependency ``body -> head``.

    Variables of the head that do not occur in the body are existential.
    """

    body: Tuple[Atom, ...]
    head: Tuple[Atom, ...]
    id: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "head", tuple(self.head))
        for a in self.body + self.head:
            if any(is_null(t) for t in a.terms):
                raise ValueError(f"dependency atoms must be null-free: {a!r}")

    @cached_property
    def frontier(self) -> frozenset:
        """Exported variables: those in both body and head."""
        body_vars = set(atoms_variables(self.body))
        return frozenset(v for v in atoms_variables(self.head) if v in body_vars)

    @cached_property
    def body_variables(self) -> List[Var]:
        return atoms_variables(self.body)

    @cached_property
    def existentials(self) -> List[Var]:
        body_vars = set(self.body_variables)
        return [v for v in atoms_variables(self.head) if v not in body_vars]

    def variables(self) -> List[Var]:
        return atoms_variables(self.body + self.head)

    def with_id(self, id: str) -> "Tgd":
        return Tgd(self.body, self.head, id)

    def __str__(self) -> str:
        return serialize_tgd(self)


@dataclass(frozen=True)
class Egd:
    """A general egd ``body -> left = right``."""

    body: Tuple[Atom, ...]
    left: Var
    right: Var


@dataclass(frozen=True)
class DerivedEgd:
    """``body(origin) -> x = *`` for every ``x`` in ``equated``."""

    body: Tuple[Atom, ...]
    equated: frozenset
    origin: str

    def __str__(self) -> str:
        eqs = " & ".join(f"{v!r} = *" for v in sorted(self.equated, key=lambda v: v.name))
        return f"{', '.join(map(repr, self.body))} -> {eqs}"


class Instance:
    """An ordered set of facts with a per-relation index.

    Set semantics: duplicates are dropped, first occurrence wins the order.
    """

    __slots__ = ("_facts", "_set", "_by_rel", "_pos_index")

    def __init__(self, facts: Iterable[Atom] = ()):
        seen: Dict[Atom, None] = {}
        for f in facts:
            seen.setdefault(f, None)
        self._facts: Tuple[Atom, ...] = tuple(seen)
        self._set = frozenset(self._facts)
        by_rel: Dict[str, List[Atom]] = {}
        for f in self._facts:
            by_rel.setdefault(f.relation, []).append(f)
        self._by_rel = by_rel
        self._pos_index: Optional[Dict[Tuple[str, int, Term], List[Atom]]] = None

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._facts)

    def __len__(self) -> int:
        return len(self._facts)

    def __contains__(self, f: object) -> bool:
        return f in self._set

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Instance):
            return self._set == other._set
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._set)

    def __repr__(self) -> str:
        return "{" + ", ".join(map(repr, self._facts)) + "}"

    @property
    def facts(self) -> Tuple[Atom, ...]:
        return self._facts

    def as_set(self) -> frozenset:
        return self._set

    def relation(self, name: str) -> List[Atom]:
        return self._by_rel.get(name, [])

    def relations(self) -> List[str]:
        return list(self._by_rel)

    def position_index(self) -> Dict[Tuple[str, int, Term], List[Atom]]:
        """(relation, 0-based position, term) -> facts, built on first use."""
        if self._pos_index is None:
            idx: Dict[Tuple[str, int, Term], List[Atom]] = {}
            for f in self._facts:
                for i, t in enumerate(f.terms):
                    idx.setdefault((f.relation, i, t), []).append(f)
            self._pos_index = idx
        return self._pos_index

    def union(self, *others: Iterable[Atom]) -> "Instance":
        facts = list(self._facts)
        for o in others:
            facts.extend(o)
        return Instance(facts)

    def difference(self, other: Iterable[Atom]) -> "Instance":
        drop = set(other)
        return Instance(f for f in self._facts if f not in drop)

    def apply(self, mapping: Mapping[Term, Term]) -> "Instance":
        if not mapping:
            return self
        return Instance(f.substitute(mapping) for f in self._facts)

    def nulls(self) -> List[Null]:
        return atoms_nulls(self._facts)

    def terms(self) -> List[Term]:
        seen: Dict[Term, None] = {}
        for f in self._facts:
            for t in f.terms:
                seen.setdefault(t, None)
        return list(seen)


@dataclass(frozen=True)
class SchemaMapping:
    """A mapping ``(source, target, tgds)``."""

    source: Schema
    target: Schema
    tgds: Tuple[Tgd, ...]

    def __post_init__(self) -> None:
        for t in self.tgds:
            for a in t.body:
                self.source.check_atom(a)
            for a in t.head:
                self.target.check_atom(a)


@dataclass(frozen=True)
class Cq:
    """A conjunctive query ``∃ bound. atoms`` with ordered free variables."""

    atoms: Tuple[Atom, ...]
    free: Tuple[Var, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "free", tuple(self.free))
        vs = set(atoms_variables(self.atoms))
        missing = [v for v in self.free if v not in vs]
        if missing:
            raise ValueError(f"free variables {missing} do not occur in the query")

    def has_constants(self) -> bool:
        return any(is_constant(t) or is_null(t) for a in self.atoms for t in a.terms)


# ---------------------------------------------------------------------------
# derived notions


def frontier(tgd: Tgd) -> frozenset:
    return tgd.frontier


def inverse(tgds: Iterable[Tgd]) -> List[Tgd]:
    """Swap body and head of every tgd.

    Body-only variables of a tgd become existential variables of its inverse.
    """
    out = []
    for t in tgds:
        if t.id.startswith("inv(") and t.id.endswith(")"):
            new_id = t.id[4:-1]
        else:
            new_id = f"inv({t.id})"
        out.append(Tgd(t.head, t.body, new_id))
    return out


def critical_instance(schema: Schema) -> Instance:
    return Instance(Atom(name, (CRITICAL,) * arity) for name, arity in schema.items())


def join_count(tgd: Tgd) -> int:
    """Number of distinct body variables that occur in two or more body positions."""
    counts = Counter(t for a in tgd.body for t in a.terms if t[1] == "var")
    return sum(1 for c in counts.values() if c >= 2)


def repeated_variables(atoms: Iterable[Atom]) -> List[Var]:
    counts = Counter(t for a in atoms for t in a.terms if t[1] == "var")
    return [v for v, c in counts.items() if c >= 2]


def drop_hidden_head_positions(original: Tgd, body: Sequence[Atom], head: Optional[Sequence[Atom]] = None) -> Tgd:
    """Rebuild a tgd after a body rewrite.

    Exported variables of ``original`` that no longer occur in ``body`` are
    removed from every head position; existential head variables stay.
    """
    head = original.head if head is None else tuple(head)
    body_vars = set(atoms_variables(body))
    gone = {v for v in original.frontier if v not in body_vars}
    if gone:
        head = tuple(Atom(a.relation, tuple(t for t in a.terms if t not in gone)) for a in head)
    return Tgd(tuple(body), head, original.id)


def hide_variables(tgd: Tgd, hidden: Iterable[Var]) -> Tgd:
    """Remove ``hidden`` exported variables from every head position."""
    hidden = set(hidden) & tgd.frontier
    if not hidden:
        return tgd
    head = tuple(Atom(a.relation, tuple(t for t in a.terms if t not in hidden)) for a in tgd.head)
    return Tgd(tgd.body, head, tgd.id)


def canonical(tgd: Tgd) -> Tgd:
    """Rename variables to v1, v2, ... in order of first occurrence (body, then head)."""
    ren = {v: Var(f"v{i}") for i, v in enumerate(tgd.variables(), start=1)}
    return Tgd(tuple(a.substitute(ren) for a in tgd.body), tuple(a.substitute(ren) for a in tgd.head), tgd.id)


def canonical_key(tgd: Tgd) -> str:
    return serialize_tgd(canonical(tgd))


def same_up_to_renaming(a: Tgd, b: Tgd) -> bool:
    return canonical_key(a) == canonical_key(b)


def fresh_var_namer(used: Iterable[Var], prefix: str = "v"):
    """Return a callable minting variables ``v1, v2, ...`` not in ``used``."""
    taken = {v.name for v in used}
    counter = [0]

    def fresh() -> Var:
        while True:
            counter[0] += 1
            name = f"{prefix}{counter[0]}"
            if name not in taken:
                taken.add(name)
                return Var(name)

    return fresh


# serialization lives here so Tgd.__str__ does not need a circular import


def _term_text(t: Term) -> str:
    if t[1] == "var":
        return t[0]
    if t is CRITICAL or t == CRITICAL:
        return "*"
    if t[1] == "null":
        return f"_n{t[0]}"
    return t[0]


def serialize_atom(a: Atom) -> str:
    return f"{a.relation}({', '.join(_term_text(t) for t in a.terms)})"


def serialize_tgd(t: Tgd) -> str:
    return f"{', '.join(map(serialize_atom, t.body))} -> {', '.join(map(serialize_atom, t.head))}."


def serialize_dependencies(tgds: Iterable[Tgd]) -> str:
    return "".join(serialize_tgd(t) + "\n" for t in tgds)


def serialize_instance(inst: Iterable[Atom]) -> str:
    return "".join(serialize_atom(f) + ".\n" for f in inst)


def serialize_schema(schema: Schema) -> str:
    return "".join(f"{n}/{a}\n" for n, a in schema.items())


# ---------------------------------------------------------------------------
# text format
#
#   file      := { statement }
#   statement := [ label ":" ] atoms "->" atoms "."
#   atoms     := atom { "," atom }
#   atom      := IDENT "(" [ term { "," term } ] ")"
#   term      := IDENT | "*" | NULL          (the last two only in fact files)
#   IDENT     := [A-Za-z][A-Za-z0-9_]* followed by optional primes
#   NULL      := "_n" digits
#
# "#" starts a comment that runs to the end of the line.


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>->)
  | (?P<null>_n[0-9]+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*'*)
  | (?P<star>\*)
  | (?P<punct>[(),.:])
    """,
    re.VERBOSE,
)


class _Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Token]:
    out: List[_Token] = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        val = m.group()
        if kind not in ("ws", "comment"):
            out.append(_Token(val if kind == "punct" else kind, val, line, pos - line_start + 1))
        nl = val.count("\n")
        if nl:
            line += nl
            line_start = pos + val.rfind("\n") + 1
        pos = m.end()
    out.append(_Token("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str, allow_ground: bool):
        self.toks = _tokenize(text)
        self.i = 0
        self.allow_ground = allow_ground

    @property
    def tok(self) -> _Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Optional[_Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def expect(self, kind: str) -> _Token:
        tok = self.tok
        if tok.kind != kind:
            found = tok.text or "end of input"
            raise self.error(f"expected {kind!r}, found {found!r}")
        self.i += 1
        return tok

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "ident":
            self.i += 1
            return Const(tok.text) if self.allow_ground else Var(tok.text)
        if tok.kind == "star" and self.allow_ground:
            self.i += 1
            return CRITICAL
        if tok.kind == "null" and self.allow_ground:
            self.i += 1
            return Null(int(tok.text[2:]))
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}")

    def atom(self) -> Tuple[Atom, _Token]:
        name = self.expect("ident")
        self.expect("(")
        terms: List[Term] = []
        if self.tok.kind != ")":
            terms.append(self.term())
            while self.tok.kind == ",":
                self.i += 1
                terms.append(self.term())
        self.expect(")")
        return Atom(name.text, tuple(terms)), name

    def atoms(self) -> List[Tuple[Atom, _Token]]:
        out = [self.atom()]
        while self.tok.kind == ",":
            self.i += 1
            out.append(self.atom())
        return out


def _check(schema: Optional[Schema], a: Atom, tok: _Token) -> None:
    if schema is None:
        return
    if a.relation not in schema:
        raise ParseError(f"unknown relation {a.relation!r}", tok.line, tok.col)
    if schema[a.relation] != a.arity:
        raise ParseError(
            f"arity mismatch for {a.relation}: expected {schema[a.relation]}, got {a.arity}", tok.line, tok.col
        )


def parse_dependencies(
    text: str,
    source: Optional[Schema] = None,
    target: Optional[Schema] = None,
    id_prefix: str = "t",
) -> List[Tgd]:
    """Parse tgds; unlabeled statements get ids ``{id_prefix}1, {id_prefix}2, ...`` in file order.

    When a schema is omitted the corresponding side is only checked for
    consistent arities.
    """
    p = _Parser(text, allow_ground=False)
    out: List[Tgd] = []
    seen_ids = set()
    arities: Dict[str, Tuple[int, _Token]] = {}
    while p.tok.kind != "eof":
        label = None
        if p.tok.kind == "ident" and p.toks[p.i + 1].kind == ":":
            label = p.tok
            p.i += 2
        start = p.tok
        body = p.atoms()
        p.expect("arrow")
        head = p.atoms()
        p.expect(".")
        for a, tok in body:
            _check(source, a, tok)
        for a, tok in head:
            _check(target, a, tok)
        for a, tok in body + head:
            known = arities.setdefault(a.relation, (a.arity, tok))
            if known[0] != a.arity:
                raise ParseError(
                    f"relation {a.relation} used with arities {known[0]} and {a.arity}", tok.line, tok.col
                )
        tid = label.text if label else f"{id_prefix}{len(out) + 1}"
        if tid in seen_ids:
            raise ParseError(f"duplicate dependency id {tid!r}", (label or start).line, (label or start).col)
        seen_ids.add(tid)
        out.append(Tgd(tuple(a for a, _ in body), tuple(a for a, _ in head), tid))
    return out


def parse_instance(text: str, schema: Optional[Schema] = None) -> Instance:
    """Parse facts ``R(t1, ..., tk).``; ``*`` is the critical constant, ``_nK`` a labeled null."""
    p = _Parser(text, allow_ground=True)
    facts = []
    while p.tok.kind != "eof":
        a, tok = p.atom()
        p.expect(".")
        _check(schema, a, tok)
        facts.append(a)
    return Instance(facts)


def parse_schema(text: str) -> Schema:
    """Parse ``Name/arity`` lines; blank lines and ``#`` comments are ignored."""
    rel = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"([A-Za-z][A-Za-z0-9_]*'*)\s*/\s*([0-9]+)", line)
        if m is None:
            raise ParseError(f"expected 'Name/arity', found {line!r}", lineno, raw.find(line) + 1)
        if m.group(1) in seen:
            raise ParseError(f"duplicate relation {m.group(1)!r}", lineno, 1)
        seen.add(m.group(1))
        rel.append((m.group(1), int(m.group(2))))
    return Schema(rel)


def serialize_labeled(tgds: Iterable[Tgd]) -> str:
    """Like :func:`serialize_dependencies` but keeps ids as statement labels."""
    return "".join(f"{t.id}: {serialize_tgd(t)}\n" if t.id else serialize_tgd(t) + "\n" for t in tgds)
