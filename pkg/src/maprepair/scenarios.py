"""Seeded synthetic scenarios: a source schema, policy views and s-t tgds.

Randomness comes from :class:`random.Random` (Mersenne Twister MT19937)
seeded with ``config.seed``; the generator only calls ``randrange``, whose
output for a given seed is stable across CPython versions.

Algorithm, in draw order:

1. Source schema: ``n_relations`` relations ``R1..Rk``, arity drawn from
   ``[2, max_arity]``.
2. Views ``V1..Vm``: the first ``k`` views delete attributes of
   ``R1..Rk`` in turn, so every relation is visible somewhere; view ``j``
   after that applies operator ``(j - k) mod 4`` of (merge, self-join,
   attribute deletion, copy).  Single-relation operators take relations
   round-robin.
   Merge joins two relations on one shared variable, self-join joins a
   relation with itself on one shared variable; both export a random
   subset of their variables.
3. Tgds ``T1..Tn``: 1 to ``n_atoms`` body atoms over random relations,
   each atom after the first sharing one variable with an earlier one;
   the single head atom exports 1 to ``n_vars`` distinct body variables.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .model import (
    Atom,
    Schema,
    Tgd,
    Var,
    atoms_variables,
    parse_dependencies,
    parse_instance,
    parse_schema,
    serialize_instance,
    serialize_labeled,
    serialize_schema,
)
from .safety import Policy

OPERATORS = ("merge", "selfjoin", "delete", "copy")


@dataclass(frozen=True)
class ScenarioConfig:
    n_dep: int = 10
    n_atoms: int = 3
    n_vars: int = 5
    n_views: Optional[int] = None
    max_arity: int = 5
    seed: int = 0
    n_relations: Optional[int] = None

    def relations(self) -> int:
        return self.n_relations if self.n_relations is not None else max(4, self.n_dep // 4)

    def views(self) -> int:
        if self.n_views is not None:
            return self.n_views
        k = self.relations()
        return min(40, k + max(4, k // 2))

    def validate(self) -> None:
        if self.n_dep < 1:
            raise ValueError("n_dep must be positive")
        if not 1 <= self.n_atoms <= 5:
            raise ValueError("n_atoms must be in [1, 5]")
        if self.n_vars < 1:
            raise ValueError("n_vars must be positive")
        if not 1 <= self.max_arity <= 5:
            raise ValueError("max_arity must be in [1, 5]")
        if self.relations() < 1 or self.views() < 0:
            raise ValueError("need at least one relation")
        if self.n_vars > self.n_atoms * self.max_arity:
            raise ValueError(
                f"n_vars={self.n_vars} exceeds the {self.n_atoms * self.max_arity} available body positions"
            )

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass
class Scenario:
    source: Schema
    views: List[Tgd]
    tgds: List[Tgd]
    config: Optional[ScenarioConfig] = None
    policy_instance: Optional[object] = None
    _policy: Optional[Policy] = field(default=None, repr=False)

    def policy(self) -> Policy:
        if self._policy is None:
            if self.policy_instance is not None:
                self._policy = Policy(instance=self.policy_instance)
            else:
                self._policy = Policy(self.views, self.source)
        return self._policy

    def write(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "source.schema").write_text(serialize_schema(self.source))
        (d / "views.tgds").write_text(serialize_labeled(self.views))
        (d / "mapping.tgds").write_text(serialize_labeled(self.tgds))
        cfg = self.config.to_json() if self.config is not None else {}
        (d / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
        if self.policy_instance is not None:
            (d / "policy.instance").write_text(serialize_instance(self.policy_instance))
        return d


def load_scenario(directory) -> Scenario:
    d = Path(directory)
    source = parse_schema((d / "source.schema").read_text())
    views: List[Tgd] = []
    if (d / "views.tgds").exists():
        views = parse_dependencies((d / "views.tgds").read_text(), source, id_prefix="v")
    tgds = parse_dependencies((d / "mapping.tgds").read_text(), source)
    cfg = None
    if (d / "config.json").exists():
        raw = json.loads((d / "config.json").read_text())
        cfg = ScenarioConfig.from_json(raw) if raw else None
    inst = None
    if (d / "policy.instance").exists():
        inst = parse_instance((d / "policy.instance").read_text(), source)
    return Scenario(source, views, tgds, cfg, inst)


class _Draw:
    """Thin helpers over ``randrange`` only."""

    def __init__(self, seed: int):
        self.r = random.Random(seed)

    def below(self, n: int) -> int:
        return self.r.randrange(n)

    def between(self, lo: int, hi: int) -> int:
        """Uniform in ``[lo, hi]``."""
        return self.r.randrange(lo, hi + 1)

    def pick(self, seq):
        return seq[self.r.randrange(len(seq))]

    def sample(self, seq, k: int) -> list:
        """``k`` distinct items, in draw order (partial Fisher-Yates)."""
        pool = list(seq)
        out = []
        for _ in range(k):
            j = self.r.randrange(len(pool))
            out.append(pool.pop(j))
        return out


class _Vars:
    def __init__(self):
        self.k = 0

    def __call__(self) -> Var:
        self.k += 1
        return Var(f"x{self.k}")


def _fresh_atom(rel: str, arity: int, new: _Vars) -> Atom:
    return Atom(rel, tuple(new() for _ in range(arity)))


def _share(d: _Draw, a: Atom, b: Atom) -> Atom:
    """Replace a random position of ``b`` by a random variable of ``a``."""
    v = d.pick(a.terms)
    p = d.below(b.arity)
    terms = list(b.terms)
    terms[p] = v
    return Atom(b.relation, tuple(terms))


def _export(d: _Draw, body: List[Atom], lo: int, hi: int) -> List[Var]:
    vs = atoms_variables(body)
    hi = min(hi, len(vs))
    lo = min(lo, hi)
    return d.sample(vs, d.between(lo, hi))


def _make_views(d: _Draw, cfg: ScenarioConfig, rels: List[Tuple[str, int]]) -> List[Tgd]:
    views = []
    rr = 0
    k = len(rels)
    for j in range(cfg.views()):
        op = "delete" if j < k else OPERATORS[(j - k) % 4]
        new = _Vars()
        if op in ("copy", "delete"):
            name, ar = rels[rr % len(rels)]
            rr += 1
            body = [_fresh_atom(name, ar, new)]
            if op == "copy":
                head_vars = list(body[0].terms)
            else:
                head_vars = [t for t in body[0].terms if d.below(2)]
                if len(head_vars) == ar and ar > 0:
                    head_vars.pop(d.below(ar))
        elif op == "merge":
            (n1, a1), (n2, a2) = d.sample(rels, 2) if len(rels) > 1 else (rels[0], rels[0])
            b1 = _fresh_atom(n1, a1, new)
            b2 = _share(d, b1, _fresh_atom(n2, a2, new))
            body = [b1, b2]
            head_vars = _export(d, body, 1, len(atoms_variables(body)))
        else:
            name, ar = d.pick(rels)
            b1 = _fresh_atom(name, ar, new)
            b2 = _share(d, b1, _fresh_atom(name, ar, new))
            body = [b1, b2] if b2 != b1 else [b1]
            head_vars = _export(d, body, 1, len(atoms_variables(body)))
        head = Atom(f"V{j + 1}", tuple(head_vars))
        views.append(Tgd(tuple(body), (head,), f"v{j + 1}"))
    return views


def _make_tgds(d: _Draw, cfg: ScenarioConfig, rels: List[Tuple[str, int]]) -> List[Tgd]:
    out = []
    for j in range(cfg.n_dep):
        new = _Vars()
        m = d.between(1, cfg.n_atoms)
        body: List[Atom] = []
        for _ in range(m):
            name, ar = d.pick(rels)
            a = _fresh_atom(name, ar, new)
            if body:
                a = _share(d, d.pick(body), a)
            body.append(a)
        head_vars = _export(d, body, 1, cfg.n_vars)
        out.append(Tgd(tuple(body), (Atom(f"T{j + 1}", tuple(head_vars)),), f"t{j + 1}"))
    return out


def generate(config: ScenarioConfig) -> Scenario:
    config.validate()
    d = _Draw(config.seed)
    lo = min(2, config.max_arity)
    rels = [(f"R{i + 1}", d.between(lo, config.max_arity)) for i in range(config.relations())]
    source = Schema(rels)
    views = _make_views(d, config, rels)
    tgds = _make_tgds(d, config, rels)
    return Scenario(source, views, tgds, config)


def copy_views(source: Schema) -> List[Tgd]:
    """One identity view per source relation."""
    out = []
    for j, (name, ar) in enumerate(source.items(), start=1):
        vs = tuple(Var(f"x{i + 1}") for i in range(ar))
        out.append(Tgd((Atom(name, vs),), (Atom(f"C_{name}", vs),), f"copy{j}"))
    return out
