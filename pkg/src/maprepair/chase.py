"""Standard chase steps and the bag-organized visible chase."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .homomorphism import active_triggers, exists_homomorphism, find_homomorphisms
from .model import (
    CRITICAL,
    Atom,
    DerivedEgd,
    Egd,
    Instance,
    Null,
    NullFactory,
    Schema,
    Term,
    Tgd,
    critical_instance,
    inverse,
)

log = logging.getLogger(__name__)


class ChaseFailure(Exception):
    """An egd step tried to equate two distinct constants."""


class NotActive(ValueError):
    """The given substitution is not an active trigger."""


# ---------------------------------------------------------------------------
# single steps


def _extend_with_nulls(tgd: Tgd, h: Mapping[Term, Term], nulls: NullFactory) -> Dict[Term, Term]:
    h2 = dict(h)
    for y in tgd.existentials:
        h2[y] = nulls.fresh()
    return h2


def chase_tgd_step(inst: Instance, tgd: Tgd, h: Mapping[Term, Term], nulls: Optional[NullFactory] = None) -> Instance:
    """Apply ``tgd`` with trigger ``h``; existential variables get fresh nulls."""
    if nulls is None:
        nulls = NullFactory(_max_null(inst) + 1)
    if any(a.substitute(h) not in inst for a in tgd.body):
        raise NotActive("substitution does not map the body into the instance")
    if exists_homomorphism(tgd.head, inst, h):
        raise NotActive("trigger is already satisfied")
    h2 = _extend_with_nulls(tgd, h, nulls)
    return inst.union(a.substitute(h2) for a in tgd.head)


def _equate(a: Term, b: Term) -> Dict[Term, Term]:
    if a == b:
        raise NotActive("terms are already equal")
    if a[1] == "null":
        return {a: b}
    if b[1] == "null":
        return {b: a}
    raise ChaseFailure(f"cannot equate constants {a!r} and {b!r}")


def egd_substitution(egd: Union[DerivedEgd, Egd], h: Mapping[Term, Term]) -> Dict[Term, Term]:
    """The renaming ``ν`` an egd step applies."""
    if isinstance(egd, DerivedEgd):
        nu: Dict[Term, Term] = {}
        for x in egd.equated:
            v = h[x]
            if v == CRITICAL:
                continue
            if v[1] != "null":
                raise ChaseFailure(f"cannot equate constant {v!r} with *")
            nu[v] = CRITICAL
        if not nu:
            raise NotActive("every equated variable already maps to *")
        return nu
    return _equate(h[egd.left], h[egd.right])


def chase_egd_step(inst: Instance, egd: Union[DerivedEgd, Egd], h: Mapping[Term, Term]) -> Instance:
    if any(a.substitute(h) not in inst for a in egd.body):
        raise NotActive("substitution does not map the body into the instance")
    return inst.apply(egd_substitution(egd, h))


def _max_null(facts: Iterable[Atom]) -> int:
    m = 0
    for f in facts:
        for t in f.terms:
            if t[1] == "null" and t[0] > m:
                m = t[0]
    return m


def chase(inst: Instance, tgds: Sequence[Tgd], nulls: Optional[NullFactory] = None, max_rounds: int = 1000) -> Instance:
    """Restricted chase to a fixpoint; tgds in input order, triggers in search order."""
    if nulls is None:
        nulls = NullFactory(_max_null(inst) + 1)
    facts = list(inst)
    cur = inst
    for _ in range(max_rounds):
        changed = False
        for tgd in tgds:
            for h in list(find_homomorphisms(tgd.body, cur)):
                if exists_homomorphism(tgd.head, cur, h):
                    continue
                h2 = _extend_with_nulls(tgd, h, nulls)
                facts.extend(a.substitute(h2) for a in tgd.head)
                cur = Instance(facts)
                changed = True
        if not changed:
            return cur
    raise RuntimeError("chase did not terminate within the round limit")


def derived_egds(tgds: Sequence[Tgd], inst: Instance) -> List[DerivedEgd]:
    """One egd per tgd and per realized set of frontier variables sent to nulls."""
    out: Dict[Tuple[str, frozenset], DerivedEgd] = {}
    for tgd in tgds:
        front = sorted(tgd.frontier)
        if not front:
            continue
        for h in find_homomorphisms(tgd.body, inst):
            eq = frozenset(x for x in front if h[x][1] == "null")
            if eq and (tgd.id, eq) not in out:
                out[(tgd.id, eq)] = DerivedEgd(tgd.body, eq, tgd.id)
    return list(out.values())


# ---------------------------------------------------------------------------
# bags


@dataclass(frozen=True, eq=False)
class Bag:
    id: int
    facts: Tuple[Atom, ...]
    dependency: Union[Tgd, DerivedEgd]
    trigger: Mapping[Term, Term]
    premise: Tuple[Atom, ...]
    predecessors: Tuple[int, ...] = ()
    depth: int = 1
    stage: str = "inverse"  # "forward", "inverse" or "egd"

    @property
    def origin(self) -> str:
        """Identifier of the dependency that created the bag."""
        d = self.dependency
        if isinstance(d, DerivedEgd):
            return egd_label(d)
        return d.id

    @property
    def origin_tgd(self) -> str:
        """Id of the s-t tgd responsible for the bag."""
        d = self.dependency
        if isinstance(d, DerivedEgd):
            return d.origin
        if self.stage == "inverse" and d.id.startswith("inv(") and d.id.endswith(")"):
            return d.id[4:-1]
        return d.id


def egd_label(e: DerivedEgd) -> str:
    return f"eq({e.origin}:{','.join(sorted(v.name for v in e.equated))})"


@dataclass
class BagForest:
    bags: List[Bag]
    unifier: Dict[Term, Term]
    target_bags: List[Bag] = field(default_factory=list)
    egds: List[DerivedEgd] = field(default_factory=list)
    tgds: List[Tgd] = field(default_factory=list)
    next_null: int = 1
    stats: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_id = {b.id: b for b in self.bags}
        self._succ: Optional[Dict[int, List[int]]] = None
        self._supp: Dict[int, frozenset] = {}

    def bag(self, bag_id: int) -> Bag:
        return self._by_id[bag_id]

    def successors(self, bag_id: int) -> List[int]:
        if self._succ is None:
            succ: Dict[int, List[int]] = {b.id: [] for b in self.bags}
            for b in self.bags:
                for p in b.predecessors:
                    succ[p].append(b.id)
            self._succ = succ
        return self._succ[bag_id]

    def support(self, bag_id: int) -> frozenset:
        """Depth-1 bags a bag is (transitively) derived from."""
        if bag_id not in self._supp:
            b = self._by_id[bag_id]
            if not b.predecessors:
                s = frozenset([bag_id])
            else:
                s = frozenset().union(*(self.support(p) for p in b.predecessors))
            self._supp[bag_id] = s
        return self._supp[bag_id]

    def ancestors(self, bag_id: int) -> frozenset:
        out = set()
        stack = list(self._by_id[bag_id].predecessors)
        while stack:
            p = stack.pop()
            if p not in out:
                out.add(p)
                stack.extend(self._by_id[p].predecessors)
        return frozenset(out)

    def unified_facts(self, bag: Bag) -> Tuple[Atom, ...]:
        u = self.unifier
        return tuple(dict.fromkeys(f.substitute(u) for f in bag.facts))

    def to_dot(self) -> str:
        lines = ["digraph bags {"]
        for b in self.bags:
            lines.append(f'  b{b.id} [label="{b.id}/{b.depth}/{b.origin}"];')
        for b in self.bags:
            for p in b.predecessors:
                lines.append(f"  b{p} -> b{b.id};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def flat(forest: BagForest) -> Instance:
    """Union of all source-side bag facts with the unifier applied."""
    u = forest.unifier
    return Instance(f.substitute(u) for b in forest.bags for f in b.facts)


def _bag_chase_tgds(
    tgds: Sequence[Tgd],
    inst: Instance,
    nulls: NullFactory,
    first_id: int,
    stage: str,
    reuse: Optional[Dict[Tuple, Bag]] = None,
) -> List[Bag]:
    bags: List[Bag] = []
    facts = list(inst)
    cur = inst
    for tgd in tgds:
        for h in list(find_homomorphisms(tgd.body, cur)):
            if exists_homomorphism(tgd.head, cur, h):
                continue
            key = (stage, tgd.id, tgd, tuple(sorted(((k[0], v) for k, v in h.items()), key=repr)))
            prev = reuse.get(key) if reuse else None
            if prev is not None:
                new_facts = prev.facts
            else:
                h2 = _extend_with_nulls(tgd, h, nulls)
                new_facts = tuple(dict.fromkeys(a.substitute(h2) for a in tgd.head))
            bag = Bag(
                id=first_id + len(bags),
                facts=new_facts,
                dependency=tgd,
                trigger=dict(h),
                premise=tuple(dict.fromkeys(a.substitute(h) for a in tgd.body)),
                stage=stage,
            )
            bags.append(bag)
            facts.extend(new_facts)
            cur = Instance(facts)
    return bags


def visible_chase(
    tgds: Sequence[Tgd],
    source: Schema,
    *,
    previous: Optional[BagForest] = None,
) -> BagForest:
    """Bag-organized visible chase.

    Forward bags (target side) are kept in ``target_bags``; ``bags`` holds
    the inverse bags followed by the derived bags of the egd phase.

    With ``previous``, bags of the forward and inverse phases whose
    dependency and trigger recur are reused together with their nulls, and
    the null counter continues after the previous run.  The egd phase is
    always recomputed.
    """
    tgds = list(tgds)
    crt = critical_instance(source)
    nulls = NullFactory(previous.next_null if previous is not None else 1)
    reuse: Optional[Dict[Tuple, Bag]] = None
    if previous is not None:
        reuse = {}
        for b in list(previous.target_bags) + [b for b in previous.bags if b.stage == "inverse"]:
            key = (b.stage, b.dependency.id, b.dependency, tuple(sorted(((k[0], v) for k, v in b.trigger.items()), key=repr)))
            reuse.setdefault(key, b)

    b0 = _bag_chase_tgds(tgds, crt, nulls, 1, "forward", reuse)
    i0 = Instance(f for b in b0 for f in b.facts).difference(crt)
    inv = inverse(tgds)
    b1 = _bag_chase_tgds(inv, i0, nulls, 1, "inverse", reuse)

    # Reused bags keep their old nulls; make sure new ones never collide.
    used_max = _max_null(f for b in b0 + b1 for f in b.facts)
    if used_max >= nulls.next_id:
        nulls = NullFactory(used_max + 1)

    # the inverse-phase instance excludes target facts
    i1 = Instance(f for b in b1 for f in b.facts)
    egds = derived_egds(tgds, i1)
    forest_bags, unifier, n_triggers = _bag_chase_egds(egds, b1)
    forest = BagForest(
        bags=forest_bags,
        unifier=unifier,
        target_bags=b0,
        egds=egds,
        tgds=tgds,
        next_null=nulls.next_id,
        stats={
            "forward_bags": len(b0),
            "inverse_bags": len(b1),
            "derived_bags": len(forest_bags) - len(b1),
            "derived_egds": len(egds),
            "active_triggers": len(b0) + len(b1) + n_triggers,
        },
    )
    return forest


def _bag_chase_egds(egds: Sequence[DerivedEgd], start: List[Bag]) -> Tuple[List[Bag], Dict[Term, Term], int]:
    bags = list(start)
    unifier: Dict[Term, Term] = {}
    by_null: Dict[Null, List[int]] = {}
    idx: Dict[int, Bag] = {}
    unified_cache: Dict[int, Tuple[int, frozenset]] = {}
    version = 0

    def index(b: Bag) -> None:
        idx[b.id] = b
        for f in b.facts:
            for t in f.terms:
                if t[1] == "null":
                    lst = by_null.setdefault(t, [])
                    if not lst or lst[-1] != b.id:
                        lst.append(b.id)

    def unified(b: Bag) -> frozenset:
        hit = unified_cache.get(b.id)
        if hit is not None and hit[0] == version:
            return hit[1]
        s = frozenset(f.substitute(unifier) for f in b.facts)
        unified_cache[b.id] = (version, s)
        return s

    for b in bags:
        index(b)

    n_triggers = 0
    next_id = len(bags) + 1
    current_at = (-1, Instance())
    while True:
        changed = False
        for egd in egds:
            if current_at[0] != version:
                current_at = (version, Instance(f.substitute(unifier) for b in start for f in b.facts))
            current = current_at[1]
            for h in list(find_homomorphisms(egd.body, current)):
                h = {k: unifier.get(v, v) for k, v in h.items()}
                targets = [h[x] for x in egd.equated if h[x] != CRITICAL]
                if not targets:
                    continue
                nu: Dict[Term, Term] = {}
                for v in targets:
                    if v[1] != "null":
                        raise ChaseFailure(f"cannot equate constant {v!r} with *")
                    nu[v] = CRITICAL
                premise = tuple(dict.fromkeys(a.substitute(h) for a in egd.body))
                cand: List[int] = []
                for n in nu:
                    for bid in by_null.get(n, ()):
                        if bid not in cand:
                            cand.append(bid)
                cand.sort()
                relevant = []
                for bid in cand:
                    u = unified(idx[bid])
                    if any(p in u for p in premise) and any(n in u_terms(u) for n in nu):
                        relevant.append(bid)
                new_facts: Dict[Atom, None] = {}
                for bid in relevant:
                    for f in idx[bid].facts:
                        new_facts.setdefault(f.substitute(unifier).substitute(nu), None)
                depth = 1 + max(idx[p].depth for p in relevant) if relevant else 1
                bag = Bag(
                    id=next_id,
                    facts=tuple(new_facts),
                    dependency=egd,
                    trigger=h,
                    premise=premise,
                    predecessors=tuple(relevant),
                    depth=depth,
                    stage="egd",
                )
                next_id += 1
                bags.append(bag)
                index(bag)
                for k in list(unifier):
                    unifier[k] = nu.get(unifier[k], unifier[k])
                unifier.update(nu)
                version += 1
                n_triggers += 1
                changed = True
        if not changed:
            break
    return bags, unifier, n_triggers


def u_terms(facts: Iterable[Atom]) -> set:
    return {t for f in facts for t in f.terms}


# ---------------------------------------------------------------------------
# reference implementation without bags, used as a test oracle


def reference_visible_chase(tgds: Sequence[Tgd], source: Schema) -> Instance:
    """Visible chase computed on plain instances."""
    tgds = list(tgds)
    crt = critical_instance(source)
    nulls = NullFactory(1)
    i0 = chase(crt, tgds, nulls).difference(crt)
    i1 = chase(i0, inverse(tgds), nulls).difference(i0)
    egds = derived_egds(tgds, i1)
    cur = i1
    while True:
        changed = False
        for egd in egds:
            while True:
                h = next(active_triggers(egd, cur), None)
                if h is None:
                    break
                cur = chase_egd_step(cur, egd, h)
                changed = True
        if not changed:
            return cur
