"""Backtracking homomorphism search.

Pattern terms that are variables are always mappable.  Labeled nulls in the
pattern are mappable only with ``map_nulls=True`` (instance-to-instance
mode); constants, including ``*``, always map to themselves.
"""

from __future__ import annotations

from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .model import Atom, DerivedEgd, Instance, Term, Tgd, CRITICAL

INDEX_THRESHOLD = 64

Target = Union[Instance, Iterable[Atom]]


def _as_instance(target: Target) -> Instance:
    return target if isinstance(target, Instance) else Instance(target)


class _Search:
    __slots__ = ("atoms", "target", "mappable", "binding", "injective", "used", "use_index", "facts")

    def __init__(self, atoms, target: Instance, fixed, map_nulls: bool, injective: bool):
        self.atoms = atoms
        self.target = target
        kinds = ("var", "null") if map_nulls else ("var",)
        self.mappable = kinds
        self.binding: Dict[Term, Term] = dict(fixed) if fixed else {}
        self.injective = injective
        self.used: Set[Term] = set(self.binding.values()) if injective else set()
        self.use_index = len(target) > INDEX_THRESHOLD
        self.facts = target.as_set()

    def _estimate(self, a: Atom) -> Tuple[int, int]:
        b = self.binding
        mappable = self.mappable
        unbound = 0
        best = None
        for i, t in enumerate(a.terms):
            if t[1] in mappable:
                v = b.get(t)
                if v is None:
                    unbound += 1
                    continue
            else:
                v = t
            if self.use_index:
                n = len(self.target.position_index().get((a.relation, i, v), ()))
                if best is None or n < best:
                    best = n
        if best is None:
            best = len(self.target.relation(a.relation))
        return unbound, best

    def _candidates(self, a: Atom) -> Sequence[Atom]:
        if not self.use_index:
            return self.target.relation(a.relation)
        b = self.binding
        mappable = self.mappable
        idx = self.target.position_index()
        best: Optional[Sequence[Atom]] = None
        for i, t in enumerate(a.terms):
            if t[1] in mappable:
                v = b.get(t)
                if v is None:
                    continue
            else:
                v = t
            lst = idx.get((a.relation, i, v), ())
            if best is None or len(lst) < len(best):
                best = lst
                if not lst:
                    break
        return self.target.relation(a.relation) if best is None else best

    def _image(self, a: Atom) -> Optional[Atom]:
        b = self.binding
        mappable = self.mappable
        out = []
        for t in a.terms:
            if t[1] in mappable:
                v = b.get(t)
                if v is None:
                    return None
                out.append(v)
            else:
                out.append(t)
        return Atom(a.relation, tuple(out))

    def _match(self, a: Atom, f: Atom) -> Optional[List[Term]]:
        """Bind ``a`` onto ``f``; returns the newly bound keys or None."""
        if len(a.terms) != len(f.terms):
            return None
        b = self.binding
        mappable = self.mappable
        new: List[Term] = []
        for t, v in zip(a.terms, f.terms):
            if t[1] in mappable:
                cur = b.get(t)
                if cur is None:
                    if self.injective and v in self.used:
                        break
                    b[t] = v
                    new.append(t)
                    if self.injective:
                        self.used.add(v)
                elif cur != v:
                    break
            elif t != v:
                break
        else:
            return new
        self._undo(new)
        return None

    def _undo(self, keys: List[Term]) -> None:
        b = self.binding
        for k in keys:
            v = b.pop(k)
            if self.injective:
                self.used.discard(v)

    def run(self, remaining: List[Atom]) -> Iterator[Dict[Term, Term]]:
        if not remaining:
            yield dict(self.binding)
            return
        # most constrained first
        if len(remaining) == 1:
            pick = 0
        else:
            pick = min(range(len(remaining)), key=lambda j: self._estimate(remaining[j]))
        a = remaining[pick]
        rest = remaining[:pick] + remaining[pick + 1:]
        img = self._image(a)
        if img is not None:
            if img in self.facts:
                yield from self.run(rest)
            return
        for f in self._candidates(a):
            new = self._match(a, f)
            if new is None:
                continue
            yield from self.run(rest)
            self._undo(new)


def find_homomorphisms(
    pattern: Iterable[Atom],
    target: Target,
    fixed: Optional[Mapping[Term, Term]] = None,
    *,
    map_nulls: bool = False,
    injective: bool = False,
) -> Iterator[Dict[Term, Term]]:
    """Lazily enumerate every extension of ``fixed`` mapping ``pattern`` into ``target``.

    Each result is a fresh dict holding ``fixed`` plus the bindings of every
    mappable pattern term.  Results come in a deterministic order and are
    pairwise distinct.
    """
    atoms = list(dict.fromkeys(pattern))
    search = _Search(atoms, _as_instance(target), fixed, map_nulls, injective)
    return search.run(atoms)


def exists_homomorphism(
    pattern: Iterable[Atom],
    target: Target,
    fixed: Optional[Mapping[Term, Term]] = None,
    *,
    map_nulls: bool = False,
) -> bool:
    return next(find_homomorphisms(pattern, target, fixed, map_nulls=map_nulls), None) is not None


def is_homomorphism(h: Mapping[Term, Term], source: Iterable[Atom], target: Target) -> bool:
    """Check that ``h`` maps every fact of ``source`` to a fact of ``target``."""
    tgt = _as_instance(target)
    return all(a.substitute(h) in tgt for a in source)


def null_components(facts: Iterable[Atom]) -> List[List[Atom]]:
    """Split facts into groups connected through shared labeled nulls.

    Null-free facts each form their own group.  Groups are ordered by their
    first fact.
    """
    facts = list(dict.fromkeys(facts))
    parent: Dict[Term, Term] = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for f in facts:
        ns = [t for t in f.terms if t[1] == "null"]
        for n in ns:
            parent.setdefault(n, n)
        for n in ns[1:]:
            ra, rb = find(ns[0]), find(n)
            if ra != rb:
                parent[rb] = ra
    groups: Dict[object, List[Atom]] = {}
    for i, f in enumerate(facts):
        ns = [t for t in f.terms if t[1] == "null"]
        key = find(ns[0]) if ns else ("ground", i)
        groups.setdefault(key, []).append(f)
    return list(groups.values())


def instance_homomorphism(source: Iterable[Atom], target: Target) -> Optional[Dict[Term, Term]]:
    """A ``*``-preserving homomorphism from ``source`` into ``target``, or None.

    Nulls of ``source`` are mappable; every constant maps to itself.  The
    search runs per null-connected component, which keeps it cheap when the
    source splits into many small pieces.
    """
    tgt = _as_instance(target)
    witness: Dict[Term, Term] = {}
    for comp in null_components(source):
        if len(comp) == 1 and not any(t[1] == "null" for t in comp[0].terms):
            if comp[0] not in tgt:
                return None
            continue
        h = next(find_homomorphisms(comp, tgt, map_nulls=True), None)
        if h is None:
            return None
        witness.update(h)
    return witness


def is_isomorphic(a: Iterable[Atom], b: Iterable[Atom]) -> bool:
    """Equal up to a bijective renaming of labeled nulls."""
    a = Instance(a)
    b = Instance(b)
    if len(a) != len(b):
        return False
    if sorted(f.relation for f in a) != sorted(f.relation for f in b):
        return False
    if len(a.nulls()) != len(b.nulls()):
        return False
    h = next(find_homomorphisms(a, b, map_nulls=True, injective=True), None)
    return h is not None


def homomorphically_equivalent(a: Iterable[Atom], b: Iterable[Atom]) -> bool:
    a = list(a)
    b = list(b)
    return instance_homomorphism(a, b) is not None and instance_homomorphism(b, a) is not None


def active_triggers(dep: Union[Tgd, DerivedEgd], inst: Target) -> Iterator[Dict[Term, Term]]:
    """Triggers of ``dep`` on ``inst`` whose chase step would change it."""
    inst = _as_instance(inst)
    if isinstance(dep, Tgd):
        for h in find_homomorphisms(dep.body, inst):
            if not exists_homomorphism(dep.head, inst, h):
                yield h
    elif isinstance(dep, DerivedEgd):
        for h in find_homomorphisms(dep.body, inst):
            if any(h[x] != CRITICAL for x in dep.equated):
                yield h
    else:
        # general egd
        for h in find_homomorphisms(dep.body, inst):
            if h[dep.left] != h[dep.right]:
                yield h
