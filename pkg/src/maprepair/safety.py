"""Safety and partial safety tests against policy views."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .chase import Bag, BagForest, flat, visible_chase
from .homomorphism import exists_homomorphism, instance_homomorphism
from .model import CRITICAL, Cq, Instance, Schema, Term, Tgd, is_var

SAFE = "Safe"
UNSAFE = "Unsafe"
PARTIALLY_UNSAFE = "PartiallyUnsafe"


@dataclass
class SafetyReport:
    verdict: str
    witness: Optional[Dict[Term, Term]] = None
    unsafe_bags: List[int] = field(default_factory=list)
    offending_tgds: List[str] = field(default_factory=list)

    @property
    def safe(self) -> bool:
        return self.verdict == SAFE

    def __bool__(self) -> bool:
        return self.safe

    def to_json(self) -> dict:
        out: dict = {"verdict": self.verdict}
        if self.witness is not None:
            out["witness"] = {repr(k): repr(v) for k, v in sorted(self.witness.items(), key=lambda kv: repr(kv[0]))}
        out["unsafe_bags"] = list(self.unsafe_bags)
        out["offending_tgds"] = list(self.offending_tgds)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# policies


class Policy:
    """The visible instance of a set of policy views, computed once.

    A policy can also be given directly as an instance, which is handy when
    only the visible instance is known.
    """

    def __init__(self, views: Optional[Sequence[Tgd]] = None, source: Optional[Schema] = None,
                 instance: Optional[Instance] = None):
        if instance is None and (views is None or source is None):
            raise ValueError("a policy needs views and a source schema, or an instance")
        self.views = list(views) if views is not None else None
        self.source = source
        self._instance = instance
        self._forest: Optional[BagForest] = None
        self._cache: Dict[frozenset, bool] = {}

    @property
    def forest(self) -> Optional[BagForest]:
        if self._forest is None and self.views is not None:
            self._forest = visible_chase(self.views, self.source)
        return self._forest

    @property
    def instance(self) -> Instance:
        if self._instance is None:
            self._instance = flat(self.forest)
        return self._instance

    def admits(self, facts) -> bool:
        """True iff ``facts`` map into the visible instance with ``*`` fixed."""
        key = frozenset(facts)
        hit = self._cache.get(key)
        if hit is None:
            hit = instance_homomorphism(key, self.instance) is not None
            self._cache[key] = hit
        return hit


PolicyLike = Union[Policy, Instance, Sequence[Tgd]]


def as_policy(policy: PolicyLike, source: Optional[Schema] = None) -> Policy:
    if isinstance(policy, Policy):
        return policy
    if isinstance(policy, Instance):
        return Policy(instance=policy)
    return Policy(list(policy), source)


# ---------------------------------------------------------------------------
# tests


def partially_safe_tgd(tgd: Tgd, vis: Instance) -> bool:
    fixed = {x: CRITICAL for x in tgd.frontier}
    return exists_homomorphism(tgd.body, vis, fixed)


def is_partially_safe(tgds: Sequence[Tgd], vis: Union[Instance, Policy]) -> SafetyReport:
    """Every body maps into ``vis`` with all exported variables sent to ``*``."""
    if isinstance(vis, Policy):
        vis = vis.instance
    bad = [t.id for t in tgds if not partially_safe_tgd(t, vis)]
    if bad:
        return SafetyReport(PARTIALLY_UNSAFE, offending_tgds=bad)
    return SafetyReport(SAFE, witness={})


def raw_unsafe_bags(forest: BagForest, policy: Policy) -> List[Bag]:
    """Bags whose facts, as created, do not map into the visible instance."""
    return [b for b in forest.bags if not policy.admits(b.facts)]


def unified_unsafe_bags(forest: BagForest, policy: Policy) -> List[Bag]:
    """Bags whose facts, after the final unifier, do not map into the visible instance."""
    return [b for b in forest.bags if not policy.admits(forest.unified_facts(b))]


def check_forest(forest: BagForest, policy: Policy) -> SafetyReport:
    vis = policy.instance
    witness = instance_homomorphism(flat(forest), vis)
    if witness is not None:
        return SafetyReport(SAFE, witness=witness)
    bad = unified_unsafe_bags(forest, policy)
    offending = list(dict.fromkeys(b.origin_tgd for b in bad))
    return SafetyReport(UNSAFE, unsafe_bags=[b.id for b in bad], offending_tgds=offending)


def is_safe(tgds: Sequence[Tgd], views: PolicyLike, source: Schema,
            forest: Optional[BagForest] = None) -> SafetyReport:
    """``*``-preserving homomorphism from the visible instance of ``tgds`` into that of the policy."""
    policy = as_policy(views, source)
    if forest is None:
        forest = visible_chase(list(tgds), source)
    return check_forest(forest, policy)


def is_disclosed(query: Cq, tgds: Sequence[Tgd], source: Schema) -> bool:
    """True iff the all-``*`` tuple answers ``query`` on the visible instance of ``tgds``."""
    if query.has_constants():
        raise ValueError("disclosure is only decided for constants-free queries")
    vis = flat(visible_chase(list(tgds), source))
    fixed = {x: CRITICAL for x in query.free}
    return exists_homomorphism(query.atoms, vis, fixed)
