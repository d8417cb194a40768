"""Two-phase mapping repair.

The first phase rewrites each tgd on its own until its body maps into the
policy's visible instance with every exported variable on ``*``.  The second
phase walks the bag forest and removes unsafe unifications by hiding
exported variables or breaking body joins.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .chase import Bag, BagForest, flat, visible_chase
from .homomorphism import find_homomorphisms, instance_homomorphism
from .model import (
    CRITICAL,
    Atom,
    Instance,
    Schema,
    Tgd,
    Var,
    atoms_nulls,
    canonical_key,
    drop_hidden_head_positions,
    fresh_var_namer,
    hide_variables,
    parse_dependencies,
    repeated_variables,
    serialize_tgd,
)
from .preference import PreferenceFunction, SECOND, tournament
from .safety import (
    Policy,
    PolicyLike,
    SafetyReport,
    as_policy,
    check_forest,
    raw_unsafe_bags,
    unified_unsafe_bags,
)

log = logging.getLogger(__name__)

CandidateHook = Optional[Callable[[List[Tgd]], None]]

# beyond this many join positions only single-position breaks are tried
MAX_SUBSET_POSITIONS = 10

HIDE_EXPORTED = "HideExported"
MODIFY_BODY = "ModifyBody"
FREPAIR = "BreakJoinHideVar"
DROP_TGD = "DropTgd"


class NoRepair(Exception):
    """No homomorphism into the visible instance exists, so hiding cannot help."""


@dataclass(frozen=True)
class RepairStep:
    kind: str
    tgd: str
    result: Optional[str]
    iteration: int
    phase: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "tgd": self.tgd, "result": self.result,
                "iteration": self.iteration, "phase": self.phase}


def dump_log(steps: Iterable[RepairStep]) -> str:
    return "".join(json.dumps(s.to_json(), sort_keys=True) + "\n" for s in steps)


def load_log(text: str) -> List[RepairStep]:
    out = []
    for line in text.splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(RepairStep(d["kind"], d["tgd"], d["result"], d["iteration"], d["phase"]))
    return out


def replay(tgds: Sequence[Tgd], steps: Iterable[RepairStep]) -> List[Tgd]:
    """Apply a repair log to the original dependencies."""
    sigma = list(tgds)
    for s in steps:
        pos = next(i for i, t in enumerate(sigma) if t.id == s.tgd)
        if s.kind == DROP_TGD:
            del sigma[pos]
        else:
            (t,) = parse_dependencies(s.result)
            sigma[pos] = t.with_id(s.tgd)
    return sigma


@dataclass
class RepairOutcome:
    tgds: List[Tgd]
    log: List[RepairStep]
    report: SafetyReport
    iterations: int = 0
    timings: Dict[str, float] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)

    @property
    def safe(self) -> bool:
        return self.report.safe

    @property
    def empty(self) -> bool:
        """All dependencies were dropped; the result is safe but exposes nothing."""
        return not self.tgds


class _Timer:
    def __init__(self):
        self.t: Dict[str, float] = {"visible_chase": 0.0, "safety_check": 0.0, "repair": 0.0}

    def add(self, phase: str, start: float) -> None:
        self.t[phase] += time.perf_counter() - start


def choose_best(candidates: Sequence[Tgd], prf: PreferenceFunction, on_candidates: CandidateHook = None) -> Tgd:
    """Deduplicate up to renaming, keep generation order, then run the tournament."""
    seen = {}
    for c in candidates:
        seen.setdefault(canonical_key(c), c)
    uniq = list(seen.values())
    if on_candidates is not None:
        on_candidates(uniq)
    return tournament(uniq, prf)


def _same(a: Tgd, b: Tgd) -> bool:
    return a.body == b.body and a.head == b.head


# ---------------------------------------------------------------------------
# first phase


def _fresh_atoms(tgd: Tgd) -> List[Atom]:
    return [Atom(b.relation, tuple(Var(f"_c{i}_{p}") for p in range(b.arity))) for i, b in enumerate(tgd.body)]


def frepair_candidates(tgd: Tgd, vis: Instance) -> Tuple[bool, bool, List[Tgd]]:
    """Returns (some homomorphism exists, tgd already fine, distinct repairs)."""
    cs = _fresh_atoms(tgd)
    front = tgd.frontier
    found = False
    out: Dict[str, Tgd] = {}
    for xi in find_homomorphisms(cs, vis):
        found = True
        fresh = fresh_var_namer(tgd.variables())
        rho: Dict[Var, List[Var]] = {}
        psi: Dict[Var, object] = {}
        body = []
        for b, c in zip(tgd.body, cs):
            terms = []
            for x, y in zip(b.terms, c.terms):
                v = xi[y]
                if (x in front and v != CRITICAL) or (x in psi and psi[x] != v):
                    for x2 in rho.get(x, ()):
                        if psi[x2] == v:
                            terms.append(x2)
                            break
                    else:
                        x2 = fresh()
                        rho.setdefault(x, []).append(x2)
                        psi[x2] = v
                        terms.append(x2)
                else:
                    psi.setdefault(x, v)
                    terms.append(x)
            body.append(Atom(b.relation, tuple(terms)))
        r = drop_hidden_head_positions(tgd, body)
        if _same(r, tgd):
            return True, True, []
        out.setdefault(canonical_key(r), r)
    return found, False, list(out.values())


def frepair(
    tgds: Sequence[Tgd],
    vis: Instance,
    prf: PreferenceFunction,
    *,
    steps: Optional[List[RepairStep]] = None,
    on_candidates: CandidateHook = None,
) -> List[Tgd]:
    """Break joins and hide exported variables until every tgd is partially safe."""
    out = []
    for t in tgds:
        found, fine, cands = frepair_candidates(t, vis)
        if fine:
            out.append(t)
        elif not found:
            log.warning("dropping %s: its body does not map into the visible instance", t.id)
            if steps is not None:
                steps.append(RepairStep(DROP_TGD, t.id, None, 0, "frepair"))
        else:
            best = choose_best(cands, prf, on_candidates)
            out.append(best)
            if steps is not None:
                steps.append(RepairStep(FREPAIR, t.id, serialize_tgd(best), 0, "frepair"))
    return out


# ---------------------------------------------------------------------------
# second phase moves


def hide_exported(
    bag: Bag,
    vis: Instance,
    prf: PreferenceFunction,
    origin: Tgd,
    on_candidates: CandidateHook = None,
) -> Tgd:
    """Hide the exported variables of ``origin`` whose values in ``bag`` cannot stay nulls.

    Returns ``origin`` itself when no variable needs hiding and raises
    :class:`NoRepair` when the premise has no image at all.
    """
    premise = list(bag.premise)
    nu = {n: Var(f"_h{i}") for i, n in enumerate(atoms_nulls(premise), start=1)}
    back = {v: n for n, v in nu.items()}
    pattern = [a.substitute(nu) for a in premise]
    tau = bag.trigger
    front = sorted(origin.frontier)
    found = False
    cands: List[Tgd] = []
    for xi in find_homomorphisms(pattern, vis):
        found = True
        hidden = set()
        for x, n in back.items():
            if xi[x] != CRITICAL:
                hidden.update(y for y in front if tau.get(y) == n)
        if hidden:
            cands.append(hide_variables(origin, hidden))
    if not found:
        raise NoRepair(f"premise of bag {bag.id} has no image in the visible instance")
    if not cands:
        return origin
    return choose_best(cands, prf, on_candidates)


def _position_subsets(positions: List[Tuple[int, int]]) -> Iterable[Tuple[Tuple[int, int], ...]]:
    if len(positions) > MAX_SUBSET_POSITIONS:
        return ((p,) for p in positions)
    return (s for k in range(1, len(positions)) for s in itertools.combinations(positions, k))


def modify_body(
    first: Tgd,
    second: Tgd,
    prf: PreferenceFunction,
    on_candidates: CandidateHook = None,
) -> Optional[Tgd]:
    """Break joins in ``first`` that let the body of ``second`` export a non-exported value.

    Considers every homomorphism from the body of ``second`` into the body
    of ``first`` that sends some exported variable of ``second`` onto a
    non-exported variable of ``first``.
    """
    if not repeated_variables(first.body):
        return None
    target = Instance(first.body)
    index = {a: i for i, a in reversed(list(enumerate(first.body)))}
    cands: List[Tgd] = []
    for xi in find_homomorphisms(second.body, target):
        if not any(xi[x] not in first.frontier for x in second.frontier if x in xi):
            continue
        image = list(dict.fromkeys(a.substitute(xi) for a in second.body))
        rep = set(repeated_variables(image))
        if not rep:
            continue
        positions = [(index[a], p) for a in image for p, t in enumerate(a.terms) if t in rep]
        for subset in _position_subsets(positions):
            fresh = fresh_var_namer(first.variables())
            chosen = set(subset)
            body = [
                Atom(a.relation, tuple(fresh() if (i, p) in chosen else t for p, t in enumerate(a.terms)))
                for i, a in enumerate(first.body)
            ]
            cands.append(drop_hidden_head_positions(first, body))
    if not cands:
        return None
    return choose_best(cands, prf, on_candidates)


# ---------------------------------------------------------------------------
# second phase loop


def modify_body_pairs(forest: BagForest, bag: Bag, lookup: Dict[str, Tgd]) -> List[Tuple[Bag, Bag]]:
    """Pairs (b1, b2) with b1 a depth-1 bag supporting ``bag``, b2 a depth-2 bag
    on the path to ``bag`` with b1 as predecessor, and a repeated variable in
    the body of b1's origin."""
    chain = sorted({bag.id} | forest.ancestors(bag.id))
    supp = forest.support(bag.id)
    out = []
    for b2id in chain:
        b2 = forest.bag(b2id)
        if b2.depth != 2:
            continue
        for b1id in b2.predecessors:
            b1 = forest.bag(b1id)
            if b1id in supp and b1.depth == 1 and repeated_variables(lookup[b1.origin_tgd].body):
                out.append((b1, b2))
    return out


def unsafe_for_repair(forest: BagForest, policy: Policy) -> List[Bag]:
    """Unsafe bags ordered by depth, then id.

    Bags are judged on their facts as created.  If none fails that way but
    the whole instance is unsafe, bags are judged after the final unifier.
    """
    bad = raw_unsafe_bags(forest, policy)
    if not bad and instance_homomorphism(flat(forest), policy.instance) is None:
        bad = unified_unsafe_bags(forest, policy) or list(forest.bags)
    return sorted(bad, key=lambda b: (b.depth, b.id))


def srepair(
    tgds: Sequence[Tgd],
    views: PolicyLike,
    source: Schema,
    prf: PreferenceFunction,
    n: int = 10,
    *,
    steps: Optional[List[RepairStep]] = None,
    on_candidates: CandidateHook = None,
    incremental: bool = True,
    stats: Optional[dict] = None,
    _timer: Optional[_Timer] = None,
) -> List[Tgd]:
    """Repair a partially safe mapping bag by bag until it is safe.

    Runs at most ``n`` rounds that may also break joins; after that, rounds
    only hide exported variables on maximal unsafe bags and drop the origins
    of the others, until nothing unsafe remains.
    """
    if n < 1:
        raise ValueError("n must be positive")
    policy = as_policy(views, source)
    vis = policy.instance
    timer = _timer or _Timer()
    if steps is None:
        steps = []
    sigma = list(tgds)
    t0 = time.perf_counter()
    forest = visible_chase(sigma, source)
    timer.add("visible_chase", t0)
    i = 0
    bags_seen = forest.stats.get("inverse_bags", 0) + forest.stats.get("derived_bags", 0)
    triggers = forest.stats.get("active_triggers", 0)
    while True:
        t0 = time.perf_counter()
        unsafe = unsafe_for_repair(forest, policy)
        timer.add("safety_check", t0)
        if not unsafe:
            break
        t0 = time.perf_counter()
        lookup = {t.id: t for t in sigma}
        if i < n:
            _normal_round(sigma, lookup, forest, unsafe[0], vis, prf, i, steps, on_candidates)
        else:
            _final_round(sigma, lookup, forest, unsafe, vis, prf, i, steps, on_candidates)
        timer.add("repair", t0)
        i += 1
        t0 = time.perf_counter()
        forest = visible_chase(sigma, source, previous=forest if incremental else None)
        timer.add("visible_chase", t0)
        bags_seen += forest.stats.get("inverse_bags", 0) + forest.stats.get("derived_bags", 0)
        triggers += forest.stats.get("active_triggers", 0)
    if stats is not None:
        stats.update(iterations=i, bags=bags_seen, active_triggers=triggers, final_forest=forest)
    return sigma


def _replace(sigma: List[Tgd], tid: str, new: Optional[Tgd]) -> None:
    pos = next(k for k, t in enumerate(sigma) if t.id == tid)
    if new is None:
        del sigma[pos]
    else:
        sigma[pos] = new.with_id(tid)


def _normal_round(sigma, lookup, forest, bag, vis, prf, i, steps, on_candidates) -> None:
    mu = lookup[bag.origin_tgd]
    try:
        r2 = hide_exported(bag, vis, prf, mu, on_candidates)
        if _same(r2, mu):
            r2 = None
    except NoRepair:
        r2 = None
    r1 = None
    r1_target = None
    for b1, b2 in modify_body_pairs(forest, bag, lookup):
        a = lookup[b1.origin_tgd]
        r = modify_body(a, lookup[b2.origin_tgd], prf, on_candidates)
        if r is not None:
            r1, r1_target = r, a
            break
    if r1 is not None and (r2 is None or prf(r1, r2) != SECOND):
        _replace(sigma, r1_target.id, r1)
        steps.append(RepairStep(MODIFY_BODY, r1_target.id, serialize_tgd(r1), i, "srepair"))
    elif r2 is not None:
        _replace(sigma, mu.id, r2)
        steps.append(RepairStep(HIDE_EXPORTED, mu.id, serialize_tgd(r2), i, "srepair"))
    else:
        _replace(sigma, mu.id, None)
        steps.append(RepairStep(DROP_TGD, mu.id, None, i, "srepair"))


def _final_round(sigma, lookup, forest, unsafe, vis, prf, i, steps, on_candidates) -> None:
    drop: Dict[str, None] = {}
    hide: Dict[str, set] = {}
    maximal = []
    for b in unsafe:
        if forest.successors(b.id):
            drop.setdefault(b.origin_tgd, None)
        else:
            maximal.append(b)
    for b in maximal:
        tid = b.origin_tgd
        if tid in drop:
            continue
        mu = lookup[tid]
        try:
            r = hide_exported(b, vis, prf, mu, on_candidates)
        except NoRepair:
            r = mu
        if _same(r, mu):
            drop.setdefault(tid, None)
            hide.pop(tid, None)
            continue
        hide.setdefault(tid, set()).update(mu.frontier - r.frontier)
    for t in list(sigma):
        if t.id in drop:
            _replace(sigma, t.id, None)
            steps.append(RepairStep(DROP_TGD, t.id, None, i, "srepair"))
        elif t.id in hide:
            r = hide_variables(t, hide[t.id])
            _replace(sigma, t.id, r)
            steps.append(RepairStep(HIDE_EXPORTED, t.id, serialize_tgd(r), i, "srepair"))


def repair(
    tgds: Sequence[Tgd],
    views: PolicyLike,
    source: Schema,
    prf: PreferenceFunction,
    n: int = 10,
    *,
    on_candidates: CandidateHook = None,
    incremental: bool = True,
) -> RepairOutcome:
    """First phase, then second phase, then a final safety check."""
    policy = as_policy(views, source)
    timer = _Timer()
    steps: List[RepairStep] = []
    t0 = time.perf_counter()
    vis = policy.instance
    timer.add("visible_chase", t0)
    t0 = time.perf_counter()
    sigma = frepair(tgds, vis, prf, steps=steps, on_candidates=on_candidates)
    timer.add("repair", t0)
    stats: dict = {}
    sigma = srepair(sigma, policy, source, prf, n, steps=steps, on_candidates=on_candidates,
                    incremental=incremental, stats=stats, _timer=timer)
    t0 = time.perf_counter()
    report = check_forest(stats["final_forest"], policy)
    timer.add("safety_check", t0)
    counts = {
        "bags": stats["bags"],
        "active_triggers": stats["active_triggers"],
        "repairs": len(steps),
        "input_tgds": len(tgds),
        "output_tgds": len(sigma),
    }
    return RepairOutcome(sigma, steps, report, stats["iterations"], timer.t, counts)
