import pytest

from conftest import tgd
from maprepair.chase import (
    BagForest,
    ChaseFailure,
    NotActive,
    chase,
    chase_egd_step,
    chase_tgd_step,
    derived_egds,
    flat,
    reference_visible_chase,
    visible_chase,
)
from maprepair.homomorphism import active_triggers, homomorphically_equivalent, is_isomorphic
from maprepair.model import (
    CRITICAL,
    Atom,
    Const,
    Egd,
    Instance,
    Null,
    NullFactory,
    Var,
    atom,
    critical_instance,
    parse_instance,
)
from maprepair.scenarios import ScenarioConfig, generate

I1 = """
P(_n1, _n2, *, _n3). HN(_n1, *). P(_n4, _n5, _n6, *). HS(_n4, *).
O(_n7, *, *). S(_n8, _n9, *, _n10).
"""

# the final instance of the worked example, with the P fact that pairs with
# the second HN fact restored
EQ6 = """
P(_n1, _n2, *, *). HN(_n1, *). P(_n4, _n5, *, *). HN(_n4, *).
S(_n7, _n8, *, _n9). O(_n7, _n10, _n11).
"""

EQ6_LITERAL = """
P(_n1, _n2, *, *). HN(_n1, *). HN(_n4, *).
S(_n7, _n8, *, _n9). O(_n7, _n10, _n11).
"""


def test_tgd_step_with_existential():
    t = tgd("T(x) -> R(x, y).")
    out = chase_tgd_step(parse_instance("T(*)."), t, {Var("x"): CRITICAL}, NullFactory())
    assert out == Instance([atom("T", "*"), Atom("R", (CRITICAL, Null(1)))])


def test_tgd_step_rejects_inactive_trigger():
    t = tgd("T(x) -> R(x).")
    with pytest.raises(NotActive):
        chase_tgd_step(parse_instance("T(*). R(*)."), t, {Var("x"): CRITICAL})


def test_first_view_step_on_critical_instance(running):
    crt = critical_instance(running["source"])
    v1 = running["views"][0]
    out = chase_tgd_step(crt, v1, {v: CRITICAL for v in v1.body_variables})
    assert set(out) - set(crt) == {atom("V1", "*", "*")}


def test_egd_step_replaces_null_everywhere(running):
    inst = parse_instance("P(_n1, _n2, _n3, *). HN(_n1, *). S(_n9, _n3, *, *).")
    (eps,) = [e for e in derived_egds(running["tgds"][:1], inst)]
    h = next(active_triggers(eps, inst))
    out = chase_egd_step(inst, eps, h)
    assert Null(3) not in out.nulls()
    assert atom("S", Null(9), "*", "*", "*") in out


def test_egd_step_errors():
    eg = Egd((atom("R", "x", "y"),), Var("x"), Var("y"))
    same = parse_instance("R(_n1, _n1).")
    with pytest.raises(NotActive):
        chase_egd_step(same, eg, {Var("x"): Null(1), Var("y"): Null(1)})
    clash = parse_instance("R(a, b).")
    with pytest.raises(ChaseFailure):
        chase_egd_step(clash, eg, {Var("x"): Const("a"), Var("y"): Const("b")})


def test_chase_of_critical_instance(running):
    crt = critical_instance(running["source"])
    out = chase(crt, running["tgds"])
    assert set(out) - set(crt) == {atom("EthDis", "*", "*"), atom("CountyDis", "*", "*"), atom("SO", "*")}


def test_chase_trivial_cases(running):
    crt = critical_instance(running["source"])
    assert chase(crt, []) == crt
    assert chase(Instance(), running["tgds"]) == Instance()


def test_derived_egds_for_the_mapping(running):
    i1 = Instance(f for b in visible_chase(running["tgds"], running["source"]).bags[:3] for f in b.facts)
    egds = derived_egds(running["tgds"], i1)
    assert [(e.origin, sorted(v.name for v in e.equated)) for e in egds] == [("mu_e", ["e"]), ("mu_c", ["c"])]
    assert all(e.body == running["tgds"][0].body for e in egds)


def test_no_derived_egds_for_the_views(running):
    forest = visible_chase(running["views"], running["source"])
    assert derived_egds(running["views"], flat(forest)) == []
    assert derived_egds(running["tgds"], critical_instance(running["source"])) == []


def test_views_visible_instance(running):
    forest = visible_chase(running["views"], running["source"])
    assert len(flat(forest)) == 6
    assert is_isomorphic(flat(forest), parse_instance(I1))


def test_mapping_bags_and_flat_instance(running):
    forest = visible_chase(running["tgds"], running["source"])
    origins = {b.id: b.origin for b in forest.bags}
    assert sorted(origins.values()) == sorted(["inv(mu_s)", "inv(mu_c)", "inv(mu_e)", "eq(mu_e:e)", "eq(mu_c:c)"])
    by_origin = {b.origin: b for b in forest.bags}
    assert by_origin["eq(mu_e:e)"].predecessors == (by_origin["inv(mu_c)"].id,)
    assert by_origin["eq(mu_c:c)"].predecessors == (by_origin["inv(mu_e)"].id,)
    assert {b.depth for b in forest.bags if b.stage == "inverse"} == {1}
    assert {b.depth for b in forest.bags if b.stage == "egd"} == {2}
    fl = flat(forest)
    assert is_isomorphic(fl, parse_instance(EQ6))
    assert homomorphically_equivalent(fl, parse_instance(EQ6_LITERAL))


def test_single_copy_tgd_forest():
    from maprepair.model import Schema
    s = Schema([("R", 1)])
    forest = visible_chase([tgd("R(x) -> T(x).")], s)
    assert len(forest.target_bags) == 1 and len(forest.bags) == 1
    assert forest.egds == [] and forest.unifier == {}


def test_flat_of_empty_forest():
    assert len(flat(BagForest([], {}))) == 0


def test_forest_recurrences(running):
    forest = visible_chase(running["tgds"], running["source"])
    for b in forest.bags:
        if b.predecessors:
            assert b.depth == 1 + max(forest.bag(p).depth for p in b.predecessors)
            support = frozenset().union(*(forest.support(p) for p in b.predecessors))
            assert forest.support(b.id) == support
            pred_facts = {f for p in b.predecessors for f in forest.bag(p).facts}
            assert set(b.premise) <= pred_facts
        else:
            assert b.depth == 1 and forest.support(b.id) == {b.id}


def test_dot_output(running):
    dot = visible_chase(running["tgds"], running["source"]).to_dot()
    assert dot.startswith("digraph") and "->" in dot


def _small_scenarios():
    for seed in range(60):
        sc = generate(ScenarioConfig(n_dep=6, n_atoms=3, n_vars=3, seed=seed))
        yield sc


def test_reference_chase_agrees_on_generated_scenarios():
    checked = 0
    for sc in _small_scenarios():
        for sigma in (sc.tgds, sc.views):
            fl = flat(visible_chase(sigma, sc.source))
            if len(fl) > 30:
                continue
            ref = reference_visible_chase(sigma, sc.source)
            assert is_isomorphic(fl, ref), sc.config
            checked += 1
    assert checked >= 30


def test_incremental_forest_matches_full_recompute():
    for sc in list(_small_scenarios())[:20]:
        first = visible_chase(sc.tgds, sc.source)
        changed = sc.tgds[1:]
        inc = visible_chase(changed, sc.source, previous=first)
        full = visible_chase(changed, sc.source)
        assert is_isomorphic(flat(inc), flat(full))
        assert [b.origin for b in inc.bags] == [b.origin for b in full.bags]
        assert [b.predecessors for b in inc.bags] == [b.predecessors for b in full.bags]
