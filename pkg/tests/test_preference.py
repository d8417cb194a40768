import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, tgd
from maprepair.preference import (
    FIRST,
    PAVG,
    PMAX,
    SECOND,
    ConfusionMatrix,
    FeatureVector,
    Measurement,
    confusion,
    custom,
    dump_measurements,
    evaluate,
    evaluate_measurements,
    features,
    generate_training_set,
    knn_train,
    load_measurements,
    mcc,
    p_avg,
    p_avg_features,
    p_max,
    p_max_features,
    tournament,
)
from maprepair.scenarios import ScenarioConfig, generate, load_scenario

r1 = tgd("R1(x,y,z1), S1(y,z1,z1) -> T1(x).")
r2 = tgd("R1(x,y,z1), S1(y,z2,z) -> T1(x,z).")
r3 = tgd("R1(x,y,z1), S1(y,z,z) -> T1(x,z).")

ROWS = [
    Measurement(FeatureVector(1, -1), SECOND),
    Measurement(FeatureVector(1, 0), SECOND),
    Measurement(FeatureVector(0, 1), SECOND),
]


def test_worked_features():
    assert features(r1, r2) == (1, -1)
    assert features(r1, r3) == (1, 0)
    assert features(r2, r3) == (0, 1)
    assert features(r1, r1) == (0, 0)


def test_p_max_choices():
    assert p_max(r1, r2) == SECOND
    assert p_max(r1, r3) == SECOND
    assert p_max(r2, r3) == SECOND
    assert p_max(r1, r1) == SECOND
    assert p_max(r3, r1) == FIRST


def test_p_avg_choices():
    assert p_avg(r1, r2) == SECOND
    assert p_avg(r1, r3) == SECOND
    assert p_avg_features(FeatureVector(-2, 0)) == FIRST
    assert p_avg_features(FeatureVector(-1, 1)) == SECOND


def test_knn_on_worked_rows():
    m = knn_train(ROWS, 1)
    assert m.predict((1, -1)) == SECOND
    assert all(m.predict(r.features) == r.choice for r in ROWS)


def test_knn_majority_of_three():
    rows = [
        Measurement(FeatureVector(1, -1), FIRST),
        Measurement(FeatureVector(1, 0), SECOND),
        Measurement(FeatureVector(0, 1), FIRST),
    ]
    # distances from the origin: sqrt 2, 1, 1
    assert knn_train(rows, 3).predict((0, 0)) == FIRST
    # the two nearest tie at distance 1; insertion order keeps (1, 0) then (0, 1)
    assert knn_train(rows, 2).predict((0, 0)) == SECOND
    assert knn_train(rows, 1).predict((0, 0)) == SECOND


def test_knn_errors():
    with pytest.raises(ValueError):
        knn_train([], 1)
    with pytest.raises(ValueError):
        knn_train(ROWS, 4)


def test_knn_compares_tgds():
    m = knn_train(ROWS, 1)
    assert m(r1, r2) == SECOND


def test_tournament_worked_example():
    assert tournament([r1, r2, r3], PMAX) is r3
    assert tournament([r1], PMAX) is r1
    for perm in itertools.permutations([r1, r2, r3]):
        assert tournament(list(perm), PMAX) is r3
    with pytest.raises(ValueError):
        tournament([], PMAX)


def test_tournament_tie_is_order_independent():
    a = tgd("R(x,y) -> T(x).")
    b = tgd("R(x,y) -> T(y).")
    assert features(a, b) == (0, 0)
    assert tournament([a, b], PMAX) is tournament([b, a], PMAX)


def test_mcc_values():
    assert mcc(ConfusionMatrix(290, 395577, 1, 42)) == pytest.approx(0.93, abs=0.005)
    assert mcc(ConfusionMatrix(5, 7, 0, 0)) == 1.0
    assert mcc(ConfusionMatrix(0, 0, 5, 7)) == -1.0
    assert mcc(ConfusionMatrix(0, 10, 0, 0)) == 0.0


def test_confusion_orientation():
    # n12: learned chose the first while the second was expected
    cm = confusion([SECOND, FIRST, FIRST], [FIRST, FIRST, SECOND])
    assert (cm.n11, cm.n22, cm.n12, cm.n21) == (1, 0, 1, 1)
    assert cm.total == 3


def test_evaluate_perfect_and_inverted():
    pairs = [(r1, r2), (r2, r1), (r1, r3), (r3, r1)]
    cm, score = evaluate(PMAX, PMAX, pairs)
    assert score == 1.0 and cm.n12 == cm.n21 == 0
    flip = custom(lambda a, b: FIRST if p_max(a, b) == SECOND else SECOND)
    assert evaluate(PMAX, flip, pairs)[1] == -1.0
    with pytest.raises(ValueError):
        evaluate(PMAX, PMAX, [])


def test_evaluate_measurements():
    assert evaluate_measurements(knn_train(ROWS), ROWS)[0].n22 == 3
    with pytest.raises(ValueError):
        evaluate_measurements(custom(p_max), ROWS)


def test_training_set_from_worked_example():
    sc = load_scenario(FIXTURES / "frepair")
    assert generate_training_set([sc], PMAX) == ROWS
    assert generate_training_set([], PMAX) == []


def test_training_set_size_cap():
    scs = [generate(ScenarioConfig(n_dep=20, seed=s)) for s in range(5)]
    full = generate_training_set(scs, PMAX)
    assert len(full) > 5
    assert generate_training_set(scs, PMAX, 5) == full[:5]


def test_csv_round_trip(tmp_path):
    text = dump_measurements(ROWS)
    assert text.splitlines()[0] == "delta_fv,delta_j,choice"
    assert load_measurements(text) == ROWS
    assert load_measurements(dump_measurements([])) == []
    with pytest.raises(ValueError):
        load_measurements("a,b,c\n1,2,1\n")
    with pytest.raises(ValueError):
        load_measurements("delta_fv,delta_j,choice\n1,2,3\n")


small = st.integers(-6, 6)


@given(small, small)
def test_p_max_consistent_under_swap(a, b):
    fv = FeatureVector(a, b)
    swapped = FeatureVector(-a, -b)
    if (a, b) != (0, 0):
        # the same tgd wins from both sides
        assert p_max_features(fv) != p_max_features(swapped)


@given(st.lists(st.tuples(small, small, st.sampled_from([FIRST, SECOND])), min_size=1, max_size=30))
def test_one_nn_has_zero_training_error_on_consistent_data(rows):
    table = {}
    for a, b, c in rows:
        table.setdefault((a, b), c)
    data = [Measurement(FeatureVector(a, b), table[(a, b)]) for a, b, _ in rows]
    m = knn_train(data, 1)
    assert all(m.predict(r.features) == r.choice for r in data)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_mcc_bounded(a, b, c, d):
    v = mcc(ConfusionMatrix(a, b, c, d))
    assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12 and not math.isnan(v)


def test_feature_antisymmetry():
    ts = [r1, r2, r3, tgd("R(x) -> T(x)."), tgd("R(x,x,y), S(y) -> T(y).")]
    for a, b in itertools.product(ts, ts):
        fa, fb = features(a, b), features(b, a)
        assert fa == (-fb[0], -fb[1])


def test_separable_data_gives_perfect_mcc():
    data = [Measurement(FeatureVector(a, b), p_max_features(FeatureVector(a, b)))
            for a in range(-3, 4) for b in range(-3, 4)]
    m = knn_train(data, 1)
    assert evaluate_measurements(m, data)[1] == 1.0
    assert PAVG.on_features is p_avg_features
