"""Pairwise repair preferences: features, golden functions, k-NN, evaluation.

Features are oriented ``second - first``; both golden functions fall back
to the second repair when nothing separates the two.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .model import Tgd, canonical_key, join_count


class Choice(IntEnum):
    FIRST = 1
    SECOND = 2


FIRST = Choice.FIRST
SECOND = Choice.SECOND


class FeatureVector(NamedTuple):
    delta_fv: int
    delta_j: int


class Measurement(NamedTuple):
    features: FeatureVector
    choice: Choice


def exported_count(t: Tgd) -> int:
    return len(t.frontier)


def features(first: Tgd, second: Tgd) -> FeatureVector:
    return FeatureVector(
        exported_count(second) - exported_count(first),
        join_count(second) - join_count(first),
    )


def p_max_features(fv: FeatureVector) -> Choice:
    if fv.delta_fv < 0:
        return FIRST
    if fv.delta_fv > 0:
        return SECOND
    return FIRST if fv.delta_j < 0 else SECOND


def p_avg_features(fv: FeatureVector) -> Choice:
    # (a + b) / 2 < 0 exactly when a + b < 0
    return FIRST if fv.delta_fv + fv.delta_j < 0 else SECOND


def p_max(first: Tgd, second: Tgd) -> Choice:
    """Keep as many exported variables as possible, then as many joins."""
    return p_max_features(features(first, second))


def p_avg(first: Tgd, second: Tgd) -> Choice:
    """Choose the first repair iff the mean feature difference is negative."""
    return p_avg_features(features(first, second))


class PreferenceFunction:
    """A named, total chooser between two repairs."""

    def __init__(self, kind: str, compare: Callable[[Tgd, Tgd], Choice],
                 on_features: Optional[Callable[[FeatureVector], Choice]] = None):
        self.kind = kind
        self._compare = compare
        self.on_features = on_features

    def __call__(self, first: Tgd, second: Tgd) -> Choice:
        return Choice(self._compare(first, second))

    def __repr__(self) -> str:
        return f"PreferenceFunction({self.kind!r})"


PMAX = PreferenceFunction("max", p_max, p_max_features)
PAVG = PreferenceFunction("avg", p_avg, p_avg_features)


def custom(compare: Callable[[Tgd, Tgd], Choice], name: str = "custom") -> PreferenceFunction:
    return PreferenceFunction(name, compare)


def prefer_first() -> PreferenceFunction:
    """Always picks the first argument; with srepair this favours body modification."""
    return custom(lambda a, b: FIRST, "first")


def prefer_second() -> PreferenceFunction:
    return custom(lambda a, b: SECOND, "second")


# ---------------------------------------------------------------------------
# k-NN


class KnnModel(PreferenceFunction):
    """Instance-based classifier over feature vectors (Euclidean distance).

    Distance ties are broken by insertion order; a tie in the vote goes to
    the second repair.
    """

    def __init__(self, data: Sequence[Measurement], k: int = 1):
        if not data:
            raise ValueError("k-NN needs at least one measurement")
        if not 1 <= k <= len(data):
            raise ValueError(f"k must be in [1, {len(data)}], got {k}")
        self.data = list(data)
        self.k = k
        self._x = np.array([[m.features.delta_fv, m.features.delta_j] for m in data], dtype=float)
        self._y = np.array([int(m.choice) for m in data], dtype=np.int8)
        self._memo: Dict[Tuple[int, int], Choice] = {}
        super().__init__(f"knn(k={k})", self._compare_tgds, self.predict)

    def _compare_tgds(self, first: Tgd, second: Tgd) -> Choice:
        return self.predict(features(first, second))

    def predict(self, fv: Sequence[int]) -> Choice:
        key = (int(fv[0]), int(fv[1]))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        d = np.hypot(self._x[:, 0] - key[0], self._x[:, 1] - key[1])
        # stable sort keeps insertion order among equal distances
        nearest = np.argsort(d, kind="stable")[: self.k]
        votes = self._y[nearest]
        first = int(np.count_nonzero(votes == int(FIRST)))
        out = FIRST if first > len(votes) - first else SECOND
        self._memo[key] = out
        return out


def knn_train(data: Sequence[Measurement], k: int = 1) -> KnnModel:
    return KnnModel(data, k)


# ---------------------------------------------------------------------------
# choosing among candidates


def tournament(candidates: Sequence[Tgd], prf: PreferenceFunction) -> Tgd:
    """Left fold: the winner of each comparison meets the next candidate.

    Pairs with identical features are settled by the lexicographically
    smaller canonical form, so the result does not depend on the prf there.
    """
    if not candidates:
        raise ValueError("tournament needs at least one candidate")
    best = candidates[0]
    for c in candidates[1:]:
        if features(best, c) == (0, 0):
            best = min(best, c, key=canonical_key)
        elif prf(best, c) == SECOND:
            best = c
    return best


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class ConfusionMatrix:
    """``nij``: the learned function chose ``i`` while the golden one chose ``j``."""

    n11: int = 0
    n22: int = 0
    n12: int = 0
    n21: int = 0

    @property
    def total(self) -> int:
        return self.n11 + self.n22 + self.n12 + self.n21

    def to_json(self) -> dict:
        return {"n11": self.n11, "n22": self.n22, "n12": self.n12, "n21": self.n21, "mcc": mcc(self)}


def mcc(cm: ConfusionMatrix) -> float:
    num = cm.n11 * cm.n22 - cm.n12 * cm.n21
    den = (cm.n11 + cm.n12) * (cm.n11 + cm.n21) * (cm.n22 + cm.n12) * (cm.n22 + cm.n21)
    if den == 0:
        return 0.0
    return num / math.sqrt(den)


def confusion(golden: Iterable[Choice], predicted: Iterable[Choice]) -> ConfusionMatrix:
    counts = {(1, 1): 0, (2, 2): 0, (1, 2): 0, (2, 1): 0}
    for g, p in zip(golden, predicted):
        counts[(int(p), int(g))] += 1
    return ConfusionMatrix(counts[(1, 1)], counts[(2, 2)], counts[(1, 2)], counts[(2, 1)])


def evaluate(golden: PreferenceFunction, learned: PreferenceFunction,
             pairs: Sequence[Tuple[Tgd, Tgd]]) -> Tuple[ConfusionMatrix, float]:
    if not pairs:
        raise ValueError("evaluation needs at least one pair")
    g = [golden(a, b) for a, b in pairs]
    p = [learned(a, b) for a, b in pairs]
    cm = confusion(g, p)
    return cm, mcc(cm)


def evaluate_measurements(learned: PreferenceFunction, data: Sequence[Measurement]) -> Tuple[ConfusionMatrix, float]:
    """Score a feature-level predictor against labelled measurements."""
    if not data:
        raise ValueError("evaluation needs at least one measurement")
    if learned.on_features is None:
        raise ValueError(f"{learned!r} cannot predict from features alone")
    cm = confusion((m.choice for m in data), (learned.on_features(m.features) for m in data))
    return cm, mcc(cm)


# ---------------------------------------------------------------------------
# training data


def candidate_pairs(candidate_sets: Iterable[Sequence[Tgd]]) -> List[Tuple[Tgd, Tgd]]:
    """Every pair ``(c_i, c_j)`` with ``i < j`` of every candidate set."""
    out = []
    for cs in candidate_sets:
        for i in range(len(cs)):
            for j in range(i + 1, len(cs)):
                out.append((cs[i], cs[j]))
    return out


def measure(pairs: Iterable[Tuple[Tgd, Tgd]], golden: PreferenceFunction) -> List[Measurement]:
    return [Measurement(features(a, b), golden(a, b)) for a, b in pairs]


def generate_training_set(scenarios: Iterable, golden: PreferenceFunction,
                          size: Optional[int] = None) -> List[Measurement]:
    """Run the repair pipeline on each scenario and label every candidate pair.

    ``scenarios`` holds :class:`~maprepair.scenarios.Scenario` objects.
    Stops once ``size`` measurements are collected (all of them if None).
    """
    from .repair import repair  # circular at import time

    out: List[Measurement] = []
    for sc in scenarios:
        sets: List[List[Tgd]] = []
        repair(sc.tgds, sc.policy(), sc.source, golden, on_candidates=sets.append)
        out.extend(measure(candidate_pairs(sets), golden))
        if size is not None and len(out) >= size:
            return out[:size]
    return out


CSV_HEADER = ["delta_fv", "delta_j", "choice"]


def dump_measurements(data: Iterable[Measurement]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for m in data:
        w.writerow([m.features.delta_fv, m.features.delta_j, int(m.choice)])
    return buf.getvalue()


def load_measurements(text: str) -> List[Measurement]:
    r = csv.DictReader(io.StringIO(text))
    if r.fieldnames != CSV_HEADER:
        raise ValueError(f"expected header {','.join(CSV_HEADER)}, got {r.fieldnames}")
    out = []
    for row in r:
        choice = int(row["choice"])
        if choice not in (1, 2):
            raise ValueError(f"choice must be 1 or 2, got {choice}")
        out.append(Measurement(FeatureVector(int(row["delta_fv"]), int(row["delta_j"])), Choice(choice)))
    return out
