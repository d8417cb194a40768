"""Safety checking and repair of source-to-target tgds against policy views."""

from .chase import Bag, BagForest, chase, derived_egds, flat, visible_chase
from .homomorphism import exists_homomorphism, find_homomorphisms, is_isomorphic
from .model import (
    CRITICAL,
    Atom,
    Const,
    Cq,
    DerivedEgd,
    Instance,
    Null,
    ParseError,
    Schema,
    Tgd,
    Var,
    critical_instance,
    inverse,
    join_count,
    parse_dependencies,
    parse_instance,
    parse_schema,
    serialize_dependencies,
    serialize_labeled,
)
from .preference import PAVG, PMAX, ConfusionMatrix, evaluate, features, knn_train, mcc, p_avg, p_max, tournament
from .repair import RepairOutcome, frepair, hide_exported, modify_body, repair, srepair
from .safety import Policy, SafetyReport, is_disclosed, is_partially_safe, is_safe
from .scenarios import Scenario, ScenarioConfig, generate, load_scenario

__version__ = "0.1.0"
