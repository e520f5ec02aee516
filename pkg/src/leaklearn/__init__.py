"""Black-box model learning and noninterference checking for enclave
devices: learn attacker-facing Mealy models, compare them per secret modulo
silent observables, and synthesize replayable attack programs from the
differences."""

from .actions import Action, Observable
from .checker import Verdict, WitnessGraph, build_witness_graph, check_prni, check_rni
from .learner import Learner, learn_machine
from .mealy import MealyMachine, SilentSet, project, weak_equiv
from .pac import PacConfig, PacOracle, sample_count, sample_trace
from .speclang import AttackerSpec, TrustedSpec, parse_spec
from .sul import CachedSul, SpecDriver, SpecTeacher
from .synth import AttackProgram, replay, synthesize
from .toysim import ObservationProfile, ToyEnclaveSim, VersionFlags

__all__ = [
    "Action", "Observable", "MealyMachine", "SilentSet", "project",
    "weak_equiv", "AttackerSpec", "TrustedSpec", "parse_spec",
    "ToyEnclaveSim", "VersionFlags", "ObservationProfile", "CachedSul",
    "SpecDriver", "SpecTeacher", "Learner", "learn_machine", "PacConfig",
    "PacOracle", "sample_count", "sample_trace", "check_rni", "check_prni",
    "build_witness_graph", "WitnessGraph", "Verdict", "AttackProgram",
    "synthesize", "replay",
]

__version__ = "0.1.0"
