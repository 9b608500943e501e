"""Surface-code memory simulations with atom-loss detection units and a
loss-aware matching decoder."""

__version__ = "0.1.0"

from .builder import (
    ExperimentPlan,
    MemoryExperimentSpec,
    build_memory_circuit,
    erase_for_loss,
    memory_spec,
)
from .circuit import Circuit, DetectorDef, Instruction, ObservableDef, validate_circuit
from .decoder import LossAwareDecoder, NaiveDecoder, ShotData, conditional_probabilities
from .dem import DetectorErrorModel, MatchingGraph, build_base_dem, dem_from_text, dem_to_text
from .engine import Tableau, run_shot
from .harness import ExperimentConfig, ExperimentRecord, per_round_error, run_shots, sweep
from .layout import Layout, build_layout
from .noise import (
    LossPattern,
    LossSampler,
    effective_depol_stand,
    effective_depol_tel,
    flip_probability,
    stabilizer_loss_distribution,
    standard_ldu_loss_distribution,
)

__all__ = [
    "Circuit",
    "DetectorDef",
    "DetectorErrorModel",
    "ExperimentConfig",
    "ExperimentPlan",
    "ExperimentRecord",
    "Instruction",
    "Layout",
    "LossAwareDecoder",
    "LossPattern",
    "LossSampler",
    "MatchingGraph",
    "MemoryExperimentSpec",
    "NaiveDecoder",
    "ObservableDef",
    "ShotData",
    "Tableau",
    "build_base_dem",
    "build_layout",
    "build_memory_circuit",
    "conditional_probabilities",
    "dem_from_text",
    "dem_to_text",
    "effective_depol_stand",
    "effective_depol_tel",
    "erase_for_loss",
    "flip_probability",
    "memory_spec",
    "per_round_error",
    "run_shot",
    "run_shots",
    "stabilizer_loss_distribution",
    "standard_ldu_loss_distribution",
    "sweep",
    "validate_circuit",
]
