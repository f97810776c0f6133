"""Simulation and evaluation toolkit for fault-tolerant communication over noisy channels."""

from .capacity_bounds import (
    BoundReport,
    Ensemble,
    alpha0,
    coherent_information,
    holevo_capacity_cq,
    holevo_chi,
    max_coherent_information,
)
from .circuit_model import BudgetError, CircuitBuilder, CircuitDiagram, FaultPattern, NoiseModel
from .effective_channel import EffectiveChannelEstimate, distance_to_ideal, extract, extract_exact
from .interfaces import FailureEstimate, build_interface, estimate_failure
from .pauli_core import CqChannel, DenseChannel, DensityOperator, PauliChannel, PauliString, depolarizing
from .stabilizer_sim import FrameProgram, StabilizerTableau, run_tableau
from .steane_concat import ec_circuit, exrec_partition, goodness_model, implement

__all__ = [
    "BoundReport",
    "BudgetError",
    "CircuitBuilder",
    "CircuitDiagram",
    "CqChannel",
    "DenseChannel",
    "DensityOperator",
    "EffectiveChannelEstimate",
    "Ensemble",
    "FailureEstimate",
    "FaultPattern",
    "FrameProgram",
    "NoiseModel",
    "PauliChannel",
    "PauliString",
    "StabilizerTableau",
    "alpha0",
    "build_interface",
    "coherent_information",
    "depolarizing",
    "distance_to_ideal",
    "ec_circuit",
    "estimate_failure",
    "exrec_partition",
    "extract",
    "extract_exact",
    "goodness_model",
    "holevo_capacity_cq",
    "holevo_chi",
    "implement",
    "max_coherent_information",
    "run_tableau",
]
