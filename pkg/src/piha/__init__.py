"""Reachability and safety checking for polyhedral-invariant hybrid automata.

Modes carry affine dynamics ``dx/dt = A x + b`` and polytope invariants.
The package simulates such automata, builds flow-pipe over-approximations
of their reachable states, and checks avoid-region safety properties with
refinement of the initial set.  A full-wave rectifier model is built in.
"""
from .checker import (FAIL, INCONCLUSIVE, PASS, PointReport, RefineConfig, VerificationResult,
                      check_trace_safety, explore, refine_ics, verify_safety)
from .flowpipe import FlowpipeSegment, ReachConfig, flowpipe_mode_segments, reach_sets
from .fwr import CircuitParams, build_fwr_dynamics, build_fwr_piha, fwr_mode_of, fwr_properties
from .geometry import Polytope
from .model import PIHA, AffineDynamics, Mode, ModelError, SafetySpec, Transition, validate_piha
from .modelfile import ModelFileError, load_model_file, parse_model_file, serialize
from .sim import HybridTrace, IntegratorConfig, ingest_external_trace, simulate_hybrid

__version__ = "0.1.0"

__all__ = [
    "PASS", "FAIL", "INCONCLUSIVE",
    "Polytope", "AffineDynamics", "Mode", "Transition", "PIHA", "SafetySpec", "ModelError", "validate_piha",
    "IntegratorConfig", "HybridTrace", "simulate_hybrid", "ingest_external_trace",
    "ReachConfig", "FlowpipeSegment", "flowpipe_mode_segments", "reach_sets",
    "RefineConfig", "VerificationResult", "PointReport", "check_trace_safety", "explore", "refine_ics",
    "verify_safety",
    "CircuitParams", "build_fwr_dynamics", "build_fwr_piha", "fwr_mode_of", "fwr_properties",
    "ModelFileError", "parse_model_file", "load_model_file", "serialize",
]
