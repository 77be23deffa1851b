"""Nested Mach-Zehnder interferometer: simulation, histories and weak values."""

from __future__ import annotations

from . import errors
from .coincidences import (
    CoincidenceTable,
    RunRecord,
    aggregate_coincidences,
    coincidence_table,
    sample_runs,
)
from .evolution import (
    Experiment,
    JointState,
    OutcomeDistribution,
    conditional_given_probe,
    detector_distribution,
    evolve,
    joint_outcome_distribution,
)
from .histories import (
    DecoherenceMatrix,
    Framework,
    ProjectorExpr,
    Query,
    chain_ket,
    check_consistency,
    conditional_distribution,
    decoherence_matrix,
    inference_guard,
    parse_framework,
    projector_of,
    refine_frameworks,
)
from .interferometer import (
    InterferometerSpec,
    compile_stages,
    default_nested_mzi,
    format_itf,
    parse_itf,
    validate_unitarity,
)
from .probes import JointSpace, ProbeRegister, ProbeSpec, assemble_joint_space, coupling_unitary
from .scan import ScanSpec, parse_axis, scan
from .weaktrace import (
    backward_state,
    bridge_ratio,
    compare_ch_weaktrace,
    forward_state,
    weak_trace_table,
    weak_value,
)

__version__ = "0.1.0"

__all__ = [
    "CoincidenceTable",
    "DecoherenceMatrix",
    "Experiment",
    "Framework",
    "InterferometerSpec",
    "JointSpace",
    "JointState",
    "OutcomeDistribution",
    "ProbeRegister",
    "ProbeSpec",
    "ProjectorExpr",
    "Query",
    "RunRecord",
    "ScanSpec",
    "aggregate_coincidences",
    "assemble_joint_space",
    "backward_state",
    "bridge_ratio",
    "chain_ket",
    "check_consistency",
    "coincidence_table",
    "compare_ch_weaktrace",
    "compile_stages",
    "conditional_distribution",
    "conditional_given_probe",
    "coupling_unitary",
    "decoherence_matrix",
    "default_nested_mzi",
    "detector_distribution",
    "errors",
    "evolve",
    "format_itf",
    "forward_state",
    "inference_guard",
    "joint_outcome_distribution",
    "parse_axis",
    "parse_framework",
    "parse_itf",
    "projector_of",
    "refine_frameworks",
    "sample_runs",
    "scan",
    "validate_unitarity",
    "weak_trace_table",
    "weak_value",
]
