"""Discrete-time control contraction metrics for polynomial systems.

Synthesis of state-dependent metrics and feedback gains by sum-of-squares
programming, numerical geodesics under the synthesized metric, and the
geodesic-integrated tracking controller, with a closed-loop simulator and
grid-based certificate verification.
"""

from .ctrl import ControlDecision, control_input, gain_at
from .errors import (DccmError, FileFormatError, MetricFailure,
                     NonPositiveMetric, SimulationAborted, SingularMetric,
                     SolverCapacityError, SolverFailure, SynthesisInfeasible)
from .geodesic import (GeodesicPath, compute_geodesic, metric_at, path_energy,
                       save_path_csv)
from .polyalg import MonomialBasis, PolyMatrix, Polynomial
from .sim import (ReferenceSchedule, TrajectoryLog, VerificationReport,
                  cstr_schedule, load_schedule, schedule_from_dict,
                  schedule_to_dict, simulate, verify_contraction)
from .synth import (CertificateTemplate, DccmCertificate, ObjectiveMode,
                    SynthesisOptions, certificate_from_dict,
                    certificate_to_dict, check_lemma_condition,
                    constant_certificate, contraction_block_at,
                    load_certificate, metric_from_w, save_certificate,
                    synthesize)
from .sysmodel import (Box, ControlAffineSystem, cstr, load_system,
                       save_system, system_from_dict, system_to_dict)

__version__ = "0.1.0"

__all__ = [
    "Box", "CertificateTemplate", "ControlAffineSystem", "ControlDecision",
    "DccmCertificate", "DccmError", "FileFormatError", "GeodesicPath",
    "MetricFailure", "MonomialBasis", "NonPositiveMetric", "ObjectiveMode",
    "PolyMatrix", "Polynomial", "ReferenceSchedule", "SimulationAborted",
    "SingularMetric", "SolverCapacityError", "SolverFailure",
    "SynthesisInfeasible", "SynthesisOptions", "TrajectoryLog",
    "VerificationReport", "certificate_from_dict", "certificate_to_dict",
    "check_lemma_condition", "compute_geodesic", "constant_certificate",
    "contraction_block_at", "control_input", "cstr", "cstr_schedule",
    "gain_at", "load_certificate", "load_schedule", "load_system",
    "metric_at", "metric_from_w", "path_energy", "save_certificate",
    "save_path_csv", "save_system", "schedule_from_dict", "schedule_to_dict",
    "simulate", "synthesize", "system_from_dict", "system_to_dict",
    "verify_contraction",
]
