"""Two-qubit quantum process tomography: simulation, reconstruction and metrics."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .metrics import (
    MetricsReport,
    average_gate_fidelity,
    compute_metrics,
    direct_process_fidelity,
    process_fidelity,
    scatter_sweep,
)
from .process import (
    CNOT,
    IDENTITY,
    ProcessMatrix,
    UnitaryGate,
    apply_process,
    chi_from_unitary,
    cp_defect,
    pauli_basis,
    tp_defect,
)
from .qcore import DensityMatrix, PureState, Rng
from .recon import ConvergenceError, FitConfig, FitResult, linear_inversion, mle_reconstruct
from .tomography import CountSet, NoiseSpec, simulate_counts, standard_settings

__all__ = [
    "BACKEND",
    "CNOT",
    "IDENTITY",
    "ConvergenceError",
    "CountSet",
    "DensityMatrix",
    "FitConfig",
    "FitResult",
    "MetricsReport",
    "NoiseSpec",
    "ProcessMatrix",
    "PureState",
    "Rng",
    "UnitaryGate",
    "apply_process",
    "average_gate_fidelity",
    "chi_from_unitary",
    "compute_metrics",
    "cp_defect",
    "direct_process_fidelity",
    "linear_inversion",
    "mle_reconstruct",
    "pauli_basis",
    "process_fidelity",
    "scatter_sweep",
    "simulate_counts",
    "standard_settings",
    "tp_defect",
]
