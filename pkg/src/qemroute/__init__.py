"""Error-mitigated quantum routing and QRAM benchmarks on a simulated noisy device.

Submodules:
    circuit      gate IR, benchmark circuits, lowering to {RZ, SX, X, CX}
    densim       density-matrix simulator with depolarizing and readout noise
    readout      calibration-matrix readout mitigation
    zne          unitary folding and zero-noise extrapolation
    pec          probabilistic error cancellation for depolarized CX gates
    tomography   Pauli tomography and Uhlmann fidelity
    experiments  end-to-end drivers, results and reports
"""

from .circuit import Circuit, GateOp, build_qram_circuit, build_routing_circuit, transpile
from .densim import NoiseModel, simulate
from .experiments import ExperimentConfig, MitigationResult, emit_report, run_qram, run_routing
from .pec import represent_cx_depolarizing
from .readout import CalibrationMatrix, apply_mitigation
from .tomography import fidelity, reconstruct
from .zne import Exponential, Extrapolator, FoldingStrategy, Linear, Polynomial, extrapolate, fold_circuit

__version__ = "0.1.0"

__all__ = [
    "CalibrationMatrix",
    "Circuit",
    "ExperimentConfig",
    "Exponential",
    "Extrapolator",
    "FoldingStrategy",
    "GateOp",
    "Linear",
    "MitigationResult",
    "NoiseModel",
    "Polynomial",
    "apply_mitigation",
    "build_qram_circuit",
    "build_routing_circuit",
    "emit_report",
    "extrapolate",
    "fidelity",
    "fold_circuit",
    "reconstruct",
    "represent_cx_depolarizing",
    "run_qram",
    "run_routing",
    "simulate",
    "transpile",
]
