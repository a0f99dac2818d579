"""Measurement-error mitigation through a full calibration matrix."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .circuit import Circuit, x
from .densim import CountsDistribution

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class CalibrationMatrix:
    """Column ``j`` is the observed outcome distribution for prepared state ``|j>``."""

    matrix: np.ndarray
    shots: int | None = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        dim = mat.shape[0]
        if mat.shape != (dim, dim) or dim & (dim - 1):
            raise ValueError("calibration matrix must be square with power-of-two size")
        if np.any(mat < 0) or not np.allclose(mat.sum(axis=0), 1.0, atol=1e-9):
            raise ValueError("calibration matrix must be column-stochastic")
        object.__setattr__(self, "matrix", mat)

    def __eq__(self, other):
        if not isinstance(other, CalibrationMatrix):
            return NotImplemented
        return self.shots == other.shots and np.array_equal(self.matrix, other.matrix)

    __hash__ = None

    @property
    def num_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    @property
    def well_conditioned(self) -> bool:
        return self.condition_number < CONDITION_LIMIT

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "shots": self.shots}

    @classmethod
    def from_dict(cls, data: dict) -> CalibrationMatrix:
        return cls(np.array(data["matrix"]), data.get("shots"))


def build_calibration_circuits(
    m: int, width: int | None = None, qubits: Sequence[int] | None = None
) -> list[Circuit]:
    """Circuits preparing each of the ``2**m`` basis states on ``qubits``.

    Bit ``i`` of the index (most significant first) maps to ``qubits[i]``.
    """
    if m < 1:
        raise ValueError("need at least one qubit")
    qubits = list(range(m)) if qubits is None else list(qubits)
    if len(qubits) != m:
        raise ValueError("qubits must list m indices")
    width = max(qubits) + 1 if width is None else width
    circuits = []
    for j in range(2**m):
        bits = format(j, f"0{m}b")
        ops = [x(q) for q, b in zip(qubits, bits) if b == "1"]
        circuits.append(Circuit(width, tuple(ops), f"cal_{bits}"))
    return circuits


def estimate_calibration_matrix(counts: Sequence[CountsDistribution]) -> CalibrationMatrix:
    dim = len(counts)
    if dim == 0 or dim & (dim - 1):
        raise ValueError("need one counts distribution per basis state (2**m of them)")
    m = dim.bit_length() - 1
    shots = {c.shots for c in counts}
    if len(shots) != 1:
        raise ValueError("calibration runs must share one shot count")
    columns = [c.probabilities(m) for c in counts]
    return CalibrationMatrix(np.column_stack(columns), shots.pop())


def calibration_from_probabilities(columns: Sequence[np.ndarray]) -> CalibrationMatrix:
    """Exact calibration matrix from noiseless-shot outcome distributions."""
    return CalibrationMatrix(np.column_stack([np.asarray(c, float) for c in columns]))


def _simplex_lstsq(mat, raw, start):
    """min ||mat p - raw||^2 over the probability simplex."""
    dim = len(raw)
    res = minimize(
        lambda p: 0.5 * np.sum((mat @ p - raw) ** 2),
        np.clip(start, 0, None) / max(np.clip(start, 0, None).sum(), 1e-300),
        jac=lambda p: mat.T @ (mat @ p - raw),
        method="SLSQP",
        bounds=[(0.0, None)] * dim,
        constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones(dim)}],
        options={"ftol": 1e-16, "maxiter": 500},
    )
    p = np.clip(res.x, 0.0, None)
    # polish on the detected support with the exact KKT system
    support = np.flatnonzero(p > 1e-9)
    k = len(support)
    sub = mat[:, support]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = sub.T @ sub
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.concatenate([sub.T @ raw, [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)[:k]
    except np.linalg.LinAlgError:
        sol = None
    if sol is not None and sol.min() >= 0:
        polished = np.zeros(dim)
        polished[support] = sol
        if np.sum((mat @ polished - raw) ** 2) <= np.sum((mat @ p - raw) ** 2) + 1e-15:
            p = polished
    return p / p.sum()


def apply_mitigation(cal: CalibrationMatrix | np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Distribution ``p`` on the simplex minimising ``||M p - raw||_2``.

    Equals ``M^-1 raw`` whenever that is already a valid distribution.  An
    ill-conditioned ``M`` falls back to the pseudo-inverse with a warning.
    """
    cal = cal if isinstance(cal, CalibrationMatrix) else CalibrationMatrix(cal)
    mat = cal.matrix
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (mat.shape[0],):
        raise ValueError(f"raw vector length {raw.shape} does not match {mat.shape}")
    if abs(raw.sum() - 1) > 1e-6:
        raise ValueError("raw distribution must sum to 1")
    if cal.well_conditioned:
        p = np.linalg.solve(mat, raw)
    else:
        warnings.warn(
            f"calibration matrix condition number {cal.condition_number:.3g} exceeds "
            f"{CONDITION_LIMIT:g}; using the pseudo-inverse",
            RuntimeWarning,
            stacklevel=2,
        )
        p = np.linalg.pinv(mat) @ raw
    if p.min() >= -1e-12:
        p = np.clip(p, 0.0, None)
        return p / p.sum()
    log.debug("inverse leaves the simplex (min %.3g); solving constrained fit", p.min())
    return _simplex_lstsq(mat, raw, p)
