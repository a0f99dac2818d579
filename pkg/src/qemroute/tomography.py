"""Pauli-basis state tomography by linear inversion, and Uhlmann fidelity."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, GateOp, rz, sx
from .densim import PSD_TOLERANCE, pauli_matrix

log = logging.getLogger(__name__)

EXPECTATION_SLACK = 0.05


def _h_lowered(q):
    return [rz(np.pi / 2, q), sx(q), rz(np.pi / 2, q)]


def basis_change(letter: str, q: int) -> list[GateOp]:
    """Device-basis gates rotating the ``letter`` eigenbasis onto Z (+1 -> |0>)."""
    if letter == "Z":
        return []
    if letter == "X":
        return _h_lowered(q)
    if letter == "Y":
        return [rz(-np.pi / 2, q), *_h_lowered(q)]
    raise ValueError(f"bad measurement basis {letter!r}")


@dataclass(frozen=True)
class MeasurementSetting:
    word: str
    qubits: tuple[int, ...]

    @property
    def gates(self) -> list[GateOp]:
        return [g for letter, q in zip(self.word, self.qubits) for g in basis_change(letter, q)]

    def append_to(self, c: Circuit) -> Circuit:
        return c.with_ops(c.ops + tuple(self.gates))


def generate_settings(m: int, qubits: Sequence[int] | None = None) -> list[MeasurementSetting]:
    """All ``3**m`` Pauli measurement settings in lexicographic XYZ order."""
    if m < 1:
        raise ValueError("need at least one qubit")
    qubits = tuple(range(m)) if qubits is None else tuple(qubits)
    if len(qubits) != m:
        raise ValueError("qubits must list m indices")
    return [MeasurementSetting("".join(w), qubits) for w in itertools.product("XYZ", repeat=m)]


def sanitize(p: np.ndarray) -> tuple[np.ndarray, bool]:
    """Clip to [0, 1] and renormalise; also reports whether anything was clipped."""
    p = np.asarray(p, dtype=float)
    clipped = np.clip(p, 0.0, 1.0)
    changed = bool(np.any(clipped != p))
    total = clipped.sum()
    if total <= 0:
        clipped = np.full_like(p, 1.0 / len(p))
        changed = True
    else:
        clipped = clipped / total
    return clipped, changed


@dataclass
class TomographyData:
    """Outcome distributions per setting word, exactly as produced upstream.

    Mitigated data may leave [0, 1]; with ``clip`` on, each vector is clipped
    and renormalised before inversion and the event is logged.
    """

    probabilities: dict[str, np.ndarray]
    provenance: str = "raw"
    clip: bool = True

    @property
    def num_qubits(self) -> int:
        return len(next(iter(self.probabilities)))

    def prepared(self) -> tuple[dict[str, np.ndarray], list[str]]:
        if not self.clip:
            return {w: np.asarray(p, float) for w, p in self.probabilities.items()}, []
        out, events = {}, []
        for word, p in self.probabilities.items():
            out[word], changed = sanitize(p)
            if changed:
                events.append(word)
        if events:
            log.info("%s data: clipped %d setting(s): %s", self.provenance, len(events), events)
        return out, events


def _parity_signs(m: int, support: Sequence[int]) -> np.ndarray:
    idx = np.arange(2**m)
    parity = np.zeros(2**m, dtype=int)
    for q in support:
        parity ^= (idx >> (m - 1 - q)) & 1
    return 1 - 2 * parity


def pauli_expectations(probabilities: Mapping[str, np.ndarray], m: int) -> dict[str, float]:
    """All ``4**m`` Pauli expectations; identity positions average every
    compatible setting."""
    out = {}
    for word in itertools.product("IXYZ", repeat=m):
        word = "".join(word)
        support = [i for i, c in enumerate(word) if c != "I"]
        if not support:
            out[word] = 1.0
            continue
        signs = _parity_signs(m, support)
        vals = [
            float(signs @ p)
            for setting, p in probabilities.items()
            if all(setting[i] == word[i] for i in support)
        ]
        if not vals:
            raise ValueError(f"no setting measures {word}")
        out[word] = float(np.mean(vals))
    return out


def project_psd(rho: np.ndarray) -> tuple[np.ndarray, float]:
    """Zero negative eigenvalues and rescale the rest to unit trace.

    Returns the projected matrix and the negative eigenvalue mass removed.
    """
    herm = (rho + rho.conj().T) / 2
    vals, vecs = np.linalg.eigh(herm)
    removed = float(-vals[vals < 0].sum())
    if removed == 0.0 and abs(vals.sum() - 1) < 1e-12:
        return herm, 0.0
    kept = np.clip(vals, 0.0, None)
    kept = kept / kept.sum()
    return (vecs * kept) @ vecs.conj().T, removed


@dataclass
class Reconstruction:
    rho: np.ndarray
    removed_mass: float
    clipped_settings: list[str] = field(default_factory=list)


def linear_inversion(probabilities: Mapping[str, np.ndarray], m: int) -> np.ndarray:
    exps = pauli_expectations(probabilities, m)
    bad = {w: v for w, v in exps.items() if abs(v) > 1 + EXPECTATION_SLACK}
    if bad:
        raise ValueError(f"Pauli expectations out of range, upstream data is broken: {bad}")
    rho = sum(v * pauli_matrix(w) for w, v in exps.items())
    return rho / 2**m


def reconstruct(data: TomographyData) -> Reconstruction:
    m = data.num_qubits
    expected = {"".join(w) for w in itertools.product("XYZ", repeat=m)}
    missing = expected - set(data.probabilities)
    if missing:
        raise ValueError(f"missing settings {sorted(missing)}")
    probs, events = data.prepared()
    rho, removed = project_psd(linear_inversion(probs, m))
    if removed > 0:
        log.info("%s reconstruction: removed negative eigenvalue mass %.3g", data.provenance, removed)
    return Reconstruction(rho, removed, events)


# -- fidelity ----------------------------------------------------------------


EIGEN_CUTOFF = 1e-12


def _psd_sqrt(rho):
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    # eigh noise of order 1e-16 would otherwise enter as 1e-8 after the root
    vals = np.where(vals > EIGEN_CUTOFF, vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _check_state(rho, name):
    vals = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if vals.min() < -1e-7 or abs(vals.sum() - 1) > 1e-7:
        raise ValueError(f"{name} is not a density matrix (min eig {vals.min():.3g})")


def uhlmann_fidelity(rho: np.ndarray, rho_p: np.ndarray) -> float:
    """``(Tr sqrt(sqrt(rho) rho' sqrt(rho)))**2``."""
    if rho.shape != rho_p.shape:
        raise ValueError("states have different dimensions")
    _check_state(rho, "rho")
    _check_state(rho_p, "rho'")
    # Tr sqrt(sqrt(rho) rho' sqrt(rho)) is the trace norm of sqrt(rho) sqrt(rho')
    singular = np.linalg.svd(_psd_sqrt(rho) @ _psd_sqrt(rho_p), compute_uv=False)
    return float(np.sum(singular) ** 2)


def pure_fidelity(psi: np.ndarray, rho_p: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, rho_p @ psi)))


def pure_state_of(rho: np.ndarray) -> np.ndarray | None:
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    if abs(vals[-1] - 1) > 1e-9:
        return None
    return vecs[:, -1]


@dataclass
class FidelityReport:
    fidelity: float
    reference: str
    removed_mass: float = 0.0
    clipped_settings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> FidelityReport:
        return cls(**data)


def fidelity(
    rho: np.ndarray, rho_p: np.ndarray | Reconstruction, reference: str = ""
) -> FidelityReport:
    """Uhlmann fidelity, cross-checked against ``<psi|rho'|psi>`` for pure ``rho``."""
    removed, clipped = 0.0, []
    if isinstance(rho_p, Reconstruction):
        removed, clipped = rho_p.removed_mass, rho_p.clipped_settings
        rho_p = rho_p.rho
    f = uhlmann_fidelity(rho, rho_p)
    psi = pure_state_of(rho)
    if psi is not None:
        shortcut = pure_fidelity(psi, rho_p)
        if abs(shortcut - f) > 1e-8:
            raise ArithmeticError(f"fidelity cross-check failed: {f} vs {shortcut}")
    f = min(max(f, 0.0), 1.0 + PSD_TOLERANCE)
    return FidelityReport(f, reference, removed, list(clipped))
