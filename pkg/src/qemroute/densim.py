"""Density-matrix simulator with depolarizing CX noise and readout confusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .circuit import CX, DEVICE_BASIS, BasisSet, Circuit, GateOp, embedded_matrix

PSD_TOLERANCE = 1e-9

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(word: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for letter in word:
        out = np.kron(out, PAULI_MATRICES[letter])
    return out


def symmetric_confusion(p: float) -> np.ndarray:
    """Column-stochastic 2x2 readout matrix with flip probability ``p`` both ways."""
    return confusion_matrix(p, p)


def confusion_matrix(p1_given_0: float, p0_given_1: float) -> np.ndarray:
    if not (0 <= p1_given_0 <= 1 and 0 <= p0_given_1 <= 1):
        raise ValueError("readout flip probabilities must lie in [0, 1]")
    return np.array([[1 - p1_given_0, p0_given_1], [p1_given_0, 1 - p0_given_1]])


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing level after every CX plus optional per-qubit readout matrices.

    ``cx_overrides`` maps the ordinal of a CX within the simulated circuit to its
    own level; the remaining CX gates use ``epsilon_cx``.
    """

    epsilon_cx: float = 0.0
    epsilon_1q: float = 0.0
    readout: tuple[np.ndarray, ...] | None = None
    cx_overrides: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for eps in (self.epsilon_cx, self.epsilon_1q, *self.cx_overrides.values()):
            if not 0.0 <= eps < 1.0:
                raise ValueError(f"depolarizing level {eps} outside [0, 1)")
        if self.readout is not None:
            mats = tuple(np.asarray(m, dtype=float) for m in self.readout)
            for m in mats:
                check_confusion(m)
            object.__setattr__(self, "readout", mats)

    def cx_epsilon(self, site: int) -> float:
        return self.cx_overrides.get(site, self.epsilon_cx)

    def readout_for(self, qubits: Sequence[int]) -> tuple[np.ndarray, ...] | None:
        if self.readout is None:
            return None
        return tuple(self.readout[q] for q in qubits)


def check_confusion(m: np.ndarray) -> None:
    if m.shape != (2, 2):
        raise ValueError("readout confusion matrices must be 2x2")
    if np.any(m < 0) or not np.allclose(m.sum(axis=0), 1.0, atol=1e-12):
        raise ValueError("readout confusion matrix must be column-stochastic")


@dataclass(frozen=True)
class Observable:
    """A Pauli word such as ``"ZZZ"`` or a projector onto a Z-basis bit string."""

    pauli: str | None = None
    projector: str | None = None

    def __post_init__(self):
        if (self.pauli is None) == (self.projector is None):
            raise ValueError("give exactly one of pauli or projector")
        if self.pauli is not None and set(self.pauli) - set("IXYZ"):
            raise ValueError(f"bad Pauli word {self.pauli!r}")
        if self.projector is not None and set(self.projector) - set("01"):
            raise ValueError(f"bad bit string {self.projector!r}")

    @property
    def width(self) -> int:
        return len(self.pauli if self.pauli is not None else self.projector)

    def matrix(self) -> np.ndarray:
        if self.pauli is not None:
            return pauli_matrix(self.pauli)
        dim = 2**self.width
        out = np.zeros((dim, dim), dtype=complex)
        idx = int(self.projector, 2)
        out[idx, idx] = 1.0
        return out


@dataclass(frozen=True)
class CountsDistribution:
    shots: int
    counts: dict[str, int]

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to the number of shots")

    @property
    def width(self) -> int:
        return len(next(iter(self.counts)))

    def probabilities(self, width: int | None = None) -> np.ndarray:
        width = self.width if width is None else width
        p = np.zeros(2**width)
        for bits, n in self.counts.items():
            p[int(bits, 2)] += n
        return p / self.shots

    def to_dict(self) -> dict:
        return {"shots": self.shots, "counts": dict(sorted(self.counts.items()))}


# -- channels ----------------------------------------------------------------


def _as_tensor(rho, m):
    return rho.reshape((2,) * (2 * m))


def depolarize(rho: np.ndarray, qubits: Sequence[int], eps: float) -> np.ndarray:
    """``(1 - eps) rho + eps * Tr_qubits(rho) (x) I/d`` on the listed qubits."""
    if eps == 0.0:
        return rho
    dim = rho.shape[0]
    m = dim.bit_length() - 1
    k = len(qubits)
    t = _as_tensor(rho, m)
    traced = t
    # trace pairs from the highest qubit down so lower axis numbers stay valid
    for pos, q in enumerate(sorted(qubits, reverse=True)):
        remaining = m - pos
        traced = np.trace(traced, axis1=q, axis2=q + remaining)
    rest = [q for q in range(m) if q not in qubits]
    ident = np.eye(2**k).reshape((2,) * (2 * k)) / 2**k
    # axes of `full`: rest rows, rest cols, qubits rows, qubits cols
    full = np.multiply.outer(traced, ident)
    order = rest + [m + q for q in rest] + list(qubits) + [m + q for q in qubits]
    mixed = np.empty_like(t)
    mixed[...] = np.moveaxis(full, range(2 * m), order)
    return (1 - eps) * rho + eps * mixed.reshape(dim, dim)


def apply_unitary(rho: np.ndarray, op: GateOp, width: int) -> np.ndarray:
    u = embedded_matrix(op, width)
    return u @ rho @ u.conj().T


def zero_state(width: int) -> np.ndarray:
    rho = np.zeros((2**width, 2**width), dtype=complex)
    rho[0, 0] = 1.0
    return rho


CxHook = Callable[[np.ndarray, GateOp, int], np.ndarray]


def simulate(
    c: Circuit,
    noise: NoiseModel | None = None,
    basis: BasisSet = DEVICE_BASIS,
    cx_hook: CxHook | None = None,
) -> np.ndarray:
    """Evolve ``|0..0><0..0|`` through ``c`` with noise after each gate.

    ``cx_hook(rho, op, site)`` runs after the noise of every CX; it is how the
    exact quasi-probability expansion inserts its inverse channel.
    """
    noise = noise or NoiseModel()
    bad = c.kinds() - basis.kinds
    if bad:
        raise ValueError(f"non-basis gates {sorted(bad)}; transpile first")
    rho = zero_state(c.width)
    site = 0
    for op in c.ops:
        rho = apply_unitary(rho, op, c.width)
        if op.kind == CX:
            rho = depolarize(rho, op.qubits, noise.cx_epsilon(site))
            if cx_hook is not None:
                rho = cx_hook(rho, op, site)
            site += 1
        elif noise.epsilon_1q:
            rho = depolarize(rho, op.qubits, noise.epsilon_1q)
    return rho


def expectation(rho: np.ndarray, obs: Observable | np.ndarray) -> float:
    mat = obs.matrix() if isinstance(obs, Observable) else np.asarray(obs)
    if mat.shape != rho.shape:
        raise ValueError(f"observable shape {mat.shape} does not match state {rho.shape}")
    return float(np.real(np.trace(mat @ rho)))


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced state on ``keep`` (in the given order)."""
    m = rho.shape[0].bit_length() - 1
    keep = list(keep)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:m])
    cols = list(letters[m : 2 * m])
    for q in range(m):
        if q not in keep:
            cols[q] = rows[q]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    red = np.einsum("".join(rows) + "".join(cols) + "->" + out, _as_tensor(rho, m))
    k = len(keep)
    return red.reshape(2**k, 2**k)


def marginal(p: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Marginal of a ``2**m`` probability vector on the qubits ``keep``."""
    m = len(p).bit_length() - 1
    t = np.asarray(p).reshape((2,) * m)
    drop = tuple(q for q in range(m) if q not in keep)
    t = t.sum(axis=drop)
    kept_sorted = sorted(keep)
    t = np.transpose(t, [kept_sorted.index(q) for q in keep])
    return t.reshape(-1)


def apply_readout(p: np.ndarray, readout: Sequence[np.ndarray] | None) -> np.ndarray:
    """Push a probability vector through a tensor product of confusion matrices."""
    if readout is None:
        return p
    m = len(readout)
    t = np.asarray(p, dtype=float).reshape((2,) * m)
    for q, mat in enumerate(readout):
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def diagonal_probabilities(rho: np.ndarray) -> np.ndarray:
    p = np.real(np.diag(rho)).copy()
    if p.min() < -PSD_TOLERANCE:
        raise ValueError(f"negative diagonal entry {p.min():.3g}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def bitstrings(width: int) -> list[str]:
    return [format(i, f"0{width}b") for i in range(2**width)]


def sample_counts(
    rho: np.ndarray,
    shots: int,
    readout: Sequence[np.ndarray] | None = None,
    seed=None,
    measured: Sequence[int] | None = None,
) -> CountsDistribution:
    """Multinomial shot counts on ``measured`` qubits after readout confusion.

    ``readout`` lists one confusion matrix per measured qubit.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    p = diagonal_probabilities(rho)
    m = rho.shape[0].bit_length() - 1
    if measured is not None and list(measured) != list(range(m)):
        p = marginal(p, measured)
        m = len(measured)
    p = apply_readout(p, readout)
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, p)
    counts = {b: int(n) for b, n in zip(bitstrings(m), draws) if n}
    return CountsDistribution(shots, counts)


def is_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> bool:
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -PSD_TOLERANCE
