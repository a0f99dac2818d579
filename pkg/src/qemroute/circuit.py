"""Gate-level circuit representation, benchmark circuits and basis lowering.

Qubit 0 is the leftmost ket label and the most significant bit of every
basis-state index, so the bit string ``"011"`` means qubit 0 in ``|0>`` and
qubits 1, 2 in ``|1>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

H = "H"
X = "X"
SX = "SX"
T = "T"
RZ = "RZ"
CX = "CX"
CSWAP = "CSWAP"

ARITY = {H: 1, X: 1, SX: 1, T: 1, RZ: 1, CX: 2, CSWAP: 3}

MAX_UNITARY_WIDTH = 10


class UnknownGate(ValueError):
    """Raised when no lowering rule exists for a gate kind."""


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    inverted: bool = False

    def __post_init__(self):
        if self.kind not in ARITY:
            raise UnknownGate(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} acts on {ARITY[self.kind]} qubit(s), got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        if min(self.qubits) < 0:
            raise ValueError("negative qubit index")
        if (self.kind == RZ) != (self.angle is not None):
            raise ValueError("an angle is required for RZ and only for RZ")

    def __str__(self):
        parts = [self.kind, ",".join(map(str, self.qubits))]
        if self.angle is not None:
            parts.append(repr(float(self.angle)))
        if self.inverted:
            parts.append("dag")
        return " ".join(parts)


def h(q):
    return GateOp(H, (q,))


def x(q):
    return GateOp(X, (q,))


def sx(q):
    return GateOp(SX, (q,))


def t(q):
    return GateOp(T, (q,))


def rz(theta, q):
    return GateOp(RZ, (q,), angle=float(theta))


def cx(control, target):
    return GateOp(CX, (control, target))


def cswap(control, a, b):
    return GateOp(CSWAP, (control, a, b))


@dataclass(frozen=True)
class Circuit:
    width: int
    ops: tuple[GateOp, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("circuit width must be positive")
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            if max(op.qubits) >= self.width:
                raise ValueError(f"{op} exceeds circuit width {self.width}")

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def __add__(self, other: Circuit) -> Circuit:
        if other.width != self.width:
            raise ValueError("cannot concatenate circuits of different width")
        return Circuit(self.width, self.ops + other.ops, self.label)

    def with_ops(self, ops: Iterable[GateOp], label: str | None = None) -> Circuit:
        return Circuit(self.width, tuple(ops), self.label if label is None else label)

    def count(self, kind: str) -> int:
        return sum(op.kind == kind for op in self.ops)

    def kinds(self) -> set[str]:
        return {op.kind for op in self.ops}

    def to_text(self) -> str:
        """Serialize as one ``KIND q0[,q1[,q2]] [angle] [dag]`` line per gate."""
        header = f"# width {self.width}"
        if self.label:
            header += f" label {self.label}"
        return "\n".join([header, *map(str, self.ops)]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Circuit:
        width = None
        label = ""
        ops = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                words = line[1:].split()
                if words[:1] == ["width"]:
                    width = int(words[1])
                    if words[2:3] == ["label"]:
                        label = " ".join(words[3:])
                continue
            words = line.split()
            kind, qubits = words[0], tuple(int(q) for q in words[1].split(","))
            rest = words[2:]
            inverted = bool(rest) and rest[-1] == "dag"
            if inverted:
                rest = rest[:-1]
            angle = float(rest[0]) if rest else None
            ops.append(GateOp(kind, qubits, angle, inverted))
        if width is None:
            width = 1 + max((max(op.qubits) for op in ops), default=0)
        return cls(width, tuple(ops), label)


@dataclass(frozen=True)
class BasisSet:
    kinds: frozenset[str] = field(default_factory=lambda: frozenset({RZ, SX, X, CX}))

    def __contains__(self, kind):
        return kind in self.kinds


DEVICE_BASIS = BasisSet()


# -- gate matrices -----------------------------------------------------------

_SQRT_X = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CSWAP = np.eye(8, dtype=complex)
_CSWAP[[5, 6]] = _CSWAP[[6, 5]]

_FIXED = {
    H: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    X: np.array([[0, 1], [1, 0]], dtype=complex),
    SX: _SQRT_X,
    T: np.diag([1, np.exp(1j * np.pi / 4)]),
    CX: _CX,
    CSWAP: _CSWAP,
}


def gate_matrix(op: GateOp) -> np.ndarray:
    """Local matrix of ``op`` on its own qubits (first listed qubit is the MSB)."""
    if op.kind == RZ:
        half = op.angle / 2
        mat = np.diag([np.exp(-1j * half), np.exp(1j * half)])
    else:
        mat = _FIXED[op.kind]
    return mat.conj().T if op.inverted else mat


def inverse_op(op: GateOp) -> GateOp:
    if op.kind in (H, X, CX, CSWAP):
        return op
    if op.kind == RZ:
        return GateOp(RZ, op.qubits, angle=-op.angle, inverted=op.inverted)
    return GateOp(op.kind, op.qubits, op.angle, not op.inverted)


def inverse_circuit(c: Circuit) -> Circuit:
    return c.with_ops(inverse_op(op) for op in reversed(c.ops))


def apply_matrix(tensor: np.ndarray, mat: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Left-multiply the qubit axes ``qubits`` of ``tensor`` by ``mat``."""
    k = len(qubits)
    gate = mat.reshape((2,) * (2 * k))
    out = np.tensordot(gate, tensor, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits))


@lru_cache(maxsize=4096)
def _embedded(op: GateOp, width: int) -> np.ndarray:
    dim = 2**width
    ident = np.eye(dim, dtype=complex).reshape((2,) * width + (dim,))
    full = apply_matrix(ident, gate_matrix(op), op.qubits).reshape(dim, dim)
    full.setflags(write=False)
    return full


def embedded_matrix(op: GateOp, width: int) -> np.ndarray:
    """Full ``2**width`` square matrix of ``op``; cached and read-only."""
    return _embedded(op, width)


def unitary_of(c: Circuit) -> np.ndarray:
    if c.width > MAX_UNITARY_WIDTH:
        raise ValueError(f"unitary_of supports at most {MAX_UNITARY_WIDTH} qubits")
    u = np.eye(2**c.width, dtype=complex)
    for op in c.ops:
        u = embedded_matrix(op, c.width) @ u
    return u


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    """True when ``a == exp(i phi) b`` entrywise to ``atol`` for some phase."""
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(b[idx]) < atol:
        return np.allclose(a, b, atol=atol)
    phase = a[idx] / b[idx]
    if abs(abs(phase) - 1) > atol:
        return False
    return np.max(np.abs(a - phase * b)) <= atol


# -- lowering ----------------------------------------------------------------


def _lower_h(op):
    (q,) = op.qubits
    return [rz(np.pi / 2, q), sx(q), rz(np.pi / 2, q)]


def _lower_t(op):
    (q,) = op.qubits
    return [rz(-np.pi / 4 if op.inverted else np.pi / 4, q)]


def _toffoli(c1, c2, tgt):
    tdg = lambda q: GateOp(T, (q,), inverted=True)  # noqa: E731
    return [
        h(tgt),
        cx(c2, tgt), tdg(tgt),
        cx(c1, tgt), t(tgt),
        cx(c2, tgt), tdg(tgt),
        cx(c1, tgt), t(c2), t(tgt),
        h(tgt),
        cx(c1, c2), t(c1), tdg(c2),
        cx(c1, c2),
    ]


def _lower_cswap(op):
    c, a, b = op.qubits
    return [cx(b, a), *_toffoli(c, a, b), cx(b, a)]


_RULES = {H: _lower_h, T: _lower_t, CSWAP: _lower_cswap}


def transpile(c: Circuit, basis: BasisSet = DEVICE_BASIS) -> Circuit:
    """Rewrite ``c`` into ``basis`` gates, equal to ``c`` up to global phase."""
    out: list[GateOp] = []
    pending = list(reversed(c.ops))
    while pending:
        op = pending.pop()
        if op.kind in basis:
            out.append(op)
            continue
        rule = _RULES.get(op.kind)
        if rule is None:
            raise UnknownGate(f"no lowering rule for {op.kind}")
        pending.extend(reversed(rule(op)))
    return c.with_ops(out)


# -- benchmark circuits ------------------------------------------------------

ROUTING_SIGNAL, ROUTING_NULL, ROUTING_CONTROL = 0, 1, 2


def build_routing_circuit() -> Circuit:
    """Three-qubit quantum router: the signal on path 1 is sent along both paths.

    Qubits are (path 1 / signal, path 2 / null, control).  The noiseless output is
    ``(|s>|0>|0> + |0>|s>|1>)/sqrt(2)`` with ``|s> = (|0> + e^{i pi/4}|1>)/sqrt(2)``.
    """
    ops = [
        h(ROUTING_SIGNAL),
        t(ROUTING_SIGNAL),
        h(ROUTING_CONTROL),
        cswap(ROUTING_CONTROL, ROUTING_SIGNAL, ROUTING_NULL),
    ]
    return Circuit(3, tuple(ops), "routing")


QRAM_ADDRESS, QRAM_TREE0, QRAM_TREE1, QRAM_DATA0, QRAM_DATA1, QRAM_OUTPUT = range(6)


def build_qram_circuit(d0_prep: Sequence[GateOp] = ()) -> Circuit:
    """Single-level bucket-brigade QRAM query on six qubits.

    Qubit order is (address, tree 0, tree 1, data 0, data 1, output).  The
    address router swaps the two memory cells so that the addressed cell sits
    in slot 0, the bus copies it to the output, and a second controlled swap
    restores the cells.  The tree qubits of a one-level tree are the router's
    idle output wires.  ``d0_prep`` may be written for any single qubit; it is
    relocated onto the data-0 cell.
    """
    touched = {q for op in d0_prep for q in op.qubits}
    if len(touched) > 1 or any(len(op.qubits) != 1 for op in d0_prep):
        raise ValueError("d0_prep must act on a single qubit")
    prep = [GateOp(op.kind, (QRAM_DATA0,), op.angle, op.inverted) for op in d0_prep]
    ops = [
        h(QRAM_ADDRESS),
        *prep,
        x(QRAM_DATA1),
        cswap(QRAM_ADDRESS, QRAM_DATA0, QRAM_DATA1),
        cx(QRAM_DATA0, QRAM_OUTPUT),
        cswap(QRAM_ADDRESS, QRAM_DATA0, QRAM_DATA1),
    ]
    return Circuit(6, tuple(ops), "qram")


def routing_target_state() -> np.ndarray:
    s = np.array([1, np.exp(1j * np.pi / 4)]) / np.sqrt(2)
    zero, one = np.array([1, 0]), np.array([0, 1])
    psi = np.kron(np.kron(s, zero), zero) + np.kron(np.kron(zero, s), one)
    return psi / np.sqrt(2)


def qram_target_state(d0: np.ndarray) -> np.ndarray:
    """``(|0>|D0> + |1>|D1>)/sqrt(2)`` on (address, output) with ``D1 = |1>``.

    The global phase of ``d0`` is not observable on the data qubit but would
    become a relative phase here, so it is fixed by making the largest
    amplitude real and positive.
    """
    d0 = np.asarray(d0, dtype=complex)
    lead = d0[np.argmax(np.abs(d0))]
    d0 = d0 * np.conj(lead) / abs(lead)
    return (np.kron([1, 0], d0) + np.kron([0, 1], [0, 1])) / np.sqrt(2)
