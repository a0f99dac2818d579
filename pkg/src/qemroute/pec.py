"""Probabilistic error cancellation for CX gates under depolarizing noise.

The ideal CX is written as a signed combination of the noisy CX followed by
each of the 16 two-qubit Paulis, and expectation values are estimated by
sampling circuits with probability ``|eta| / gamma`` and reweighting by the
sign and the one-norm.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .circuit import CSWAP, CX, Circuit, GateOp, embedded_matrix, rz, x
from .densim import PAULI_MATRICES, NoiseModel, depolarize, pauli_matrix, simulate
from .seeding import derive_seed, rng_for
from .zne import (
    CONCAT_LAMBDAS,
    Extrapolation,
    Extrapolator,
    FoldingStrategy,
    Polynomial,
    ScaleSchedule,
    extrapolate,
    fold_circuit,
    fold_plan,
)

log = logging.getLogger(__name__)

TWO_QUBIT_PAULIS = tuple(a + b for a, b in itertools.product("IXYZ", repeat=2))


@dataclass(frozen=True)
class QuasiProbRep:
    """Signed decomposition of one ideal gate into implementable noisy operations.

    Term ``i`` is the noisy gate followed by the Pauli ``paulis[i]`` (first
    letter on the control, second on the target).
    """

    epsilon: float
    coefficients: tuple[float, ...]
    paulis: tuple[str, ...]
    gate: str = CX

    @property
    def one_norm(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    @property
    def probabilities(self) -> np.ndarray:
        c = np.abs(np.array(self.coefficients))
        return c / c.sum()

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.coefficients).astype(int)

    def to_dict(self) -> dict:
        return {
            "gate": self.gate,
            "epsilon": self.epsilon,
            "coefficients": list(self.coefficients),
            "paulis": list(self.paulis),
            "one_norm": self.one_norm,
        }


def closed_form_coefficients(eps: float) -> tuple[float, float, float]:
    """``(eta_identity, eta_other, gamma)`` for inverting 2-qubit depolarizing noise."""
    denom = 16 * (1 - eps)
    return (16 - eps) / denom, -eps / denom, (16 + 14 * eps) / denom


@lru_cache(maxsize=256)
def represent_cx_depolarizing(eps: float) -> QuasiProbRep:
    if not 0 <= eps < 1:
        raise ValueError(f"noise level {eps} outside [0, 1)")
    if eps == 0:
        return QuasiProbRep(0.0, (1.0,), ("II",))
    eta_id, eta_other, _ = closed_form_coefficients(eps)
    coeffs = tuple(eta_id if p == "II" else eta_other for p in TWO_QUBIT_PAULIS)
    rep = QuasiProbRep(float(eps), coeffs, TWO_QUBIT_PAULIS)
    deviation = representation_error(rep)
    if deviation > 1e-10:
        raise ArithmeticError(f"CX representation off by {deviation:.3g} in PTM norm")
    return rep


# -- Pauli transfer matrices --------------------------------------------------


def pauli_words(n: int) -> list[str]:
    return ["".join(w) for w in itertools.product("IXYZ", repeat=n)]


def ptm(channel: Callable[[np.ndarray], np.ndarray], n: int) -> np.ndarray:
    """Pauli transfer matrix ``R[i, j] = Tr(P_i channel(P_j)) / 2**n``."""
    basis = [pauli_matrix(w) for w in pauli_words(n)]
    out = np.empty((len(basis), len(basis)))
    for j, pj in enumerate(basis):
        image = channel(pj)
        for i, pi in enumerate(basis):
            out[i, j] = np.real(np.trace(pi @ image)) / 2**n
    return out


def _cx_channel(rho):
    u = embedded_matrix(GateOp(CX, (0, 1)), 2)
    return u @ rho @ u.conj().T


def noisy_cx_ptm(eps: float) -> np.ndarray:
    return ptm(lambda r: depolarize(_cx_channel(r), (0, 1), eps), 2)


def ideal_cx_ptm() -> np.ndarray:
    return ptm(_cx_channel, 2)


def representation_ptm(rep: QuasiProbRep) -> np.ndarray:
    """PTM of ``sum_i eta_i (P_i after noisy CX)``."""
    noisy = noisy_cx_ptm(rep.epsilon)
    total = np.zeros_like(noisy)
    for eta, word in zip(rep.coefficients, rep.paulis):
        p = pauli_matrix(word)
        total += eta * ptm(lambda r, p=p: p @ r @ p, 2) @ noisy
    return total


def representation_error(rep: QuasiProbRep) -> float:
    return float(np.max(np.abs(representation_ptm(rep) - ideal_cx_ptm())))


# -- sampling ----------------------------------------------------------------


def pauli_fragment(word: str, qubits: Sequence[int]) -> list[GateOp]:
    """Device-basis gates applying the Pauli ``word`` (global phase dropped)."""
    ops: list[GateOp] = []
    for letter, q in zip(word, qubits):
        if letter in "ZY":
            ops.append(rz(np.pi, q))
        if letter in "XY":
            ops.append(x(q))
    return ops


@dataclass
class SampledCircuit:
    circuit: Circuit
    sign: int
    indices: tuple[int, ...]
    gamma: float


def _site_reps(c: Circuit, reps) -> list[QuasiProbRep]:
    if any(op.kind == CSWAP for op in c.ops):
        raise ValueError("circuit contains CSWAP; transpile before sampling")
    n_sites = c.count(CX)
    if isinstance(reps, QuasiProbRep):
        return [reps] * n_sites
    reps = list(reps)
    if len(reps) != n_sites:
        raise ValueError(f"need one representation per CX site ({n_sites}), got {len(reps)}")
    return reps


def reps_for(c: Circuit, eps: float | Sequence[float]) -> list[QuasiProbRep]:
    """Representation for each CX site from a uniform or per-site noise level."""
    n_sites = c.count(CX)
    levels = [eps] * n_sites if np.isscalar(eps) else list(eps)
    if len(levels) != n_sites:
        raise ValueError(f"need one noise level per CX site ({n_sites})")
    return [represent_cx_depolarizing(float(e)) for e in levels]


def gamma_total(reps: Sequence[QuasiProbRep]) -> float:
    return float(np.prod([r.one_norm for r in reps]))


def build_sampled(c: Circuit, reps: Sequence[QuasiProbRep], indices: Sequence[int]) -> Circuit:
    ops: list[GateOp] = []
    site = 0
    for op in c.ops:
        ops.append(op)
        if op.kind == CX:
            ops += pauli_fragment(reps[site].paulis[indices[site]], op.qubits)
            site += 1
    return c.with_ops(ops)


def sample_circuits(c: Circuit, reps, s: int, seed: int) -> list[SampledCircuit]:
    """Draw ``s`` circuits, sample ``i`` from the stream ``(seed, i)``."""
    if s < 1:
        raise ValueError("need at least one sample")
    site_reps = _site_reps(c, reps)
    gamma = gamma_total(site_reps)
    cumulative = [np.cumsum(r.probabilities) for r in site_reps]
    out = []
    for i in range(s):
        u = rng_for(seed, i).random(len(site_reps))
        idx = tuple(
            min(int(np.searchsorted(cum, ui, side="right")), len(cum) - 1)
            for cum, ui in zip(cumulative, u)
        )
        sign = int(np.prod([r.signs[j] for r, j in zip(site_reps, idx)]))
        out.append(SampledCircuit(build_sampled(c, site_reps, idx), sign, idx, gamma))
    return out


def pec_estimate(results: Sequence[tuple[int, object]], gamma_total: float):
    """Importance-sampled signed mean ``(gamma/s) sum_i sign_i E_i``.

    Values may be scalars or arrays (e.g. whole probability vectors).
    """
    if not results:
        raise ValueError("no samples")
    total = sum(sign * np.asarray(v, dtype=float) for sign, v in results)
    est = gamma_total * total / len(results)
    return float(est) if np.ndim(est) == 0 else est


# -- exact expansion ---------------------------------------------------------


def expansion_terms(c: Circuit, reps) -> list[tuple[float, Circuit]]:
    """Every ``(eta_vec, circuit)`` term of the full expansion; only for small circuits."""
    site_reps = _site_reps(c, reps)
    if len(site_reps) > 2:
        raise ValueError("literal expansion is limited to two CX sites")
    terms = []
    for idx in itertools.product(*(range(len(r.coefficients)) for r in site_reps)):
        coeff = float(np.prod([r.coefficients[j] for r, j in zip(site_reps, idx)]))
        terms.append((coeff, build_sampled(c, site_reps, idx)))
    return terms


def inverse_channel_hook(reps: Sequence[QuasiProbRep]):
    """``cx_hook`` applying each site's quasi-probability combination in place."""

    def hook(rho, op, site):
        rep = reps[site]
        if len(rep.coefficients) == 1:
            return rho
        others = [c for c, w in zip(rep.coefficients, rep.paulis) if w != "II"]
        if len(others) == 15 and np.ptp(others) == 0:
            # sum_P eta_P P rho P with one shared off-identity weight is a
            # depolarizing map of level 16 * eta_other (negative)
            return depolarize(rho, op.qubits, 16 * others[0])
        m = rho.shape[0].bit_length() - 1
        out = np.zeros_like(rho)
        for eta, word in zip(rep.coefficients, rep.paulis):
            full = ["I"] * m
            full[op.qubits[0]], full[op.qubits[1]] = word
            p = pauli_matrix("".join(full))
            out += eta * (p @ rho @ p)
        return out

    return hook


def simulate_expanded(c: Circuit, noise: NoiseModel, reps=None) -> np.ndarray:
    """Exact sum over all sampled circuits, by composing superoperators per CX site.

    With ``reps`` built from the same noise as ``noise`` this returns the
    noiseless state (up to single-qubit noise, which is not represented).
    """
    if reps is None:
        reps = [represent_cx_depolarizing(noise.cx_epsilon(i)) for i in range(c.count(CX))]
    site_reps = _site_reps(c, reps)
    return simulate(c, noise, cx_hook=inverse_channel_hook(site_reps))


# -- drivers -----------------------------------------------------------------


@dataclass
class PecRun:
    estimate: object
    stderr: object
    gamma_total: float
    samples: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "estimate": _jsonable(self.estimate),
            "stderr": _jsonable(self.stderr),
            "gamma_total": self.gamma_total,
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PecRun:
        return cls(**data)


def _jsonable(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def pec_execute(
    c: Circuit,
    eps: float | Sequence[float],
    s: int,
    seed: int,
    executor: Callable[[Circuit, int], object],
    workers: int = 1,
    reps: Sequence[QuasiProbRep] | None = None,
) -> PecRun:
    """Sample, execute and combine.  ``executor(circuit, seed)`` must use the same
    noise that built the representations, otherwise the estimate is biased."""
    site_reps = reps_for(c, eps) if reps is None else list(reps)
    samples = sample_circuits(c, site_reps, s, seed)
    seeds = [derive_seed(seed, i, 1) for i in range(s)]

    def run(args):
        sc, sd = args
        try:
            return np.asarray(executor(sc.circuit, sd), dtype=float)
        except Exception as err:  # noqa: BLE001 - counted below
            log.warning("PEC sample failed: %s", err)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(run, zip(samples, seeds)))
    else:
        values = [run(a) for a in zip(samples, seeds)]
    ok = [(sc, v) for sc, v in zip(samples, values) if v is not None]
    if len(ok) < s / 2:
        raise RuntimeError(f"only {len(ok)} of {s} PEC samples succeeded")
    gamma = gamma_total(site_reps)
    estimate = pec_estimate([(sc.sign, v) for sc, v in ok], gamma)
    weighted = np.array([gamma * sc.sign * v for sc, v in ok])
    stderr = weighted.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros_like(weighted[0])
    log_rows = [
        {"sign": sc.sign, "indices": list(sc.indices), "value": _jsonable(v)}
        for sc, v in ok
    ]
    return PecRun(
        estimate=estimate,
        stderr=float(stderr) if np.ndim(stderr) == 0 else stderr,
        gamma_total=gamma,
        samples=log_rows,
    )


def folded_site_levels(c: Circuit, lam: float, strat: FoldingStrategy, eps) -> list[float]:
    """Noise level of each CX in the folded circuit; copies inherit their source's."""
    n_cx = c.count(CX)
    levels = [float(eps)] * n_cx if np.isscalar(eps) else [float(e) for e in eps]
    ordinal = {}
    for i, op in enumerate(c.ops):
        if op.kind == CX:
            ordinal[i] = len(ordinal)
    return [levels[ordinal[i]] for i, _ in fold_plan(len(c.ops), lam, strat) if i in ordinal]


@dataclass
class ConcatResult:
    lambdas: list[float]
    values: np.ndarray  # PEC estimate per scale factor, shape (j,) or (j, k)
    stderrs: np.ndarray
    fits: list[Extrapolation]
    runs: list[PecRun]

    @property
    def extrapolated(self):
        vals = np.array([f.value for f in self.fits])
        return float(vals[0]) if self.values.ndim == 1 else vals

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "values": self.values.tolist(),
            "stderrs": self.stderrs.tolist(),
            "fits": [f.__dict__ | {"coefficients": list(f.coefficients)} for f in self.fits],
            "runs": [r.to_dict() for r in self.runs],
        }


def fit_columns(lams, values: np.ndarray, x: Extrapolator) -> list[Extrapolation]:
    if values.ndim == 1:
        return [extrapolate(list(zip(lams, values)), x)]
    return [extrapolate(list(zip(lams, values[:, i])), x) for i in range(values.shape[1])]


def zne_pec_concatenate(
    c: Circuit,
    sched: ScaleSchedule = ScaleSchedule(CONCAT_LAMBDAS),
    strat: FoldingStrategy = FoldingStrategy.local_left(),
    s: int = 20,
    seed: int = 0,
    executor: Callable[[Circuit, int], object] | None = None,
    x: Extrapolator = Polynomial(2),
    eps: float | Sequence[float] = 0.0,
    workers: int = 1,
) -> ConcatResult:
    """Fold, run PEC on every folded circuit (each CX copy is its own noisy
    site), then extrapolate the PEC estimates to lambda = 0."""
    if executor is None:
        raise ValueError("an executor is required")
    runs = []
    for i, lam in enumerate(sched.lambdas):
        st = strat.for_index(i)
        folded = fold_circuit(c, lam, st)
        levels = folded_site_levels(c, lam, st, eps)
        runs.append(pec_execute(folded, levels, s, derive_seed(seed, i), executor, workers))
    values = np.array([np.asarray(r.estimate, float) for r in runs])
    stderrs = np.array([np.asarray(r.stderr, float) for r in runs])
    fits = fit_columns(list(sched.lambdas), values, x)
    return ConcatResult(list(sched.lambdas), values, stderrs, fits, runs)


__all__ = [
    "QuasiProbRep",
    "SampledCircuit",
    "PecRun",
    "ConcatResult",
    "represent_cx_depolarizing",
    "closed_form_coefficients",
    "sample_circuits",
    "pec_estimate",
    "pec_execute",
    "zne_pec_concatenate",
    "simulate_expanded",
    "expansion_terms",
    "inverse_channel_hook",
    "ptm",
    "ideal_cx_ptm",
    "noisy_cx_ptm",
    "representation_ptm",
    "PAULI_MATRICES",
]
