"""End-to-end routing and QRAM experiments with every mitigation arm."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import circuit as cir
from .circuit import Circuit, GateOp, transpile, unitary_of
from .densim import (
    CountsDistribution,
    NoiseModel,
    Observable,
    apply_readout,
    confusion_matrix,
    diagonal_probabilities,
    expectation,
    marginal,
    sample_counts,
    simulate,
)
from .pec import pec_execute, simulate_expanded, zne_pec_concatenate
from .readout import (
    CalibrationMatrix,
    apply_mitigation,
    build_calibration_circuits,
    calibration_from_probabilities,
    estimate_calibration_matrix,
)
from .seeding import derive_seed
from .tomography import (
    MeasurementSetting,
    TomographyData,
    fidelity,
    generate_settings,
    reconstruct,
    sanitize,
)
from .zne import (
    CONCAT_LAMBDAS,
    ZNE_LAMBDAS,
    Extrapolator,
    FoldingStrategy,
    ScaleSchedule,
    ZneCurve,
    curve_from_points,
    extrapolate,
    fold_circuit,
)

log = logging.getLogger(__name__)

ARMS = ("none", "zne", "pec", "zne+pec")

# stream identifiers under the master seed
_CALIBRATION, _NONE, _ZNE, _PEC, _CONCAT, _FOLD = range(6)


@dataclass
class ExperimentConfig:
    benchmark: str = "routing"
    epsilon_cx: float = 0.02
    epsilon_1q: float = 0.0
    readout_p10: float = 0.0  # P(read 1 | prepared 0), every qubit
    readout_p01: float = 0.0  # P(read 0 | prepared 1), every qubit
    shots: int | None = 100_000  # None selects the exact-probability path
    arms: list[str] = field(default_factory=lambda: list(ARMS))
    readout_mitigation: bool = True
    zne_lambdas: list[float] = field(default_factory=lambda: list(ZNE_LAMBDAS))
    zne_folding: str = "random"
    zne_extrapolator: str = "poly2"
    concat_lambdas: list[float] = field(default_factory=lambda: list(CONCAT_LAMBDAS))
    concat_folding: str = "left"
    concat_extrapolator: str = "poly2"
    pec_samples: int = 20
    pec_mode: str = "auto"  # "sample", "expand", or "auto" (expand on the exact path)
    qram_d0: list[str] = field(default_factory=list)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.benchmark not in ("routing", "qram"):
            raise ValueError(f"unknown benchmark {self.benchmark!r}")
        unknown = set(self.arms) - set(ARMS)
        if unknown:
            raise ValueError(f"unknown mitigation arms {sorted(unknown)}")
        if "none" not in self.arms:
            self.arms = ["none", *self.arms]
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")
        if self.pec_samples < 1:
            raise ValueError("pec_samples must be positive")
        if self.pec_mode not in ("auto", "sample", "expand"):
            raise ValueError(f"unknown pec_mode {self.pec_mode!r}")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        ScaleSchedule(tuple(self.zne_lambdas))
        ScaleSchedule(tuple(self.concat_lambdas))
        Extrapolator.parse(self.zne_extrapolator)
        Extrapolator.parse(self.concat_extrapolator)
        self.noise_model(1)
        self.d0_gates()

    @property
    def exact(self) -> bool:
        return self.shots is None

    @property
    def expand_pec(self) -> bool:
        return self.pec_mode == "expand" or (self.pec_mode == "auto" and self.exact)

    def noise_model(self, width: int) -> NoiseModel:
        readout = None
        if self.readout_p10 or self.readout_p01:
            readout = tuple(confusion_matrix(self.readout_p10, self.readout_p01) for _ in range(width))
        return NoiseModel(self.epsilon_cx, self.epsilon_1q, readout)

    def d0_gates(self) -> list[GateOp]:
        makers = {"H": cir.h, "X": cir.x, "SX": cir.sx, "T": cir.t}
        gates = []
        for word in self.qram_d0:
            name, _, arg = word.upper().partition(":")
            if name == "RZ":
                gates.append(cir.rz(float(arg), 0))
            elif name in makers:
                gates.append(makers[name](0))
            else:
                raise ValueError(f"unknown d0 preparation gate {word!r}")
        return gates

    def folding(self, method: str, stream: int) -> FoldingStrategy:
        if method == "random":
            return FoldingStrategy.local_random(derive_seed(self.seed, _FOLD, stream))
        return FoldingStrategy(method)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- executor ----------------------------------------------------------------


class Executor(Protocol):
    """Backend boundary: anything that turns circuits into outcome data."""

    def run(self, circuit: Circuit, shots: int, seed: int, measured: Sequence[int]) -> CountsDistribution: ...

    def probabilities(self, circuit: Circuit, measured: Sequence[int]) -> np.ndarray: ...


class DensityMatrixExecutor:
    """Noisy-device stand-in backed by the density-matrix simulator."""

    def __init__(self, noise: NoiseModel, cache_size: int = 8192):
        self.noise = noise
        self._true_probs = lru_cache(maxsize=cache_size)(self._compute_true)

    def _compute_true(self, circuit: Circuit, measured: tuple[int, ...], expanded: bool) -> np.ndarray:
        if expanded:
            # a signed combination of states; left unclipped on purpose
            p = np.real(np.diag(simulate_expanded(circuit, self.noise)))
        else:
            p = diagonal_probabilities(simulate(circuit, self.noise))
        return marginal(p, measured)

    def density(self, circuit: Circuit) -> np.ndarray:
        return simulate(circuit, self.noise)

    def expectation(self, circuit: Circuit, observable: Observable) -> float:
        return expectation(self.density(circuit), observable)

    def true_probabilities(self, circuit: Circuit, measured: Sequence[int], expanded: bool = False) -> np.ndarray:
        """Outcome distribution before readout error; ``expanded`` applies exact PEC."""
        return self._true_probs(circuit, tuple(measured), expanded)

    def probabilities(self, circuit: Circuit, measured: Sequence[int], expanded: bool = False) -> np.ndarray:
        p = self.true_probabilities(circuit, measured, expanded)
        return apply_readout(p, self.noise.readout_for(measured))

    def run(self, circuit: Circuit, shots: int, seed: int, measured: Sequence[int]) -> CountsDistribution:
        p = self.true_probabilities(circuit, measured)
        # sample_counts expects a state; a diagonal one carries the same statistics
        return sample_counts(np.diag(p), shots, self.noise.readout_for(measured), seed)


# -- results -----------------------------------------------------------------


def _complex_to_json(mat: np.ndarray) -> dict:
    return {"real": np.real(mat).tolist(), "imag": np.imag(mat).tolist()}


def complex_from_json(data: dict) -> np.ndarray:
    return np.array(data["real"]) + 1j * np.array(data["imag"])


@dataclass
class ArmResult:
    name: str
    raw: dict[str, list[float]]  # pre-clip probability vector per setting
    fidelity: dict
    rho: dict
    curves: dict[str, dict] = field(default_factory=dict)  # setting -> ZneCurve dict
    pec: dict[str, dict] = field(default_factory=dict)  # setting -> PEC log(s)
    clipped: dict[str, list[float]] = field(default_factory=dict)  # tomography input where clipped

    @property
    def F(self) -> float:
        return self.fidelity["fidelity"]

    def zne_curves(self) -> dict[str, ZneCurve]:
        return {k: ZneCurve.from_dict(v) for k, v in self.curves.items()}

    def density(self) -> np.ndarray:
        return complex_from_json(self.rho)


@dataclass
class MitigationResult:
    benchmark: str
    config: dict
    target: str
    settings: list[str]
    measured: list[int]
    calibration: dict | None
    arms: dict[str, ArmResult]
    failures: dict[str, str] = field(default_factory=dict)  # arm -> error message
    timestamps: dict[str, float] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures

    def fidelities(self) -> dict[str, float]:
        return {name: arm.F for name, arm in self.arms.items()}

    def to_dict(self, timestamps: bool = True) -> dict:
        data = asdict(self)
        if not timestamps:
            data.pop("timestamps")
        return data

    def to_json(self, timestamps: bool = True) -> str:
        return json.dumps(self.to_dict(timestamps), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> MitigationResult:
        data = dict(data)
        # JSON keys are sorted on disk; restore the canonical arm order
        arms = sorted(data["arms"].items(), key=lambda kv: ARMS.index(kv[0]))
        data["arms"] = {k: ArmResult(**v) for k, v in arms}
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> MitigationResult:
        return cls.from_dict(json.loads(text))


# -- pipeline ----------------------------------------------------------------


@dataclass
class Benchmark:
    circuit: Circuit  # transpiled
    measured: tuple[int, ...]
    target: np.ndarray  # pure state on the measured qubits
    label: str


def routing_benchmark() -> Benchmark:
    c = transpile(cir.build_routing_circuit())
    return Benchmark(c, (0, 1, 2), cir.routing_target_state(), "routing |Phi>_f")


def qram_benchmark(d0_prep: Sequence[GateOp] = ()) -> Benchmark:
    c = transpile(cir.build_qram_circuit(d0_prep))
    d0 = unitary_of(Circuit(1, tuple(d0_prep)))[:, 0]
    return Benchmark(
        c, (cir.QRAM_ADDRESS, cir.QRAM_OUTPUT), cir.qram_target_state(d0), "qram |Psi>_f"
    )


class _Pipeline:
    def __init__(self, cfg: ExperimentConfig, bench: Benchmark, executor: DensityMatrixExecutor):
        self.cfg = cfg
        self.bench = bench
        self.executor = executor
        self.measured = bench.measured
        self.settings = generate_settings(len(self.measured), self.measured)
        self.calibration = self._calibrate() if cfg.readout_mitigation else None

    # measurement ------------------------------------------------------------

    def _calibrate(self) -> CalibrationMatrix:
        m = len(self.measured)
        circuits = build_calibration_circuits(m, self.bench.circuit.width, self.measured)
        if self.cfg.exact:
            return calibration_from_probabilities(
                [self.executor.probabilities(c, self.measured) for c in circuits]
            )
        counts = [
            self.executor.run(c, self.cfg.shots, derive_seed(self.cfg.seed, _CALIBRATION, j), self.measured)
            for j, c in enumerate(circuits)
        ]
        return estimate_calibration_matrix(counts)

    def measure(self, c: Circuit, seed: int, expanded: bool = False) -> np.ndarray:
        """Readout-mitigated outcome distribution of ``c`` on the measured qubits."""
        if self.cfg.exact:
            raw = self.executor.probabilities(c, self.measured, expanded)
        else:
            raw = self.executor.run(c, self.cfg.shots, seed, self.measured).probabilities(len(self.measured))
        if self.calibration is None:
            return raw
        return apply_mitigation(self.calibration, raw)

    def stderr(self, p: np.ndarray) -> np.ndarray:
        if self.cfg.exact:
            return np.zeros_like(p)
        return np.sqrt(np.clip(p * (1 - p), 0, None) / self.cfg.shots)

    def parity_signs(self, setting: MeasurementSetting) -> np.ndarray:
        m = len(self.measured)
        idx = np.arange(2**m)
        bits = [(idx >> (m - 1 - q)) & 1 for q in range(m)]
        return 1 - 2 * (np.sum(bits, axis=0) % 2)

    # arms --------------------------------------------------------------------

    def arm_none(self, k: int, st: MeasurementSetting):
        c = st.append_to(self.bench.circuit)
        return self.measure(c, derive_seed(self.cfg.seed, _NONE, k)), None, None

    def arm_zne(self, k: int, st: MeasurementSetting):
        cfg = self.cfg
        base = st.append_to(self.bench.circuit)
        strat = cfg.folding(cfg.zne_folding, 0)
        x = Extrapolator.parse(cfg.zne_extrapolator)
        lams = list(ScaleSchedule(tuple(cfg.zne_lambdas)).lambdas)
        vecs = []
        for i, lam in enumerate(lams):
            folded = fold_circuit(base, lam, strat.for_index(i))
            vecs.append(self.measure(folded, derive_seed(cfg.seed, _ZNE, k, i)))
        vecs = np.array(vecs)
        mitigated = np.array([extrapolate(list(zip(lams, vecs[:, j])), x).value for j in range(vecs.shape[1])])
        signs = self.parity_signs(st)
        parity = vecs @ signs
        errs = np.sqrt(np.clip(1 - parity**2, 0, None) / cfg.shots) if not cfg.exact else np.zeros_like(parity)
        curve = curve_from_points(lams, parity, errs, x)
        return mitigated, curve.to_dict(), None

    def arm_pec(self, k: int, st: MeasurementSetting):
        cfg = self.cfg
        c = st.append_to(self.bench.circuit)
        if cfg.expand_pec:
            return self.measure(c, 0, expanded=True), None, {"mode": "expand"}
        run = pec_execute(
            c,
            cfg.epsilon_cx,
            cfg.pec_samples,
            derive_seed(cfg.seed, _PEC),
            lambda circ, sd: self.measure(circ, derive_seed(sd, k)),
        )
        return np.asarray(run.estimate), None, run.to_dict()

    def arm_concat(self, k: int, st: MeasurementSetting):
        cfg = self.cfg
        c = st.append_to(self.bench.circuit)
        x = Extrapolator.parse(cfg.concat_extrapolator)
        strat = cfg.folding(cfg.concat_folding, 1)
        lams = list(ScaleSchedule(tuple(cfg.concat_lambdas)).lambdas)
        signs = self.parity_signs(st)
        if cfg.expand_pec:
            vecs = np.array(
                [self.measure(fold_circuit(c, lam, strat.for_index(i)), 0, expanded=True) for i, lam in enumerate(lams)]
            )
            mitigated = np.array([extrapolate(list(zip(lams, vecs[:, j])), x).value for j in range(vecs.shape[1])])
            curve = curve_from_points(lams, vecs @ signs, np.zeros(len(lams)), x)
            return mitigated, curve.to_dict(), {"mode": "expand"}
        result = zne_pec_concatenate(
            c,
            ScaleSchedule(tuple(lams)),
            strat,
            cfg.pec_samples,
            derive_seed(cfg.seed, _CONCAT),
            lambda circ, sd: self.measure(circ, derive_seed(sd, k)),
            x,
            cfg.epsilon_cx,
        )
        parity = result.values @ signs
        parity_err = np.sqrt((result.stderrs**2) @ (signs**2))
        curve = curve_from_points(lams, parity, parity_err, x)
        return np.asarray(result.extrapolated), curve.to_dict(), {"runs": [r.to_dict() for r in result.runs]}

    # assembly ---------------------------------------------------------------

    def run_arm(self, name: str) -> ArmResult:
        fn = {"none": self.arm_none, "zne": self.arm_zne, "pec": self.arm_pec, "zne+pec": self.arm_concat}[name]
        jobs = list(enumerate(self.settings))
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                outputs = list(pool.map(lambda a: fn(*a), jobs))
        else:
            outputs = [fn(*a) for a in jobs]
        raw = {st.word: [float(v) for v in out[0]] for st, out in zip(self.settings, outputs)}
        curves = {st.word: out[1] for st, out in zip(self.settings, outputs) if out[1] is not None}
        pec_logs = {st.word: out[2] for st, out in zip(self.settings, outputs) if out[2] is not None}
        data = TomographyData({w: np.array(v) for w, v in raw.items()}, provenance=name)
        recon = reconstruct(data)
        clipped = {w: sanitize(data.probabilities[w])[0].tolist() for w in recon.clipped_settings}
        target = np.outer(self.bench.target, self.bench.target.conj())
        report = fidelity(target, recon, self.bench.label)
        return ArmResult(name, raw, report.to_dict(), _complex_to_json(recon.rho), curves, pec_logs, clipped)


def _run(cfg: ExperimentConfig, bench: Benchmark, executor: DensityMatrixExecutor | None) -> MitigationResult:
    started = time.time()
    executor = executor or DensityMatrixExecutor(cfg.noise_model(bench.circuit.width))
    pipe = _Pipeline(cfg, bench, executor)
    arms, failures = {}, {}
    for name in ARMS:
        if name not in cfg.arms:
            continue
        if name == "none":
            # the baseline has no mitigation code path to fail in
            arms[name] = pipe.run_arm(name)
        else:
            try:
                arms[name] = pipe.run_arm(name)
            except Exception as err:  # noqa: BLE001 - one broken arm keeps the rest
                log.error("%s arm %s failed: %s", bench.label, name, err)
                failures[name] = f"{type(err).__name__}: {err}"
                continue
        log.info("%s arm %s: F = %.4f", bench.label, name, arms[name].F)
    return MitigationResult(
        benchmark=cfg.benchmark,
        config=cfg.to_dict(),
        target=bench.label,
        settings=[st.word for st in pipe.settings],
        measured=list(bench.measured),
        calibration=pipe.calibration.to_dict() if pipe.calibration is not None else None,
        arms=arms,
        failures=failures,
        timestamps={"started": started, "finished": time.time()},
    )


def run_routing(cfg: ExperimentConfig, executor: DensityMatrixExecutor | None = None) -> MitigationResult:
    if cfg.benchmark != "routing":
        raise ValueError("config is not for the routing benchmark")
    return _run(cfg, routing_benchmark(), executor)


def run_qram(cfg: ExperimentConfig, executor: DensityMatrixExecutor | None = None) -> MitigationResult:
    if cfg.benchmark != "qram":
        raise ValueError("config is not for the qram benchmark")
    return _run(cfg, qram_benchmark(cfg.d0_gates()), executor)


def run_experiment(cfg: ExperimentConfig) -> MitigationResult:
    return run_routing(cfg) if cfg.benchmark == "routing" else run_qram(cfg)


# -- reports -----------------------------------------------------------------


def emit_report(result: MitigationResult, out_dir: str | Path, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    """Write ``result.json`` and/or one CSV per ZNE curve plus ``fidelity.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "result.json"
        path.write_text(result.to_json())
        written.append(path)
    if "csv" in formats:
        curve_dir = out / "curves"
        for arm in result.arms.values():
            for word, curve in arm.curves.items():
                curve_dir.mkdir(exist_ok=True)
                path = curve_dir / f"{arm.name.replace('+', '_')}_{word}.csv"
                with path.open("w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["lambda", "expectation", "stderr"])
                    writer.writerows(ZneCurve.from_dict(curve).csv_rows())
                written.append(path)
        path = out / "fidelity.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arm", "F"])
            for name, arm in result.arms.items():
                writer.writerow([name, repr(arm.F)])
        written.append(path)
    return written


def calibrate(m: int, p10: float, p01: float, shots: int | None, seed: int) -> CalibrationMatrix:
    """Estimate a calibration matrix on ``m`` qubits with uniform readout error."""
    noise = NoiseModel(readout=tuple(confusion_matrix(p10, p01) for _ in range(m)))
    executor = DensityMatrixExecutor(noise)
    circuits = build_calibration_circuits(m)
    qubits = tuple(range(m))
    if shots is None:
        return calibration_from_probabilities([executor.probabilities(c, qubits) for c in circuits])
    counts = [executor.run(c, shots, derive_seed(seed, _CALIBRATION, j), qubits) for j, c in enumerate(circuits)]
    return estimate_calibration_matrix(counts)
