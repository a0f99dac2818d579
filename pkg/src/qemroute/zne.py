"""Zero-noise extrapolation: digital unitary folding and fits to lambda = 0."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .circuit import Circuit, inverse_op
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)

ZNE_LAMBDAS = (1, 3, 5, 7, 9, 11, 13)
CONCAT_LAMBDAS = (1, 3, 5, 7, 9)


@dataclass(frozen=True)
class FoldingStrategy:
    method: str  # "left", "right", "random" or "global"
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("left", "right", "random", "global"):
            raise ValueError(f"unknown folding method {self.method!r}")
        if self.method == "random" and self.seed is None:
            raise ValueError("random folding needs a seed")

    @classmethod
    def local_left(cls):
        return cls("left")

    @classmethod
    def local_right(cls):
        return cls("right")

    @classmethod
    def local_random(cls, seed: int):
        return cls("random", seed)

    @classmethod
    def global_(cls):
        return cls("global")

    def for_index(self, index: int) -> FoldingStrategy:
        """Strategy for the ``index``-th scale factor; random subsets are re-drawn."""
        if self.method != "random":
            return self
        return replace(self, seed=derive_seed(self.seed, index))

    def to_dict(self):
        return {"method": self.method, "seed": self.seed}


@dataclass(frozen=True)
class ScaleSchedule:
    lambdas: tuple[float, ...] = ZNE_LAMBDAS

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        if len(lams) < 2:
            raise ValueError("extrapolation needs at least two scale factors")
        if lams[0] != 1.0 or any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("scale factors must start at 1 and strictly increase")
        object.__setattr__(self, "lambdas", lams)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def fold_plan(n: int, lam: float, strategy: FoldingStrategy) -> list[tuple[int, bool]]:
    """Folded gate sequence as ``(source index, adjoint?)`` pairs."""
    if lam < 1:
        raise ValueError(f"scale factor {lam} < 1")
    if n == 0:
        return []
    k = int(math.floor((lam - 1) / 2 + 1e-12))
    target = _round_half_up(lam * n)
    extra = min(max(_round_half_up((target - n * (2 * k + 1)) / 2), 0), n)

    if strategy.method == "global":
        plan = [(i, False) for i in range(n)]
        for _ in range(k):
            plan += [(i, True) for i in reversed(range(n))]
            plan += [(i, False) for i in range(n)]
        suffix = range(n - extra, n)
        plan += [(i, True) for i in reversed(suffix)]
        plan += [(i, False) for i in suffix]
        return plan

    if strategy.method == "left":
        chosen = set(range(extra))
    elif strategy.method == "right":
        chosen = set(range(n - extra, n))
    else:
        chosen = set(rng_for(strategy.seed).choice(n, size=extra, replace=False).tolist())
    plan = []
    for i in range(n):
        plan.append((i, False))
        for _ in range(k + (i in chosen)):
            plan += [(i, True), (i, False)]
    return plan


def fold_circuit(c: Circuit, lam: float, strategy: FoldingStrategy) -> Circuit:
    """Scale noise digitally; the folded circuit has the same ideal unitary as ``c``."""
    ops = c.ops
    folded = [inverse_op(ops[i]) if adj else ops[i] for i, adj in fold_plan(len(ops), lam, strategy)]
    return c.with_ops(folded)


# -- extrapolation -----------------------------------------------------------


@dataclass(frozen=True)
class Extrapolator:
    kind: str  # "polynomial" or "exponential"
    order: int = 1

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ValueError(f"unknown extrapolator {self.kind!r}")
        if self.kind == "polynomial" and self.order < 1:
            raise ValueError("polynomial order must be at least 1")

    @property
    def min_points(self) -> int:
        return self.order + 1 if self.kind == "polynomial" else 3

    def __str__(self):
        if self.kind == "exponential":
            return "exponential"
        return "linear" if self.order == 1 else f"poly{self.order}"

    @classmethod
    def parse(cls, text: str) -> Extrapolator:
        text = text.lower()
        if text == "linear":
            return Linear()
        if text in ("exp", "exponential"):
            return Exponential()
        if text.startswith("poly"):
            return Polynomial(int(text[4:] or 2))
        raise ValueError(f"unknown extrapolator {text!r}")


def Linear() -> Extrapolator:
    return Extrapolator("polynomial", 1)


def Polynomial(order: int = 2) -> Extrapolator:
    return Extrapolator("polynomial", order)


def Exponential() -> Extrapolator:
    return Extrapolator("exponential")


@dataclass(frozen=True)
class Extrapolation:
    value: float
    coefficients: tuple[float, ...]
    residual: float
    model: str
    flagged: bool = False


def _fit_polynomial(lams, ys, order):
    coef = np.polynomial.polynomial.polyfit(lams, ys, order)
    resid = float(np.sum((np.polynomial.polynomial.polyval(lams, coef) - ys) ** 2))
    return Extrapolation(float(coef[0]), tuple(map(float, coef)), resid, f"poly{order}")


def _exp_linear_part(lams, ys, c):
    design = np.column_stack([np.ones_like(lams), c**lams])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    return coef, float(np.sum((design @ coef - ys) ** 2))


def _fit_exponential(lams, ys):
    """``y = a + b c**lam`` by variable projection over ``c`` then a joint polish."""
    scale = max(np.ptp(ys), np.max(np.abs(ys)), 1e-300)
    grid = np.concatenate([np.linspace(0.01, 0.99, 99), np.linspace(1.01, 2.0, 34)])
    costs = [_exp_linear_part(lams, ys, c)[1] for c in grid]
    best = int(np.argmin(costs))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    scalar = minimize_scalar(
        lambda c: _exp_linear_part(lams, ys, c)[1],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-13},
    )
    c0 = float(scalar.x)
    (a0, b0), _ = _exp_linear_part(lams, ys, c0)
    res = least_squares(
        lambda p: (p[0] + p[1] * p[2] ** lams - ys) / scale,
        [a0, b0, c0],
        bounds=([-np.inf, -np.inf, 1e-6], [np.inf, np.inf, 10.0]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=2000,
    )
    a, b, c = res.x
    if not res.success or not np.all(np.isfinite(res.x)):
        raise RuntimeError("exponential fit did not converge")
    resid = float(np.sum((a + b * c**lams - ys) ** 2))
    return Extrapolation(float(a + b), (float(a), float(b), float(c)), resid, "exponential")


def extrapolate(points: Sequence[tuple[float, float]], x: Extrapolator) -> Extrapolation:
    """Least-squares fit of ``x`` to ``(lambda, y)`` points, evaluated at lambda = 0."""
    lams = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    if len(set(lams.tolist())) != len(lams):
        raise ValueError("scale factors must be distinct")
    if len(lams) < x.min_points:
        raise ValueError(f"{x} needs at least {x.min_points} points, got {len(lams)}")
    if x.kind == "polynomial":
        return _fit_polynomial(lams, ys, x.order)
    try:
        return _fit_exponential(lams, ys)
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as err:
        log.warning("exponential fit failed (%s); falling back to poly2", err)
        fallback = _fit_polynomial(lams, ys, 2)
        return replace(fallback, flagged=True)


def extrapolate_columns(lams: Sequence[float], ys: np.ndarray, x: Extrapolator) -> list[Extrapolation]:
    """Extrapolate every column of a ``(len(lams), k)`` array independently."""
    ys = np.asarray(ys, dtype=float)
    return [extrapolate(list(zip(lams, ys[:, i])), x) for i in range(ys.shape[1])]


# -- execution ---------------------------------------------------------------


@dataclass
class ZneCurve:
    lambdas: list[float]
    values: list[float]
    stderrs: list[float]
    extrapolated: float
    coefficients: list[float] = field(default_factory=list)
    residual: float = 0.0
    model: str = ""
    flagged: bool = False

    def csv_rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.lambdas, self.values, self.stderrs))

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "values": list(self.values),
            "stderrs": list(self.stderrs),
            "extrapolated": self.extrapolated,
            "coefficients": list(self.coefficients),
            "residual": self.residual,
            "model": self.model,
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ZneCurve:
        return cls(**data)


def curve_from_points(lams, values, stderrs, x: Extrapolator) -> ZneCurve:
    fit = extrapolate(list(zip(lams, values)), x)
    return ZneCurve(
        lambdas=[float(v) for v in lams],
        values=[float(v) for v in values],
        stderrs=[float(v) for v in stderrs],
        extrapolated=fit.value,
        coefficients=list(fit.coefficients),
        residual=fit.residual,
        model=fit.model,
        flagged=fit.flagged,
    )


Executor = Callable[[Circuit, int], object]


def _split(result):
    if isinstance(result, tuple):
        return float(result[0]), float(result[1])
    return float(result), 0.0


def zne_execute(
    c: Circuit,
    sched: ScaleSchedule,
    strat: FoldingStrategy,
    x: Extrapolator,
    executor: Executor,
    seed: int = 0,
    workers: int = 1,
) -> ZneCurve:
    """Fold ``c`` at every scale factor, evaluate, and extrapolate to zero noise.

    ``executor(circuit, seed)`` returns an expectation value or a
    ``(value, stderr)`` pair.  A scale factor whose evaluation raises is dropped;
    fewer than two surviving points aborts.
    """
    circuits = [fold_circuit(c, lam, strat.for_index(i)) for i, lam in enumerate(sched.lambdas)]
    seeds = [derive_seed(seed, i) for i in range(len(circuits))]

    def run(args):
        circ, s = args
        try:
            return _split(executor(circ, s))
        except Exception as err:  # noqa: BLE001 - recorded per scale factor
            log.warning("executor failed at one scale factor: %s", err)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, zip(circuits, seeds)))
    else:
        results = [run(a) for a in zip(circuits, seeds)]
    kept = [(lam, r) for lam, r in zip(sched.lambdas, results) if r is not None]
    if len(kept) < 2:
        raise RuntimeError("fewer than two scale factors evaluated successfully")
    lams = [lam for lam, _ in kept]
    return curve_from_points(lams, [r[0] for _, r in kept], [r[1] for _, r in kept], x)
