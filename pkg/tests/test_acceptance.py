"""Acceptance criteria, each checked at its stated tolerance and runtime.

Every test records one PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated in the terminal summary.  Run directly with
``python3 tests/test_acceptance.py`` or as part of ``pytest``.
"""

import time

import numpy as np
import pytest

import oracles
from qemroute.circuit import build_routing_circuit, transpile
from qemroute.densim import expectation, Observable, sample_counts, simulate
from qemroute.experiments import ExperimentConfig, emit_report, run_qram, run_routing
from qemroute.pec import closed_form_coefficients, ideal_cx_ptm, representation_ptm, represent_cx_depolarizing
from qemroute.readout import apply_mitigation
from qemroute.tomography import (
    TomographyData,
    generate_settings,
    pure_fidelity,
    reconstruct,
    uhlmann_fidelity,
)
from qemroute.zne import Exponential, Linear, Polynomial, extrapolate

SEEDS = (0, 1, 2, 3, 4)

# shared budget of the end-to-end comparisons
BUDGET = dict(
    epsilon_cx=0.02,
    readout_p10=0.03,
    readout_p01=0.03,
    shots=100_000,
    zne_lambdas=[1, 3, 5, 7, 9],
    zne_folding="left",
    concat_lambdas=[1, 3, 5, 7, 9],
    concat_folding="left",
    concat_extrapolator="poly2",
    zne_extrapolator="poly2",
    pec_samples=20,
)

_RUNS: dict = {}
_ELAPSED: dict = {}


def _budget_run(benchmark, seed):
    key = (benchmark, seed)
    if key not in _RUNS:
        t0 = time.perf_counter()
        cfg = ExperimentConfig(benchmark=benchmark, seed=seed, **BUDGET)
        _RUNS[key] = (run_routing if benchmark == "routing" else run_qram)(cfg)
        _ELAPSED[key] = time.perf_counter() - t0
    return _RUNS[key]


def _parity(p):
    m = int(np.log2(len(p)))
    signs = np.array([(-1) ** bin(i).count("1") for i in range(2**m)])
    return float(signs @ np.asarray(p))


def test_criterion_01_noiseless_routing_probabilities(verdict):
    t0 = time.perf_counter()
    rho = simulate(transpile(build_routing_circuit()))
    p = sample_counts(rho, 100_000, seed=2024).probabilities()
    elapsed = time.perf_counter() - t0
    on = [int(b, 2) for b in ("000", "001", "011", "100")]
    off = [i for i in range(8) if i not in on]
    ok = all(abs(p[i] - 0.25) <= 0.005 for i in on) and all(p[i] <= 0.005 for i in off) and elapsed < 5
    verdict(1, "noiseless routing probabilities", ok,
            f"on={np.round(p[on], 4).tolist()} off_max={p[off].max():.4f} t={elapsed:.2f}s")


def test_criterion_02_noiseless_fidelity(verdict):
    t0 = time.perf_counter()
    fs = {}
    for bench, run in (("routing", run_routing), ("qram", run_qram)):
        cfg = ExperimentConfig(benchmark=bench, epsilon_cx=0.0, shots=None, arms=["none"], seed=0)
        fs[bench] = run(cfg).fidelities()["none"]
    elapsed = time.perf_counter() - t0
    ok = all(abs(f - 1) <= 1e-9 for f in fs.values()) and elapsed < 1
    verdict(2, "noiseless fidelity on the exact path", ok,
            f"1-F routing={1 - fs['routing']:.2e} qram={1 - fs['qram']:.2e} t={elapsed:.2f}s")


def test_criterion_03_pec_representation_identity(verdict):
    t0 = time.perf_counter()
    ptm_err, norm_err, sum_err = 0.0, 0.0, 0.0
    for eps in (0.001, 0.01, 0.05, 0.2):
        rep = represent_cx_depolarizing(eps)
        ptm_err = max(ptm_err, float(np.max(np.abs(representation_ptm(rep) - ideal_cx_ptm()))))
        eta_id, eta_other, gamma = closed_form_coefficients(eps)
        norm_err = max(norm_err, abs(rep.one_norm - gamma), abs(abs(eta_id) + 15 * abs(eta_other) - gamma))
        sum_err = max(sum_err, abs(sum(rep.coefficients) - 1), abs(eta_id + 15 * eta_other - 1))
    elapsed = time.perf_counter() - t0
    ok = ptm_err <= 1e-10 and norm_err <= 1e-12 and sum_err <= 1e-12 and elapsed < 1
    verdict(3, "PEC representation identity", ok,
            f"ptm={ptm_err:.1e} gamma={norm_err:.1e} sum={sum_err:.1e} t={elapsed:.2f}s")


def test_criterion_04_pec_exactness(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(epsilon_cx=0.02, shots=None, arms=["pec"], pec_mode="expand", seed=0)
    result = run_routing(cfg)
    ideal = simulate(transpile(build_routing_circuit()))
    worst = 0.0
    for word in result.settings:
        truth = expectation(ideal, Observable(word))
        worst = max(worst, abs(_parity(result.arms["pec"].raw[word]) - truth))
    f = result.fidelities()["pec"]
    elapsed = time.perf_counter() - t0
    ok = len(result.settings) == 27 and worst <= 1e-9 and abs(f - 1) <= 1e-6 and elapsed < 30
    verdict(4, "PEC exactness under full expansion", ok,
            f"max|dE|={worst:.1e} 1-F={1 - f:.1e} t={elapsed:.2f}s")


@pytest.mark.slow
def test_criterion_05_concatenation_end_to_end(verdict):
    rows, ok = [], True
    for seed in SEEDS:
        f = _budget_run("routing", seed).fidelities()
        seed_ok = (
            f["none"] <= 0.93
            and f["zne+pec"] >= 0.95
            and f["none"] < max(f["zne"], f["pec"]) <= f["zne+pec"]
        )
        ok &= seed_ok
        rows.append(f"s{seed}:" + "/".join(f"{f[a]:.3f}" for a in ("none", "zne", "pec", "zne+pec")))
    elapsed = sum(_ELAPSED[("routing", s)] for s in SEEDS)
    ok &= elapsed < 600
    verdict(5, "concatenation end to end (none/zne/pec/zne+pec)", ok, " ".join(rows) + f" t={elapsed:.0f}s")


def test_criterion_06_zne_curve_behavior(verdict):
    t0 = time.perf_counter()
    result = run_routing(ExperimentConfig(epsilon_cx=0.02, shots=None, arms=["zne"], seed=0))
    ideal = simulate(transpile(build_routing_circuit()))
    not_monotone, not_improved = [], []
    for word, curve in result.arms["zne"].zne_curves().items():
        mags = np.abs(curve.values)
        if not np.all(np.diff(mags) < 0):
            not_monotone.append(word)
        truth = expectation(ideal, Observable(word))
        if not abs(curve.extrapolated - truth) < abs(curve.values[0] - truth):
            not_improved.append(word)
    elapsed = time.perf_counter() - t0
    ok = not not_monotone and not not_improved and elapsed < 60
    verdict(6, "ZNE curves shrink with lambda and poly2 improves every setting", ok,
            f"non-monotone={not_monotone} not-improved={not_improved} t={elapsed:.2f}s")


def test_criterion_07_extrapolator_exactness(verdict):
    rng = np.random.default_rng(7)
    lams = np.array([1.0, 3.0, 5.0, 7.0, 9.0])
    worst = {"linear": 0.0, "poly2": 0.0, "exponential": 0.0}
    for _ in range(200):
        a, b = rng.uniform(-1, 1, 2)
        worst["linear"] = max(worst["linear"], abs(extrapolate(list(zip(lams, a + b * lams)), Linear()).value - a))
        c = rng.uniform(-1, 1, 3)
        ys = c[0] + c[1] * lams + c[2] * lams**2
        worst["poly2"] = max(worst["poly2"], abs(extrapolate(list(zip(lams, ys)), Polynomial(2)).value - c[0]))
        a, b, r = rng.uniform(-0.5, 0.5), rng.uniform(0.2, 1.0) * rng.choice([-1, 1]), rng.uniform(0.5, 0.97)
        ys = a + b * r**lams
        worst["exponential"] = max(worst["exponential"], abs(extrapolate(list(zip(lams, ys)), Exponential()).value - (a + b)))
    example = extrapolate([(1, 0.8), (3, 0.6), (5, 0.5)], Polynomial(2)).value
    ok = max(worst.values()) <= 1e-6 and abs(example - 0.9375) <= 1e-9
    verdict(7, "extrapolator exactness", ok,
            " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" example={example:.12f}")


def test_criterion_08_readout_mitigation(verdict):
    rng = np.random.default_rng(8)
    worst, n = 0.0, 0
    while n < 100:
        dim = 2 ** int(rng.integers(1, 4))
        mat = np.eye(dim) + rng.uniform(0, 0.15, size=(dim, dim))
        mat /= mat.sum(axis=0)
        if np.linalg.cond(mat) >= 100:
            continue
        p = rng.dirichlet(np.ones(dim))
        worst = max(worst, float(np.max(np.abs(apply_mitigation(mat, mat @ p) - p))))
        n += 1
    base = dict(epsilon_cx=0.0, readout_p10=0.05, readout_p01=0.05, shots=100_000, arms=["none"], seed=8)
    f_mit = run_routing(ExperimentConfig(readout_mitigation=True, **base)).fidelities()["none"]
    f_raw = run_routing(ExperimentConfig(readout_mitigation=False, **base)).fidelities()["none"]
    ok = worst <= 1e-8 and f_mit > f_raw
    verdict(8, "readout mitigation", ok, f"round-trip={worst:.1e} F mitigated={f_mit:.4f} raw={f_raw:.4f}")


def test_criterion_09_tomography_oracle_equivalence(verdict):
    rng = np.random.default_rng(9)
    recon_err, fid_err = 0.0, 0.0
    for _ in range(100):
        rho = oracles.random_density(3, rng)
        data = TomographyData({s.word: oracles.setting_probabilities(rho, s.word) for s in generate_settings(3)})
        recon_err = max(recon_err, float(np.max(np.abs(reconstruct(data).rho - rho))))
        psi = oracles.random_pure(3, rng)
        fid_err = max(fid_err, abs(pure_fidelity(psi, rho) - uhlmann_fidelity(np.outer(psi, psi.conj()), rho)))
    ok = recon_err <= 1e-9 and fid_err <= 1e-10
    verdict(9, "tomography oracle equivalence", ok, f"reconstruction={recon_err:.1e} fidelity={fid_err:.1e}")


@pytest.mark.slow
def test_criterion_10_qram_hardness_ordering(verdict):
    f_r = {s: _budget_run("routing", s).fidelities() for s in SEEDS}
    f_q = {s: _budget_run("qram", s).fidelities() for s in SEEDS}
    base_r = np.mean([f["none"] for f in f_r.values()])
    base_q = np.mean([f["none"] for f in f_q.values()])
    # improvement of the concatenated arm over the baseline, seed-averaged
    gain_r = np.mean([f["zne+pec"] - f["none"] for f in f_r.values()])
    gain_q = np.mean([f["zne+pec"] - f["none"] for f in f_q.values()])
    ok = base_q < base_r and gain_q < gain_r
    verdict(10, "QRAM is harder and gains less", ok,
            f"F_none routing={base_r:.3f} qram={base_q:.3f} gain routing={gain_r:+.3f} qram={gain_q:+.3f}")


def _files(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(verdict, tmp_path):
    cfg = dict(BUDGET, shots=20_000, pec_samples=6, seed=11)
    outputs = []
    for i, workers in enumerate((1, 1, 4)):
        result = run_routing(ExperimentConfig(workers=workers, **cfg))
        out = tmp_path / f"run{i}"
        emit_report(result, out, formats=["csv"])
        data = result.to_dict(timestamps=False)
        data["config"].pop("workers")
        outputs.append((data, _files(out)))
    same_json = all(o[0] == outputs[0][0] for o in outputs)
    same_csv = all(o[1] == outputs[0][1] for o in outputs)
    n_files = len(outputs[0][1])
    verdict(11, "determinism across repeats and worker counts", same_json and same_csv and n_files > 1,
            f"result equal={same_json} {n_files} csv files equal={same_csv}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-rN"]))
