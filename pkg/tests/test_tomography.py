import logging

import numpy as np
import pytest

import oracles
from qemroute.circuit import Circuit, build_routing_circuit, routing_target_state, transpile, unitary_of
from qemroute.densim import NoiseModel, diagonal_probabilities, is_density_matrix, simulate
from qemroute.tomography import (
    Reconstruction,
    TomographyData,
    basis_change,
    fidelity,
    generate_settings,
    project_psd,
    pure_fidelity,
    reconstruct,
    sanitize,
    uhlmann_fidelity,
)

ROUTING = transpile(build_routing_circuit())


def _exact_data(rho, m):
    return TomographyData({s.word: oracles.setting_probabilities(rho, s.word) for s in generate_settings(m)})


def _measured_data(c, noise=NoiseModel()):
    return TomographyData(
        {s.word: diagonal_probabilities(simulate(s.append_to(c), noise)) for s in generate_settings(c.width)}
    )


# -- settings ----------------------------------------------------------------


def test_generate_settings_examples():
    assert [s.word for s in generate_settings(1)] == ["X", "Y", "Z"]
    words = [s.word for s in generate_settings(3)]
    assert len(words) == 27 and words[0] == "XXX" and words[-1] == "ZZZ"
    assert words == sorted(words)
    assert generate_settings(2, qubits=(0, 5))[0].qubits == (0, 5)
    with pytest.raises(ValueError):
        generate_settings(0)
    with pytest.raises(ValueError):
        generate_settings(2, qubits=(0,))


@pytest.mark.parametrize("letter", "XYZ")
def test_basis_change_matches_projector_oracle(letter):
    rng = np.random.default_rng(ord(letter))
    rho = oracles.random_density(1, rng)
    u = unitary_of(Circuit(1, tuple(basis_change(letter, 0))))
    p = np.real(np.diag(u @ rho @ u.conj().T))
    assert np.max(np.abs(p - oracles.setting_probabilities(rho, letter))) < 1e-12
    with pytest.raises(ValueError):
        basis_change("W", 0)


def test_setting_circuits_match_projector_oracle():
    rho = simulate(ROUTING, NoiseModel(0.05))
    for s in generate_settings(3):
        got = diagonal_probabilities(simulate(s.append_to(ROUTING), NoiseModel(0.05)))
        assert np.max(np.abs(got - oracles.setting_probabilities(rho, s.word))) < 1e-12


# -- reconstruction ----------------------------------------------------------


def test_noiseless_routing_reconstructs_to_fidelity_one():
    rec = reconstruct(_measured_data(ROUTING))
    psi = routing_target_state()
    assert abs(fidelity(np.outer(psi, psi.conj()), rec).fidelity - 1) < 1e-10
    assert rec.removed_mass < 1e-12


def test_noisy_exact_reconstruction_equals_simulated_state():
    noise = NoiseModel(0.02)
    rec = reconstruct(_measured_data(ROUTING, noise))
    assert np.max(np.abs(rec.rho - simulate(ROUTING, noise))) < 1e-9


def test_round_trip_random_states():
    rng = np.random.default_rng(99)
    for _ in range(100):
        rho = oracles.random_density(3, rng)
        rec = reconstruct(_exact_data(rho, 3))
        assert np.max(np.abs(rec.rho - rho)) < 1e-10


def test_perturbed_data_is_projected_and_logged(caplog):
    psi = routing_target_state()
    data = _exact_data(np.outer(psi, psi.conj()), 3)
    # push XXX beyond what a pure state allows
    p = data.probabilities["XXX"].copy()
    p[0] += 0.04
    p[7] -= 0.04
    data.probabilities["XXX"] = p
    with caplog.at_level(logging.INFO, logger="qemroute.tomography"):
        rec = reconstruct(data)
    assert rec.removed_mass > 0
    assert is_density_matrix(rec.rho)
    assert abs(np.trace(rec.rho) - 1) < 1e-12
    assert "negative eigenvalue mass" in caplog.text


def test_mitigated_entries_outside_unit_interval_are_clipped(caplog):
    rho = np.eye(8) / 8
    data = _exact_data(rho, 3)
    data.probabilities["XYZ"] = np.array([0.3, -0.05, 0.15, 0.15, 0.1, 0.1, 0.15, 0.1])
    data.provenance = "mitigated"
    with caplog.at_level(logging.INFO, logger="qemroute.tomography"):
        rec = reconstruct(data)
    assert rec.clipped_settings == ["XYZ"]
    assert "clipped" in caplog.text
    fixed, changed = sanitize(np.array([0.3, -0.05, 0.15, 0.15, 0.1, 0.1, 0.15, 0.1]))
    assert changed and fixed.min() == 0 and abs(fixed.sum() - 1) < 1e-15


def test_far_out_of_range_expectation_is_an_error():
    # only possible when clipping is switched off
    data = _exact_data(np.eye(8) / 8, 3)
    data.probabilities["XXX"] = np.array([1.1, 0, 0, 0, 0, 0, 0, -0.1])
    data.clip = False
    with pytest.raises(ValueError, match="out of range"):
        reconstruct(data)


def test_missing_setting_is_an_error():
    data = _exact_data(np.eye(8) / 8, 3)
    del data.probabilities["YZX"]
    with pytest.raises(ValueError, match="missing"):
        reconstruct(data)


def test_psd_projection_is_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = (a + a.conj().T) / 2
        h = h / np.trace(h).real if abs(np.trace(h)) > 0.1 else h + np.eye(4)
        once, _ = project_psd(h)
        twice, removed = project_psd(once)
        assert np.max(np.abs(once - twice)) < 1e-12
        assert removed < 1e-12


# -- fidelity ----------------------------------------------------------------


def test_fidelity_examples():
    psi = routing_target_state()
    pure = np.outer(psi, psi.conj())
    assert abs(uhlmann_fidelity(pure, pure) - 1) < 1e-12
    assert abs(uhlmann_fidelity(pure, np.eye(8) / 8) - 0.125) < 1e-12
    with pytest.raises(ValueError):
        uhlmann_fidelity(pure, np.eye(4) / 4)
    with pytest.raises(ValueError):
        uhlmann_fidelity(pure, np.diag([1.2, -0.2, 0, 0, 0, 0, 0, 0]))


def test_fidelity_matches_literal_oracle_and_is_symmetric():
    rng = np.random.default_rng(31)
    # full rank keeps the oracle's literal square roots well conditioned
    for _ in range(50):
        a, b = oracles.random_density(3, rng, rank=8), oracles.random_density(3, rng, rank=8)
        f = uhlmann_fidelity(a, b)
        assert abs(f - oracles.uhlmann(a, b)) < 1e-9
        assert abs(f - uhlmann_fidelity(b, a)) < 1e-9
        assert 0 <= f <= 1 + 1e-12


def test_pure_state_shortcut_agrees():
    rng = np.random.default_rng(8)
    for _ in range(50):
        psi = oracles.random_pure(3, rng)
        sigma = oracles.random_density(3, rng)
        f = fidelity(np.outer(psi, psi.conj()), sigma).fidelity
        assert abs(f - pure_fidelity(psi, sigma)) < 1e-10


def test_fidelity_report_carries_reconstruction_flags():
    rec = Reconstruction(np.eye(8) / 8, 0.01, ["XXX"])
    rep = fidelity(np.eye(8) / 8, rec, reference="mixed")
    assert rep.fidelity == pytest.approx(1.0)
    assert rep.removed_mass == 0.01 and rep.clipped_settings == ["XXX"]
    assert type(rep).from_dict(rep.to_dict()) == rep
