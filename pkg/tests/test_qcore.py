import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.errors import ContractError
from artifact.qcore import (
    CNOT,
    ISWAP,
    PAULI,
    SIGMA_PLUS,
    ExchangeGateParams,
    PauliString,
    PauliSum,
    QuantumState,
    apply_unitary,
    decompose_u_ex,
    equal_up_to_phase,
    expectation,
    pauli_decompose,
    pauli_matrix,
    sample_pauli,
    u3,
    u3_angles,
    u_ex,
)
from conftest import random_density, random_unitary

angles = st.floats(0, 2 * math.pi, allow_nan=False)


def test_pauli_ordering_big_endian():
    m = pauli_matrix(PauliString("ZI"))
    assert np.allclose(np.diag(m), [1, 1, -1, -1])
    assert np.allclose(np.diag(pauli_matrix(PauliString("IZ"))), [1, -1, 1, -1])


def test_sigma_plus_raises_excitation():
    assert np.allclose(SIGMA_PLUS @ np.array([1, 0]), [0, 1])


def test_pauli_string_rejects_bad_labels():
    with pytest.raises(ContractError):
        PauliString("XA")
    with pytest.raises(ContractError):
        PauliString("")
    with pytest.raises(ContractError):
        PauliSum([PauliString("X"), PauliString("XX")])


def test_pauli_sum_merges_duplicates():
    h = PauliSum([PauliString("XZ", 0.5), PauliString("XZ", 0.25), PauliString("II", 1.0)])
    assert len(list(h)) == 2
    assert np.allclose(h.matrix(), 0.75 * np.kron(PAULI["X"], PAULI["Z"]) + np.eye(4))


def test_iswap_is_exchange_at_pi():
    assert np.array_equal(u_ex(math.pi, 0.0), ISWAP)


def test_exchange_block_convention():
    u = u_ex(1.0, 0.3)
    c, s = math.cos(0.5), math.sin(0.5)
    assert u[1, 2] == pytest.approx(1j * np.exp(0.3j) * s)
    assert u[2, 1] == pytest.approx(1j * np.exp(-0.3j) * s)
    assert u[1, 1] == pytest.approx(c)
    assert u[0, 0] == 1 and u[3, 3] == 1


def test_exchange_params_validation():
    with pytest.raises(ContractError):
        ExchangeGateParams(7.0, 0.0)
    with pytest.raises(ContractError):
        ExchangeGateParams(math.pi, 0.0, duration=100e-9, tau_pi=170e-9)
    p = ExchangeGateParams.from_pulse(85e-9, 170e-9, 7.0)
    assert p.theta == pytest.approx(math.pi / 2)
    assert 0 <= p.phi < 2 * math.pi


@given(angles, angles)
def test_decomposition_matches_up_to_phase(theta, phi):
    from artifact.circuits import circuit_unitary

    c = decompose_u_ex((theta, phi))
    assert equal_up_to_phase(circuit_unitary(c), u_ex(theta, phi)) < 1e-10
    assert sum(1 for g in c.gates() if g.kind == "cnot") == 4
    assert len(c.layers) == 9


@given(angles, angles)
def test_exchange_is_unitary(theta, phi):
    u = u_ex(theta, phi)
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


def test_u3_angles_roundtrip(rng):
    for _ in range(50):
        u = random_unitary(rng, 2)
        assert equal_up_to_phase(u3(*u3_angles(u)), u) < 1e-9


def test_pauli_decompose_roundtrip(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = m + m.conj().T
    h = pauli_decompose(m)
    assert np.allclose(h.matrix(), m)
    assert h.is_real()


def test_state_invariants():
    with pytest.raises(ContractError):
        QuantumState.pure([1, 1])
    with pytest.raises(ContractError):
        QuantumState.mixed(np.diag([0.5, 0.6]))
    with pytest.raises(ContractError):
        QuantumState.mixed(np.diag([1.5, -0.5]))
    with pytest.raises(ContractError):
        QuantumState.mixed(np.array([[0.5, 0.1], [0.2, 0.5]]))
    s = QuantumState.basis("10")
    assert np.allclose(s.probabilities(), [0, 0, 1, 0])


def test_apply_unitary_matches_dense(rng):
    s = QuantumState.pure(np.kron(np.kron([1, 0], [0, 1]), np.array([1, 1]) / math.sqrt(2)))
    out = apply_unitary(s, CNOT, [2, 0])
    # CNOT with control qubit 2, target qubit 0
    ref = np.zeros(8, dtype=complex)
    ref[0b010] = ref[0b111] = 1 / math.sqrt(2)
    assert np.allclose(out.data, ref)
    with pytest.raises(ContractError):
        apply_unitary(s, CNOT, [0, 0])


def test_expectation_pure_and_mixed_agree(rng):
    h = pauli_decompose(random_density(rng, 4))
    psi = random_unitary(rng, 4)[:, 0]
    s = QuantumState.pure(psi)
    assert expectation(s, h) == pytest.approx(expectation(s.to_mixed(), h))
    with pytest.raises(ContractError):
        expectation(s, np.array([[0, 1], [0, 0]]))


def test_sample_pauli_converges_and_is_seeded(rng):
    s = QuantumState.pure(np.array([1, 1j, 1, -1j]) / 2)
    for label in ("XX", "YI", "ZZ", "XY"):
        p = PauliString(label, 0.7)
        exact = expectation(s, p)
        est = sample_pauli(s, p, 200000, np.random.default_rng(5))
        assert est == pytest.approx(exact, abs=0.01)
        assert est == sample_pauli(s, p, 200000, np.random.default_rng(5))
    with pytest.raises(ContractError):
        sample_pauli(s, PauliString("XX"), 0, rng)
