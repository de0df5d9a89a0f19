import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.errors import ContractError, FitError
from artifact.qcore import CNOT, ISWAP, SWAP, u_ex
from artifact.tomography import (
    ChiMatrix,
    analytic_phase_fidelity,
    channel_to_chi,
    chi_to_channel,
    clifford_table,
    depolarizing_provider,
    fit_exponential_decay,
    fit_phase_fidelity,
    ideal_provider,
    native_provider,
    process_fidelity,
    rb_iswap,
    single_qubit_cliffords,
    unitary_chi,
)
from conftest import random_unitary

angles = st.floats(0, 2 * math.pi, allow_nan=False)


def test_chi_round_trip(rng):
    for _ in range(10):
        u = random_unitary(rng, 4)
        s = np.kron(u, u.conj())
        chi = channel_to_chi(s)
        assert np.allclose(chi_to_channel(chi), s)
        assert chi.trace == pytest.approx(1.0)
        assert process_fidelity(chi, chi) == pytest.approx(1.0)


def test_identity_chi_is_single_entry():
    chi = unitary_chi(np.eye(4))
    expected = np.zeros((16, 16))
    expected[0, 0] = 1
    assert np.allclose(chi.data, expected)


def test_chi_contracts():
    with pytest.raises(ContractError):
        ChiMatrix(np.eye(16))
    with pytest.raises(ContractError):
        ChiMatrix(np.diag([-0.1] + [0.0] * 15))
    with pytest.raises(ContractError):
        channel_to_chi(np.eye(4))


@given(angles, angles)
def test_process_fidelity_of_exchange_gates(phi, phi0):
    f = process_fidelity(unitary_chi(u_ex(math.pi, phi)), unitary_chi(u_ex(math.pi, phi0)))
    assert f == pytest.approx(analytic_phase_fidelity(phi, 1.0, phi0), abs=1e-10)


def test_phase_fit_recovers_parameters():
    rng = np.random.default_rng(0)
    phis = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    for f0, p0 in [(0.93, 0.2), (0.8, -2.5), (1.0, math.pi)]:
        data = analytic_phase_fidelity(phis, f0, p0) + rng.normal(0, 0.01, phis.size)
        res = fit_phase_fidelity(list(zip(phis, data)))
        assert res.F0 == pytest.approx(f0, abs=0.02)
        assert abs((res.phi0 - p0 + math.pi) % (2 * math.pi) - math.pi) < 0.05


def test_phase_fit_edge_cases():
    with pytest.raises(FitError):
        fit_phase_fidelity([(0.0, 1.0)] * 4)
    with pytest.raises(FitError):
        fit_phase_fidelity([(x, 1.0) for x in np.linspace(0, 2.0, 10)])
    res = fit_phase_fidelity([(x, 0.0) for x in np.linspace(0, 2 * math.pi, 10, endpoint=False)])
    assert not res.identifiable


def test_exponential_fit():
    t = np.linspace(0, 2, 8)
    a, tau = fit_exponential_decay(t, 0.97 * np.exp(-t / 3.0))
    assert a == pytest.approx(0.97)
    assert tau == pytest.approx(3.0)
    with pytest.raises(FitError):
        fit_exponential_decay([0, 1], [1, 0.5])


def test_clifford_group_structure():
    assert len(single_qubit_cliffords()) == 24
    table = clifford_table()
    assert len(table) == 11520
    for u in (CNOT, ISWAP, SWAP, np.eye(4)):
        table.lookup(u)


def test_clifford_closure_and_native_compilation():
    table = clifford_table()
    rng = np.random.default_rng(1)
    for _ in range(300):
        i, j = rng.integers(0, len(table), 2)
        table.lookup(table.unitaries[j] @ table.unitaries[i])
    for i in rng.integers(0, len(table), 300):
        u = np.eye(4, dtype=complex)
        for step in table.native[i]:
            u = (ISWAP if isinstance(step, str) else step) @ u
        k = table.lookup(u)
        assert k == i


def test_inverse_undoes_sequence():
    table = clifford_table()
    seq = [5, 900, 11000, 42]
    u = np.eye(4, dtype=complex)
    for i in seq + [table.inverse(seq)]:
        u = table.unitaries[i] @ u
    assert table.lookup(u) == table.lookup(np.eye(4))


def test_rb_ideal_and_depolarizing():
    table = clifford_table()
    lengths = [1, 2, 4, 8, 16]
    ideal = rb_iswap(ideal_provider(table), lengths, 5, np.random.default_rng(0), table)
    assert ideal.epg <= 1e-6
    dep = rb_iswap(depolarizing_provider(0.02, table), lengths, 5, np.random.default_rng(0), table)
    assert dep.epg == pytest.approx(0.75 * 0.02, rel=0.05)
    assert dep.fit_params[1] == pytest.approx(0.25, abs=1e-6)


def test_rb_native_provider_counts_iswaps():
    table = clifford_table()
    res = rb_iswap(native_provider(np.kron(ISWAP, ISWAP.conj()), table), [1, 3, 5], 4, np.random.default_rng(2), table)
    assert res.epg <= 1e-6
    assert 1.0 < res.iswaps_per_clifford < 2.0


def test_rb_determinism_and_contracts():
    table = clifford_table()
    p = depolarizing_provider(0.05, table)
    a = rb_iswap(p, [1, 4, 8], 3, np.random.default_rng(9), table)
    b = rb_iswap(p, [1, 4, 8], 3, np.random.default_rng(9), table)
    assert a.survival == b.survival
    with pytest.raises(ContractError):
        rb_iswap(p, [4], 3, np.random.default_rng(9), table)
    with pytest.raises(ContractError):
        depolarizing_provider(1.5, table)
