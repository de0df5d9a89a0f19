import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from artifact.errors import ContractError, ParseError, ResourceError
from artifact.hamiltonians import (
    build_h2_hamiltonian,
    exact_spectrum,
    format_h2_table,
    load_h2_table,
    parse_h2_table,
    restricted_subspace_dim,
    write_h2_table,
)
from artifact.qcore import PauliString, PauliSum

# Frozen ground energies (Ha) of the bundled table at 0.3, 0.7, 1.0 and 1.8 Angstrom.
FROZEN_GROUND = {0.3: -2.365715196730655, 0.7: -1.8921515890981424, 1.0: -1.630312542883046, 1.8: -1.2557917248161754}


def closed_form_ground(alpha):
    """Lowest eigenvalue of the one-excitation block, derived by hand."""
    a0, a1, a2, a3, a4 = alpha
    return a0 - a3 - math.hypot(a1 - a2, a4)


def test_bundled_table_shape():
    t = load_h2_table()
    assert len(t) == 16
    assert t.bond_lengths() == pytest.approx([round(0.3 + 0.1 * k, 2) for k in range(16)])


def test_ground_energy_oracles():
    t = load_h2_table()
    for row in t:
        e = exact_spectrum(build_h2_hamiltonian(row)).ground_energy
        assert e == pytest.approx(closed_form_ground(row.alpha), abs=1e-12)
    for r, e in FROZEN_GROUND.items():
        assert exact_spectrum(build_h2_hamiltonian(t.row_at(r))).ground_energy == pytest.approx(e, abs=1e-12)


def test_round_trip_is_bit_identical(tmp_path):
    t = load_h2_table()
    path = tmp_path / "t.csv"
    write_h2_table(t, path)
    assert format_h2_table(load_h2_table(path)) == format_h2_table(t)


@pytest.mark.parametrize(
    "text, line",
    [
        ("R,alpha0,alpha1,alpha2,alpha3,alpha4\n0.3,1,2,-2,0\n", 2),
        ("R,alpha0,alpha1,alpha2,alpha3,alpha4\n0.3,1,2,-2,0,x\n", 2),
        ("R,alpha0,alpha1,alpha2,alpha3,alpha4\n0.3,1,2,-2,0,1\n0.2,1,2,-2,0,1\n", 3),
        ("R,alpha0,alpha1,alpha2,alpha3,alpha4\n0.3,1,2,-2.1,0,1\n", 2),
    ],
)
def test_parse_errors_report_lines(text, line):
    with pytest.raises(ParseError) as exc:
        parse_h2_table(text)
    assert exc.value.line == line


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_h2_table(tmp_path / "absent.csv")


def test_spectrum_contracts():
    with pytest.raises(ResourceError):
        exact_spectrum(PauliSum([PauliString("Z" * 13)]))
    with pytest.raises(ContractError):
        exact_spectrum(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ContractError):
        restricted_subspace_dim(3, 4)
    assert restricted_subspace_dim(12, 6) == 924


@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_spectrum_sorted_and_orthonormal(alpha):
    alpha[2] = -alpha[1]
    h = PauliSum(PauliString(lab, a) for lab, a in zip(("II", "ZI", "IZ", "ZZ", "XX"), alpha))
    s = exact_spectrum(h)
    assert np.all(np.diff(s.eigenvalues) >= -1e-12)
    assert np.allclose(s.eigenvectors.conj().T @ s.eigenvectors, np.eye(4), atol=1e-10)
    # with a2 = -a1 the (|00>, |11>) block is a0 + a3 on the diagonal, a4 off it
    even = alpha[0] + alpha[3] - abs(alpha[4])
    assert s.ground_energy == pytest.approx(min(closed_form_ground(alpha), even), abs=1e-9)
