"""H2 coefficient table ingestion, reduced two-qubit Hamiltonian, exact oracle."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError, ResourceError
from .qcore import PauliString, PauliSum

HEADER = ("R", "alpha0", "alpha1", "alpha2", "alpha3", "alpha4")
H2_LABELS = ("II", "ZI", "IZ", "ZZ", "XX")
SYMMETRY_TOL = 1e-6


@dataclass(frozen=True)
class H2CoefficientRow:
    """One bond length and its five Hamiltonian prefactors (Hartree).

    Args:
        bond_length: Interatomic distance in angstrom.
        alpha: Coefficients of ``II, ZI, IZ, ZZ, XX``.
        text: The decimal strings as read, kept for exact round trips.
    """

    bond_length: float
    alpha: tuple[float, float, float, float, float]
    text: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.bond_length > 0:
            raise ContractError("bond length must be positive")
        if len(self.alpha) != 5:
            raise ContractError("expected five coefficients")
        if abs(self.alpha[1] + self.alpha[2]) > SYMMETRY_TOL:
            raise ContractError(
                f"alpha1 = -alpha2 violated at R={self.bond_length}: {self.alpha[1]} vs {self.alpha[2]}"
            )


@dataclass(frozen=True)
class MoleculeTable:
    """Rows sorted by strictly increasing bond length."""

    rows: tuple[H2CoefficientRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise ContractError("a table needs at least one row")
        r = [row.bond_length for row in self.rows]
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ContractError("bond lengths must be strictly increasing")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def bond_lengths(self) -> list[float]:
        return [row.bond_length for row in self.rows]

    def row_at(self, bond_length: float, tol: float = 1e-9) -> H2CoefficientRow:
        """Exact table lookup; bond lengths between rows are not interpolated."""
        for row in self.rows:
            if abs(row.bond_length - bond_length) <= tol:
                return row
        raise ContractError(f"R={bond_length} is not a table point (no interpolation)")


def bundled_table_path() -> Path:
    return Path(str(resources.files("artifact") / "data" / "h2_sto3g.csv"))


def load_h2_table(source: str | Path | None = None) -> MoleculeTable:
    """Parse a coefficient file with header ``R,alpha0,...,alpha4``.

    Args:
        source: Path to the file; ``None`` loads the bundled STO-3G table.

    Raises:
        ParseError: Empty file, wrong header or malformed row (with line number).
        ContractError: Non-monotone bond lengths or broken symmetry.
    """
    path = Path(source) if source is not None else bundled_table_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_h2_table(text)


def parse_h2_table(text: str) -> MoleculeTable:
    lines = [ln for ln in text.splitlines()]
    if not any(ln.strip() for ln in lines):
        raise ParseError("empty coefficient file")
    reader = csv.reader(io.StringIO(text))
    rows = []
    header_seen = False
    for lineno, fields in enumerate(reader, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        fields = [f.strip() for f in fields]
        if not header_seen:
            if tuple(fields) != HEADER:
                raise ParseError(f"expected header {','.join(HEADER)}", lineno)
            header_seen = True
            continue
        if len(fields) != 6:
            raise ParseError(f"expected 6 columns, got {len(fields)}", lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"non-numeric value: {exc}", lineno) from exc
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", lineno)
        if rows and not values[0] > rows[-1].bond_length:
            raise ParseError("bond lengths must be strictly increasing", lineno)
        try:
            rows.append(H2CoefficientRow(values[0], tuple(values[1:]), tuple(fields)))
        except ContractError as exc:
            raise ParseError(str(exc), lineno) from exc
    if not rows:
        raise ParseError("no data rows")
    return MoleculeTable(tuple(rows))


def format_h2_table(table: MoleculeTable) -> str:
    """Serialise a table; rows read from text keep their original decimals."""
    out = [",".join(HEADER)]
    for row in table:
        if row.text is not None:
            out.append(",".join(row.text))
        else:
            out.append(",".join(repr(v) for v in (row.bond_length, *row.alpha)))
    return "\n".join(out) + "\n"


def write_h2_table(table: MoleculeTable, path: str | Path) -> None:
    Path(path).write_text(format_h2_table(table))


def build_h2_hamiltonian(row: H2CoefficientRow) -> PauliSum:
    """``a0 II + a1 ZI + a2 IZ + a3 ZZ + a4 XX`` for one table row."""
    return PauliSum(PauliString(lab, a) for lab, a in zip(H2_LABELS, row.alpha))


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def exact_spectrum(h: PauliSum | np.ndarray) -> SpectrumResult:
    """Dense Hermitian diagonalisation; the ground-truth oracle.

    Raises:
        ContractError: Non-Hermitian input.
        ResourceError: More than 12 qubits.
    """
    if isinstance(h, PauliSum):
        if h.n_qubits > 12:
            raise ResourceError("exact spectrum limited to 12 qubits")
        if not h.is_real():
            raise ContractError("Hamiltonian has complex coefficients")
        m = h.matrix()
    else:
        m = np.asarray(h, dtype=complex)
    if np.max(np.abs(m - m.conj().T)) > 1e-12:
        raise ContractError("Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh(m)
    return SpectrumResult(w, v)


def restricted_subspace_dim(n_qubits: int, n_excitations: int) -> int:
    """Size of the fixed-excitation subspace, ``C(N, n_e)``."""
    if not 0 <= n_excitations <= n_qubits:
        raise ContractError("need 0 <= n_e <= N")
    return math.comb(n_qubits, n_excitations)
