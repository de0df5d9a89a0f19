"""Equation-of-motion excited states from ground-state expectation values."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, RankDeficiencyError
from .qcore import SIGMA_MINUS, SIGMA_PLUS, PauliSum, QuantumState

METRIC_CUTOFF = 1e-10


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def double_commutator(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Symmetrised double commutator ``([[A,B],C] + [A,[B,C]]) / 2``.

    Raises:
        ContractError: If the operators are not square with equal shapes.
    """
    a, b, c = (np.asarray(m, dtype=complex) for m in (a, b, c))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not a.shape == b.shape == c.shape:
        raise ContractError("double commutator needs square operators of equal shape")
    return 0.5 * (commutator(commutator(a, b), c) + commutator(a, commutator(b, c)))


@dataclass(frozen=True)
class ExcitationPool:
    """Excitation operators ``E_mu`` on the qubit register."""

    operators: tuple[np.ndarray, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.operators:
            raise ContractError("pool must be nonempty")
        if len(self.operators) != len(self.labels):
            raise ContractError("one label per operator")
        shape = self.operators[0].shape
        if any(op.shape != shape for op in self.operators):
            raise ContractError("pool operators must share a shape")

    def __len__(self):
        return len(self.operators)


def default_pool() -> ExcitationPool:
    """Singles on each qubit, double creation and transfer from qubit 2 to qubit 1."""
    eye = np.eye(2, dtype=complex)
    ops = (
        np.kron(SIGMA_PLUS, eye),
        np.kron(eye, SIGMA_PLUS),
        np.kron(SIGMA_PLUS, SIGMA_PLUS),
        np.kron(SIGMA_PLUS, SIGMA_MINUS),
    )
    return ExcitationPool(ops, ("s+1", "s+2", "s+1 s+2", "s+1 s-2"))


@dataclass(frozen=True)
class EOMSystem:
    """Blocks of the pseudo-eigenvalue problem."""

    M: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    W: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """``A = [[M, Q], [Q*, M*]]`` and metric ``S = [[V, W], [-W*, -V*]]``."""
        a = np.block([[self.M, self.Q], [self.Q.conj(), self.M.conj()]])
        s = np.block([[self.V, self.W], [-self.W.conj(), -self.V.conj()]])
        return a, s


def _expect(rho: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.trace(rho @ op))


def build_eom_system(
    ground: QuantumState, h: PauliSum | np.ndarray, pool: ExcitationPool | None = None
) -> EOMSystem:
    """Assemble ``M, Q, V, W`` in the supplied ground state.

    ``M = <[E_m^dag, H, E_n]>``, ``Q = -<[E_m^dag, H, E_n^dag]>``,
    ``V = <[E_m^dag, E_n]>`` and ``W = -<[E_m^dag, E_n^dag]>``. Mixed states
    use ``Tr(rho X)`` with no purification.
    """
    pool = pool or default_pool()
    hm = h.matrix() if isinstance(h, PauliSum) else np.asarray(h, dtype=complex)
    if hm.shape != pool.operators[0].shape or ground.dim != hm.shape[0]:
        raise ContractError("state, Hamiltonian and pool dimensions differ")
    rho = ground.density_matrix()
    n = len(pool)
    M, Q, V, W = (np.zeros((n, n), dtype=complex) for _ in range(4))
    for i, ei in enumerate(pool.operators):
        eid = ei.conj().T
        for j, ej in enumerate(pool.operators):
            ejd = ej.conj().T
            M[i, j] = _expect(rho, double_commutator(eid, hm, ej))
            Q[i, j] = -_expect(rho, double_commutator(eid, hm, ejd))
            V[i, j] = _expect(rho, commutator(eid, ej))
            W[i, j] = -_expect(rho, commutator(eid, ejd))
    return EOMSystem(M, Q, V, W)


@dataclass(frozen=True)
class EOMResult:
    """Positive excitation energies, ascending, and ``E0 + dE``.

    Args:
        excitation_energies: Distinct positive roots.
        absolute_energies: Ground energy plus each root.
        all_roots: Full real spectrum of the reduced problem, ascending.
    """

    excitation_energies: np.ndarray
    absolute_energies: np.ndarray
    all_roots: np.ndarray


def solve_eom(
    system: EOMSystem,
    ground_energy: float,
    cutoff: float = METRIC_CUTOFF,
    imag_tol: float = 1e-8,
    dedup_tol: float = 1e-9,
) -> EOMResult:
    """Solve ``A x = dE S x`` on the range of the metric.

    The metric is diagonalised and eigenvectors with ``|lambda| <= cutoff`` are
    projected out; the reduced problem ``Sr^-1 Ar`` is then an ordinary
    eigenproblem. Roots come in ``+/-`` pairs; the upper half (``dE >= 0``)
    is returned, deduplicated.

    Raises:
        RankDeficiencyError: If the metric has no usable range.
    """
    a, s = system.matrices()
    s_h = 0.5 * (s + s.conj().T)
    lam, u = np.linalg.eigh(s_h)
    keep = np.abs(lam) > cutoff
    if not keep.any():
        if np.max(np.abs(a)) <= cutoff:
            z = np.zeros(1)
            return EOMResult(z, z + ground_energy, np.zeros(len(lam)))
        raise RankDeficiencyError("metric is null on the whole pool", u[:, ~keep])
    p = u[:, keep]
    ar = p.conj().T @ a @ p
    sr = p.conj().T @ s_h @ p
    try:
        roots = np.linalg.eigvals(np.linalg.solve(sr, ar))
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"reduced metric is singular: {exc}", u[:, ~keep]) from exc
    real = np.sort(roots[np.abs(roots.imag) <= imag_tol].real)
    upper = real[len(real) - len(real) // 2 :] if len(real) % 2 == 0 else real[real >= -dedup_tol]
    upper = np.clip(upper, 0.0, None)
    distinct: list[float] = []
    for r in upper:
        if not distinct or r - distinct[-1] > dedup_tol:
            distinct.append(float(r))
    exc = np.array(distinct)
    return EOMResult(exc, exc + ground_energy, real)


def excited_states(
    ground: QuantumState, h: PauliSum, pool: ExcitationPool | None = None
) -> EOMResult:
    """Convenience wrapper: assemble and solve with ``E0 = <H>`` in ``ground``."""
    from .qcore import expectation

    e0 = expectation(ground, h)
    return solve_eom(build_eom_system(ground, h, pool), e0)


def pauli_expansion_check(
    ground: QuantumState, h: PauliSum, pool: ExcitationPool | None = None
) -> float:
    """Max deviation between block entries and their Pauli-expectation expansions.

    Each block operator is decomposed into Pauli strings and rebuilt from
    ``sum_k c_k <P_k>``; the return value certifies the blocks are measurable
    term by term.
    """
    from .qcore import expectation, pauli_decompose

    pool = pool or default_pool()
    hm = h.matrix()
    rho = ground.density_matrix()
    worst = 0.0
    for ei in pool.operators:
        for ej in pool.operators:
            for op in (double_commutator(ei.conj().T, hm, ej), commutator(ei.conj().T, ej)):
                direct = _expect(rho, op)
                via = sum(
                    t.coeff * expectation(ground, type(t)(t.label, 1.0)) for t in pauli_decompose(op)
                )
                worst = max(worst, abs(direct - via))
    return worst


__all__: Sequence[str] = (
    "double_commutator",
    "ExcitationPool",
    "default_pool",
    "EOMSystem",
    "build_eom_system",
    "EOMResult",
    "solve_eom",
    "excited_states",
    "pauli_expansion_check",
)
