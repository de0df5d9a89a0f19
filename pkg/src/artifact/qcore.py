"""Dense linear algebra, Pauli algebra, gate unitaries and small-register states.

Conventions used across the package:

* Basis ordering is big-endian, ``|q1 q2 ...>``: the leftmost label character of a
  Pauli string acts on qubit index 0, which is the most significant bit.
* ``Z|0> = +|0>`` and ``Z|1> = -|1>``; an "excitation" is a qubit in ``|1>``.
* Superoperators act on row-major vectorised density matrices, so
  ``vec(A rho B) = kron(A, B.T) @ vec(rho)``.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ResourceError

MAX_QUBITS = 14

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S_GATE = np.diag([1, 1j]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
SIGMA_MINUS = SIGMA_PLUS.T.copy()


def rx(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([cmath.exp(-0.5j * angle), cmath.exp(0.5j * angle)])


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """Generic single-qubit rotation ``Rz(phi) Ry(theta) Rz(lam)``."""
    return rz(phi) @ ry(theta) @ rz(lam)


def u3_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Euler angles ``(theta, phi, lam)`` with ``u = e^{ia} u3(theta, phi, lam)``."""
    u = np.asarray(u, dtype=complex)
    det = np.linalg.det(u)
    v = u / np.sqrt(det)
    theta = 2 * math.atan2(abs(v[1, 0]), abs(v[0, 0]))
    # v[1,1] = e^{i(phi+lam)/2} cos, v[1,0] = e^{i(phi-lam)/2} sin
    plus = 2 * cmath.phase(v[1, 1]) if abs(v[1, 1]) > 1e-12 else 0.0
    minus = 2 * cmath.phase(v[1, 0]) if abs(v[1, 0]) > 1e-12 else 0.0
    phi = (plus + minus) / 2
    lam = (plus - minus) / 2
    return theta, phi, lam


def equal_up_to_phase(a: np.ndarray, b: np.ndarray) -> float:
    """Max-norm distance between ``a`` and ``b`` after optimal global phase."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 1e-15 else 1.0
    return float(np.max(np.abs(a - phase * b)))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


# --------------------------------------------------------------------------- Pauli algebra


@dataclass(frozen=True)
class PauliString:
    """A weighted tensor product of single-qubit Pauli operators.

    Args:
        label: String over ``IXYZ``; character ``k`` acts on qubit ``k``.
        coeff: Complex prefactor.
    """

    label: str
    coeff: complex = 1.0

    def __post_init__(self):
        if not isinstance(self.label, str) or len(self.label) < 1:
            raise ContractError("Pauli label must be a non-empty string")
        bad = set(self.label) - set("IXYZ")
        if bad:
            raise ContractError(f"invalid Pauli characters {sorted(bad)} in {self.label!r}")
        c = complex(self.coeff)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ContractError("Pauli coefficient must be finite")
        object.__setattr__(self, "coeff", c)

    @property
    def n_qubits(self) -> int:
        return len(self.label)

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self)


class PauliSum:
    """Sum of Pauli strings on a common register, with equal labels merged.

    Args:
        terms: Pauli strings, all of the same length. Duplicates are merged by
            adding coefficients; first-seen order is kept.
    """

    def __init__(self, terms: Iterable[PauliString]):
        merged: dict[str, complex] = {}
        n = None
        for t in terms:
            if n is None:
                n = t.n_qubits
            elif t.n_qubits != n:
                raise ContractError("all Pauli strings in a sum must have equal length")
            merged[t.label] = merged.get(t.label, 0) + t.coeff
        if n is None:
            raise ContractError("a PauliSum needs at least one term")
        self._n = n
        self._terms = tuple(PauliString(k, v) for k, v in merged.items())

    @classmethod
    def from_dict(cls, coeffs: Mapping[str, complex]) -> "PauliSum":
        return cls(PauliString(k, v) for k, v in coeffs.items())

    @property
    def terms(self) -> tuple[PauliString, ...]:
        return self._terms

    @property
    def n_qubits(self) -> int:
        return self._n

    def coefficients(self) -> dict[str, complex]:
        return {t.label: t.coeff for t in self._terms}

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(t.coeff.imag) <= tol for t in self._terms)

    def matrix(self) -> np.ndarray:
        if self._n > MAX_QUBITS:
            raise ResourceError(f"{self._n} qubits exceeds the dense limit {MAX_QUBITS}")
        out = np.zeros((2**self._n, 2**self._n), dtype=complex)
        for t in self._terms:
            out += pauli_matrix(t)
        return out

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        return PauliSum(self._terms + tuple(other))

    def __mul__(self, scalar: complex) -> "PauliSum":
        return PauliSum(PauliString(t.label, t.coeff * scalar) for t in self._terms)

    __rmul__ = __mul__

    def __repr__(self):
        body = " + ".join(f"({t.coeff:.6g}){t.label}" for t in self._terms)
        return f"PauliSum({body})"


def pauli_matrix(p: PauliString) -> np.ndarray:
    """Dense ``2^N x 2^N`` matrix of ``coeff * P_0 (x) P_1 (x) ...``.

    Args:
        p: The Pauli string. Its first character acts on qubit 0.

    Raises:
        ResourceError: If the register is wider than ``MAX_QUBITS``.
    """
    if p.n_qubits > MAX_QUBITS:
        raise ResourceError(f"{p.n_qubits} qubits exceeds the dense limit {MAX_QUBITS}")
    return p.coeff * kron_all(PAULI[c] for c in p.label)


def pauli_decompose(matrix: np.ndarray, tol: float = 1e-14) -> PauliSum:
    """Expand a ``2^N x 2^N`` matrix in the Pauli basis (complex coefficients)."""
    m = np.asarray(matrix, dtype=complex)
    dim = m.shape[0]
    n = int(round(math.log2(dim)))
    if 2**n != dim or m.shape != (dim, dim):
        raise ContractError("matrix must be square with power-of-two dimension")
    terms = []
    for label in itertools.product("IXYZ", repeat=n):
        lab = "".join(label)
        c = np.trace(pauli_matrix(PauliString(lab)) @ m) / dim
        if abs(c) > tol:
            terms.append(PauliString(lab, c))
    if not terms:
        terms.append(PauliString("I" * n, 0.0))
    return PauliSum(terms)


# --------------------------------------------------------------------------- states


@dataclass(frozen=True)
class QuantumState:
    """Pure state vector or density matrix over subsystems of given dimensions.

    Args:
        kind: ``"pure"`` or ``"mixed"``.
        dims: Subsystem dimensions, e.g. ``(2, 2)`` or ``(3, 3, 3)``.
        data: Amplitude vector or density matrix. Stored read-only.
    """

    kind: str
    dims: tuple[int, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("pure", "mixed"):
            raise ContractError(f"unknown state kind {self.kind!r}")
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ContractError("dims must be positive")
        object.__setattr__(self, "dims", dims)
        data = np.array(self.data, dtype=complex)
        dim = int(np.prod(dims))
        if self.kind == "pure":
            if data.shape != (dim,):
                raise ContractError(f"pure state needs shape ({dim},), got {data.shape}")
            if abs(np.linalg.norm(data) - 1) > 1e-10:
                raise ContractError("pure state must be normalised within 1e-10")
        else:
            if data.shape != (dim, dim):
                raise ContractError(f"density matrix needs shape ({dim},{dim}), got {data.shape}")
            if np.max(np.abs(data - data.conj().T)) > 1e-10:
                raise ContractError("density matrix must be Hermitian within 1e-10")
            if abs(np.trace(data).real - 1) > 1e-9:
                raise ContractError("density matrix must have unit trace within 1e-9")
            if np.min(np.linalg.eigvalsh(data)) < -1e-9:
                raise ContractError("density matrix must be positive semidefinite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def pure(cls, vector, dims: Sequence[int] | None = None) -> "QuantumState":
        vector = np.asarray(vector, dtype=complex)
        return cls("pure", tuple(dims) if dims else _qubit_dims(vector.shape[0]), vector)

    @classmethod
    def mixed(cls, rho, dims: Sequence[int] | None = None) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        return cls("mixed", tuple(dims) if dims else _qubit_dims(rho.shape[0]), rho)

    @classmethod
    def basis(cls, bits: str | Sequence[int], dims: Sequence[int] | None = None) -> "QuantumState":
        """Computational basis state, e.g. ``basis("10")`` for ``|10>``."""
        levels = [int(b) for b in bits]
        dims = tuple(dims) if dims else (2,) * len(levels)
        if len(dims) != len(levels) or any(l >= d for l, d in zip(levels, dims)):
            raise ContractError("basis label does not fit the dimensions")
        vec = np.zeros(int(np.prod(dims)), dtype=complex)
        vec[int(np.ravel_multi_index(levels, dims))] = 1
        return cls("pure", dims, vec)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def density_matrix(self) -> np.ndarray:
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def to_mixed(self) -> "QuantumState":
        return QuantumState("mixed", self.dims, self.density_matrix())

    def probabilities(self) -> np.ndarray:
        if self.kind == "pure":
            return np.abs(self.data) ** 2
        return np.clip(np.real(np.diag(self.data)), 0, None)


def _qubit_dims(dim: int) -> tuple[int, ...]:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise ContractError(f"dimension {dim} is not a power of two; pass dims explicitly")
    return (2,) * n


# --------------------------------------------------------------------------- exchange gate


@dataclass(frozen=True)
class ExchangeGateParams:
    """Parameters of the exchange gate.

    Args:
        theta: Mixing angle in radians, ``0 <= theta <= 2 pi``.
        phi: Phase in radians; stored modulo ``2 pi``.
        duration: Pulse length in seconds, ``theta / pi * tau_pi``. Optional.
    """

    theta: float
    phi: float = 0.0
    duration: float | None = None
    tau_pi: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ContractError("gate angles must be finite")
        if not (-1e-12 <= self.theta <= 2 * math.pi + 1e-12):
            raise ContractError("theta must lie in [0, 2 pi]")
        object.__setattr__(self, "phi", float(self.phi) % (2 * math.pi))
        if self.duration is not None and self.tau_pi is not None:
            if abs(self.duration - self.theta / math.pi * self.tau_pi) > 1e-12:
                raise ContractError("duration must equal theta / pi * tau_pi within 1e-12 s")

    @classmethod
    def from_pulse(cls, tau: float, tau_pi: float, phi: float = 0.0) -> "ExchangeGateParams":
        """Build from a pulse length ``tau`` given the full-transfer time ``tau_pi``."""
        return cls(math.pi * tau / tau_pi, phi, tau, tau_pi)


def u_ex(theta: float | ExchangeGateParams, phi: float | None = None) -> np.ndarray:
    """Exchange-gate unitary.

    Identity on ``|00>`` and ``|11>``; on ``(|01>, |10>)`` the block
    ``[[cos t/2, i e^{i phi} sin t/2], [i e^{-i phi} sin t/2, cos t/2]]``.

    Args:
        theta: Mixing angle, or an ``ExchangeGateParams`` (then ``phi`` is ignored).
        phi: Phase angle.
    """
    if isinstance(theta, ExchangeGateParams):
        theta, phi = theta.theta, theta.phi
    phi = 0.0 if phi is None else phi
    # snap rounding residue so multiples of pi give exact permutation entries
    c, s = (0.0 if abs(x) < 1e-15 else x for x in (math.cos(theta / 2), math.sin(theta / 2)))
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = 1j * cmath.exp(1j * phi) * s
    u[2, 1] = 1j * cmath.exp(-1j * phi) * s
    return u


def decompose_u_ex(params: ExchangeGateParams | tuple[float, float]):
    """CNOT + single-qubit circuit equal to ``u_ex(params)`` up to global phase.

    ``U = Rz_1(-phi) exp(i theta/4 XX) exp(i theta/4 YY) Rz_1(phi)``; each
    two-body exponential is a CNOT pair around a ``Rz`` on the target, and the
    basis changes are merged into single-qubit layers. The result has nine
    layers and four CNOTs.

    Returns:
        A two-qubit ``artifact.circuits.Circuit``.
    """
    from .circuits import Circuit, Gate

    if isinstance(params, ExchangeGateParams):
        theta, phi = params.theta, params.phi
    else:
        theta, phi = params
    v = S_GATE @ H_GATE  # maps Z to Y under conjugation
    first_q0 = v.conj().T @ rz(phi)
    mid = H_GATE @ v
    last_q0 = rz(-phi) @ H_GATE

    def single(u, q):
        return Gate("u3", (q,), u3_angles(u))

    layers = [
        (single(first_q0, 0), single(v.conj().T, 1)),
        (Gate("cnot", (0, 1)),),
        (Gate("rz", (1,), (-theta / 2,)),),
        (Gate("cnot", (0, 1)),),
        (single(mid, 0), single(mid, 1)),
        (Gate("cnot", (0, 1)),),
        (Gate("rz", (1,), (-theta / 2,)),),
        (Gate("cnot", (0, 1)),),
        (single(last_q0, 0), single(H_GATE, 1)),
    ]
    return Circuit(2, tuple(layers))


# --------------------------------------------------------------------------- evolution


def apply_unitary(state: QuantumState, u: np.ndarray, targets: Sequence[int]) -> QuantumState:
    """Apply ``u`` to the listed subsystems (in the given order).

    Args:
        state: Input state.
        u: Unitary on the tensor product of the target subsystems.
        targets: Distinct subsystem indices; the first is the most significant
            factor of ``u``.

    Raises:
        ContractError: On repeated targets or a dimension mismatch.
    """
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ContractError("targets must be distinct")
    if any(t < 0 or t >= len(state.dims) for t in targets):
        raise ContractError("target index out of range")
    tdims = [state.dims[t] for t in targets]
    tdim = int(np.prod(tdims))
    u = np.asarray(u, dtype=complex)
    if u.shape != (tdim, tdim):
        raise ContractError(f"unitary shape {u.shape} does not match target dimension {tdim}")
    full = _embed(u, targets, state.dims)
    if state.kind == "pure":
        return QuantumState("pure", state.dims, full @ state.data)
    rho = full @ state.data @ full.conj().T
    return QuantumState("mixed", state.dims, 0.5 * (rho + rho.conj().T))


def _embed(u: np.ndarray, targets: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Full-register matrix of ``u`` acting on ``targets``."""
    n = len(dims)
    rest = [k for k in range(n) if k not in targets]
    order = list(targets) + rest
    dt = int(np.prod([dims[k] for k in targets]))
    dr = int(np.prod([dims[k] for k in rest])) if rest else 1
    big = np.kron(u, np.eye(dr))
    perm_dims = [dims[k] for k in order]
    dim = int(np.prod(dims))
    # big acts on subsystems in `order`; permute back to natural order
    big = big.reshape(perm_dims * 2)
    inv = np.argsort(order)
    axes = list(inv) + [n + i for i in inv]
    return big.transpose(axes).reshape(dim, dim)


def expectation(state: QuantumState, obs: PauliSum | PauliString | np.ndarray) -> float:
    """Real expectation value ``<psi|H|psi>`` or ``Tr(rho H)``.

    Raises:
        ContractError: If the observable is not Hermitian or dimensions differ.
    """
    if isinstance(obs, PauliString):
        obs = PauliSum([obs])
    if isinstance(obs, PauliSum):
        if not obs.is_real():
            raise ContractError("observable has complex coefficients")
        mat = obs.matrix()
    else:
        mat = np.asarray(obs, dtype=complex)
        if np.max(np.abs(mat - mat.conj().T)) > 1e-12:
            raise ContractError("observable matrix is not Hermitian")
    if mat.shape[0] != state.dim:
        raise ContractError("observable and state dimensions differ")
    if state.kind == "pure":
        val = np.vdot(state.data, mat @ state.data)
    else:
        val = np.trace(state.data @ mat)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if abs(val.imag) > 1e-10 * scale:
        raise ContractError(f"expectation has imaginary residual {val.imag:.3e}")
    return float(val.real)


_BASIS_CHANGE = {"I": np.eye(2), "Z": np.eye(2), "X": H_GATE, "Y": H_GATE @ S_GATE.conj().T}


def sample_pauli(
    state: QuantumState, p: PauliString, shots: int, rng: np.random.Generator
) -> float:
    """Shot-sampled estimate of ``coeff * <P>``.

    Each qubit is rotated to the eigenbasis of its Pauli factor (``H`` for X,
    ``S^dag`` then ``H`` for Y), bitstrings are sampled, and the parity over
    the non-identity positions gives one eigenvalue per shot.

    Args:
        state: Qubit register state.
        p: Pauli string to measure.
        shots: Number of samples, at least 1.
        rng: NumPy generator; the only source of randomness.
    """
    if shots < 1:
        raise ContractError("shots must be >= 1")
    if p.n_qubits != len(state.dims) or any(d != 2 for d in state.dims):
        raise ContractError("Pauli string does not match the qubit register")
    rot = kron_all(_BASIS_CHANGE[c] for c in p.label)
    if state.kind == "pure":
        probs = np.abs(rot @ state.data) ** 2
    else:
        probs = np.real(np.diag(rot @ state.data @ rot.conj().T))
    probs = np.clip(probs, 0, None)
    probs = probs / probs.sum()
    n = p.n_qubits
    support = [k for k, c in enumerate(p.label) if c != "I"]
    idx = np.arange(2**n)
    parity = np.zeros(2**n, dtype=int)
    for k in support:
        parity ^= (idx >> (n - 1 - k)) & 1
    eig = 1 - 2 * parity
    counts = rng.multinomial(shots, probs)
    return float(p.coeff.real * np.dot(counts, eig) / shots)


def operator_on(op: np.ndarray, target: int, n_qubits: int) -> np.ndarray:
    """Single-qubit operator ``op`` on qubit ``target`` of an ``n_qubits`` register."""
    mats = [np.eye(2, dtype=complex)] * n_qubits
    mats[target] = np.asarray(op, dtype=complex)
    return kron_all(mats)
