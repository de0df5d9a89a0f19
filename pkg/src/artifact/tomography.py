"""Process matrices, phase-fidelity model and two-qubit randomized benchmarking."""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import ArtifactError, ContractError, FitError
from .qcore import CNOT, H_GATE, ISWAP, PAULI, S_GATE, SWAP

PAULI_LABELS = tuple("".join(p) for p in itertools.product("IXYZ", repeat=2))
PAULI_BASIS = tuple(np.kron(PAULI[a], PAULI[b]) for a, b in PAULI_LABELS)
_CHI_BASIS = np.array([np.kron(pm, pn.T) for pm in PAULI_BASIS for pn in PAULI_BASIS])


# --------------------------------------------------------------------------- process matrices


@dataclass(frozen=True)
class ChiMatrix:
    """Process matrix in the two-qubit Pauli basis ``II, IX, ..., ZZ``.

    ``E(rho) = sum_mn chi_mn P_m rho P_n``. Trace-decreasing maps (leakage)
    have ``Tr chi < 1``.
    """

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=complex)
        if d.shape != (16, 16):
            raise ContractError("chi must be 16x16")
        if np.max(np.abs(d - d.conj().T)) > 1e-9:
            raise ContractError("chi must be Hermitian within 1e-9")
        if np.min(np.linalg.eigvalsh(0.5 * (d + d.conj().T))) < -1e-8:
            raise ContractError("chi must be positive semidefinite within 1e-8")
        if np.trace(d).real > 1 + 1e-9:
            raise ContractError("chi trace exceeds 1")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)


def channel_to_chi(superop: np.ndarray) -> ChiMatrix:
    """Convert a row-major superoperator to its Pauli process matrix."""
    s = np.asarray(superop, dtype=complex)
    if s.shape != (16, 16):
        raise ContractError("superoperator must be 16x16")
    chi = np.einsum("kab,ab->k", _CHI_BASIS.conj(), s).reshape(16, 16) / 16
    return ChiMatrix(0.5 * (chi + chi.conj().T))


def chi_to_channel(chi: ChiMatrix | np.ndarray) -> np.ndarray:
    """Row-major superoperator ``sum_mn chi_mn (P_m kron P_n^T)``."""
    c = chi.data if isinstance(chi, ChiMatrix) else np.asarray(chi, dtype=complex)
    return np.einsum("k,kab->ab", c.reshape(-1), _CHI_BASIS)


def unitary_chi(u: np.ndarray) -> ChiMatrix:
    u = np.asarray(u, dtype=complex)
    return channel_to_chi(np.kron(u, u.conj()))


def process_fidelity(chi_meas: ChiMatrix, chi_ideal: ChiMatrix) -> float:
    """``Tr(chi_meas chi_ideal)``."""
    return float(np.real(np.trace(chi_meas.data @ chi_ideal.data)))


# --------------------------------------------------------------------------- phase fidelity model


def analytic_phase_fidelity(phi, F0: float, phi0: float):
    """``F0 |e^{-2i(phi-phi0)} (1 + e^{i(phi-phi0)})^4| / 16 = F0 cos^4((phi-phi0)/2)``."""
    x = np.asarray(phi, dtype=float) - phi0
    return F0 * np.abs(np.exp(-2j * x) * (1 + np.exp(1j * x)) ** 4) / 16


@dataclass(frozen=True)
class FidelityFitResult:
    """Least-squares parameters of the phase-fidelity model.

    Args:
        F0: Peak fidelity.
        phi0: Phase of the peak, wrapped to ``(-pi, pi]``.
        residual: RMS residual.
        identifiable: False when the data carry no phase information.
    """

    F0: float
    phi0: float
    residual: float
    identifiable: bool = True

    def __post_init__(self):
        if not -1e-12 <= self.F0 <= 1 + 1e-12:
            raise ContractError("F0 must lie in [0, 1]")


def _wrap(x: float) -> float:
    return float(-((-x + math.pi) % (2 * math.pi) - math.pi))


def fit_phase_fidelity(samples: Sequence[tuple[float, float]]) -> FidelityFitResult:
    """Fit ``(F0, phi0)`` to ``(phi, F)`` samples.

    Raises:
        FitError: Fewer than 5 samples, a phase span not exceeding pi, or a
            failed optimisation.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 5 or arr.shape[1] != 2:
        raise FitError("need at least 5 (phi, F) samples")
    phi, f = arr[:, 0], arr[:, 1]
    ordered = np.sort(np.mod(phi, 2 * math.pi))
    gaps = np.diff(np.concatenate([ordered, [ordered[0] + 2 * math.pi]]))
    if 2 * math.pi - gaps.max() <= math.pi:
        raise FitError("samples must span more than pi of phase")
    if np.max(np.abs(f)) < 1e-12:
        return FidelityFitResult(0.0, 0.0, 0.0, identifiable=False)
    # a coarse scan seeds the optimiser away from the zero at phi0 + pi
    grid = np.linspace(-math.pi, math.pi, 73, endpoint=False)
    best = None
    for p0 in grid:
        shape = analytic_phase_fidelity(phi, 1.0, p0)
        denom = float(shape @ shape)
        amp = float(shape @ f) / denom if denom > 0 else 0.0
        res = float(np.sum((amp * shape - f) ** 2))
        if best is None or res < best[0]:
            best = (res, amp, p0)
    _, amp0, p00 = best
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                analytic_phase_fidelity,
                phi,
                f,
                p0=(min(max(amp0, 0.0), 1.0), p00),
                bounds=([0.0, p00 - math.pi], [1.0, p00 + math.pi]),
            )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"phase-fidelity fit failed: {exc}") from exc
    resid = float(np.sqrt(np.mean((analytic_phase_fidelity(phi, *popt) - f) ** 2)))
    return FidelityFitResult(float(popt[0]), _wrap(float(popt[1])), resid)


def fit_exponential_decay(t: Sequence[float], f: Sequence[float]) -> tuple[float, float]:
    """``A exp(-t / tau)`` least squares; returns ``(A, tau)``.

    Raises:
        FitError: Fewer than 3 points or a failed optimisation.
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(t) < 3:
        raise FitError("need at least 3 points")
    slope, icpt = np.polyfit(t, np.log(np.clip(f, 1e-12, None)), 1)
    p0 = (math.exp(icpt), -1.0 / slope if slope < 0 else 10 * (t.max() - t.min() + 1))
    try:
        popt, _ = curve_fit(lambda x, a, tau: a * np.exp(-x / tau), t, f, p0=p0, maxfev=10000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    return float(popt[0]), float(popt[1])


# --------------------------------------------------------------------------- Clifford group


def _phase_key(u: np.ndarray) -> bytes:
    """Hash of ``u`` modulo global phase."""
    u = np.asarray(u, dtype=complex)
    flat = u.reshape(-1)
    k = int(np.flatnonzero(np.abs(flat) > 1e-6)[0])
    v = u / (flat[k] / abs(flat[k]))
    # adding 0.0 turns -0.0 into 0.0 so equal matrices hash equally
    return (np.round(v, 6) + 0.0).tobytes()


def single_qubit_cliffords() -> list[np.ndarray]:
    """The 24 single-qubit Cliffords (modulo phase), generated by ``H`` and ``S``."""
    group = [np.eye(2, dtype=complex)]
    seen = {_phase_key(group[0])}
    i = 0
    while i < len(group):
        for g in (H_GATE, S_GATE):
            v = g @ group[i]
            k = _phase_key(v)
            if k not in seen:
                seen.add(k)
                group.append(v)
        i += 1
    return group


def _is_local(m: np.ndarray) -> bool:
    r = m.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    return np.linalg.svd(r, compute_uv=False)[1] < 1e-8


@dataclass(frozen=True)
class CliffordTable:
    """All 11520 two-qubit Cliffords with native ``iSWAP`` compilations.

    Element ``i`` is ``(a kron b) K (s kron s')`` with ``a, b`` single-qubit
    Cliffords, ``K`` one of ``I``, ``CNOT``, ``iSWAP`` or ``SWAP``, and
    ``s, s'`` from the order-3 subgroup that cycles ``X -> Y -> Z`` (only for
    the ``CNOT`` and ``iSWAP`` classes).

    Args:
        unitaries: ``(11520, 4, 4)`` array.
        native: Per element, a tuple of steps: a 4x4 local unitary or the
            string ``"iswap"``, applied left to right.
        index: Phase-normalised hash to element index.
    """

    unitaries: np.ndarray
    native: tuple
    index: dict

    def __len__(self):
        return len(self.unitaries)

    def lookup(self, u: np.ndarray) -> int:
        try:
            return self.index[_phase_key(u)]
        except KeyError as exc:
            raise ArtifactError("unitary is not in the Clifford table (table corrupt)") from exc

    def inverse(self, indices: Sequence[int]) -> int:
        """Index of the element undoing the sequence ``indices`` (applied in order)."""
        u = np.eye(4, dtype=complex)
        for i in indices:
            u = self.unitaries[i] @ u
        return self.lookup(u.conj().T)

    def iswap_count(self, i: int) -> int:
        return sum(1 for step in self.native[i] if isinstance(step, str))


def _native_two_qubit(c1: list[np.ndarray]) -> dict:
    """Sequences of locals and iSWAPs equal to CNOT and SWAP up to global phase."""
    locs = [np.kron(a, b) for a in c1 for b in c1]

    def solve(target):
        for mid in locs:
            m = ISWAP @ mid @ ISWAP
            for first in locs:
                rest = target @ np.linalg.inv(m @ first)
                if _is_local(rest):
                    return [first, "iswap", mid, "iswap", rest]
        raise ArtifactError("no two-iSWAP compilation found")

    cnot = solve(CNOT)
    # SWAP CNOT is in the iSWAP class: one iSWAP and locals
    target = SWAP @ CNOT
    for first in locs:
        rest = target @ np.linalg.inv(ISWAP @ first)
        if _is_local(rest):
            swap = cnot + [first, "iswap", rest]
            break
    else:  # pragma: no cover
        raise ArtifactError("no SWAP compilation found")
    return {"cnot": cnot, "swap": swap}


def _merge_locals(steps: list) -> tuple:
    out: list = []
    for s in steps:
        if not isinstance(s, str) and out and not isinstance(out[-1], str):
            out[-1] = s @ out[-1]
        else:
            out.append(s)
    return tuple(out)


def _native_unitary(steps) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for s in steps:
        u = (ISWAP if isinstance(s, str) else s) @ u
    return u


@functools.lru_cache(maxsize=1)
def clifford_table() -> CliffordTable:
    """Build (once) the two-qubit Clifford table."""
    c1 = single_qubit_cliffords()
    # order-3 element cycling the Paulis
    cyc = S_GATE @ H_GATE
    cyc = cyc.conj().T
    s1 = [np.eye(2, dtype=complex), cyc, cyc @ cyc]
    nat = _native_two_qubit(c1)
    classes: list[tuple[np.ndarray, list]] = [(np.eye(4, dtype=complex), [])]
    for kind, k in (("cnot", CNOT), ("iswap", ISWAP)):
        steps = nat["cnot"] if kind == "cnot" else ["iswap"]
        for a in s1:
            for b in s1:
                pre = np.kron(a, b)
                classes.append((k @ pre, [pre] + list(steps)))
    classes.append((SWAP, list(nat["swap"])))
    unitaries, native, index = [], [], {}
    for k, steps in classes:
        for a in c1:
            for b in c1:
                post = np.kron(a, b)
                u = post @ k
                key = _phase_key(u)
                if key in index:
                    raise ArtifactError("duplicate Clifford generated")
                index[key] = len(unitaries)
                unitaries.append(u)
                native.append(_merge_locals(steps + [post]))
    return CliffordTable(np.array(unitaries), tuple(native), index)


# --------------------------------------------------------------------------- channel providers


def _superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def ideal_provider(table: CliffordTable | None = None) -> Callable[[int], np.ndarray]:
    table = table or clifford_table()
    return lambda i: _superop(table.unitaries[i])


def depolarizing_provider(q: float, table: CliffordTable | None = None) -> Callable[[int], np.ndarray]:
    """Ideal Clifford followed by ``rho -> (1-q) rho + q I/4``."""
    if not 0 <= q <= 1:
        raise ContractError("q must lie in [0, 1]")
    table = table or clifford_table()
    dep = (1 - q) * np.eye(16) + q * np.outer(np.eye(4).reshape(-1), np.eye(4).reshape(-1)) / 4
    return lambda i: dep @ _superop(table.unitaries[i])


def native_provider(iswap_superop: np.ndarray, table: CliffordTable | None = None) -> Callable[[int], np.ndarray]:
    """Cliffords compiled to ideal locals and the given (noisy) iSWAP superoperator."""
    table = table or clifford_table()

    @functools.lru_cache(maxsize=None)
    def provide(i: int) -> np.ndarray:
        s = np.eye(16, dtype=complex)
        for step in table.native[i]:
            s = (iswap_superop if isinstance(step, str) else _superop(step)) @ s
        return s

    return provide


def device_provider(params, table: CliffordTable | None = None) -> Callable[[int], np.ndarray]:
    """Native provider whose iSWAP is the simulated device gate ``u_ex(pi, 0)``."""
    from .device import noisy_gate_channel

    return native_provider(noisy_gate_channel(math.pi, 0.0, params), table)


# --------------------------------------------------------------------------- randomized benchmarking


@dataclass(frozen=True)
class RBResult:
    """Randomized-benchmarking decay.

    Args:
        sequence_lengths: Clifford counts ``m`` (inverse excluded).
        survival: Mean ``|00>`` return probability per length.
        epg: ``(3/4)(1 - p)`` from the primary fit, per Clifford.
        fit_params: ``(A, B, p)`` of ``A p^m + B`` (primary fit).
        covariance: Covariance of the primary fit parameters.
        fit_fixed_b: ``(A, 1/4, p)`` with ``B`` held at the two-qubit asymptote.
        epg_fixed_b: EPG from that fit.
        primary: ``"free"`` or ``"fixed_b"``.
        iswaps_per_clifford: Mean native iSWAP count per sampled Clifford.
    """

    sequence_lengths: tuple[int, ...]
    survival: tuple[float, ...]
    epg: float
    fit_params: tuple[float, float, float]
    covariance: np.ndarray
    fit_fixed_b: tuple[float, float, float]
    epg_fixed_b: float
    primary: str
    iswaps_per_clifford: float

    @property
    def epg_per_iswap(self) -> float:
        return self.epg / self.iswaps_per_clifford if self.iswaps_per_clifford else math.nan


def _fit_fixed_b(m: np.ndarray, y: np.ndarray):
    """``A p^m + 1/4``: log-linear least squares, refined by curve_fit if needed."""
    z = y - 0.25
    if np.all(z > 0):
        slope, icpt = np.polyfit(m, np.log(z), 1)
        p = min(math.exp(slope), 1.0)
        a = math.exp(icpt)
        resid = a * p**m + 0.25 - y
        if np.max(np.abs(resid)) < 1e-3:
            return (a, 0.25, p), np.zeros((3, 3))
        p0 = (a, p)
    else:
        p0 = (0.75, 0.9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        fit, fcov = curve_fit(lambda x, a, p: a * p**x + 0.25, m, y, p0=p0, bounds=([-1, 0], [2, 1]))
    cov = np.zeros((3, 3))
    cov[np.ix_([0, 2], [0, 2])] = fcov
    return (float(fit[0]), 0.25, float(fit[1])), cov


def _fit_rb(m: np.ndarray, y: np.ndarray):
    fixed, fixed_cov = _fit_fixed_b(m, y)
    if np.ptp(y) < 1e-9:
        return fixed, fixed_cov, fixed, "fixed_b"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            free, cov = curve_fit(
                lambda x, a, b, p: a * p**x + b,
                m,
                y,
                p0=(fixed[0], 0.25, min(fixed[2], 0.999)),
                bounds=([-1, -1, 0], [2, 2, 1]),
            )
    except RuntimeError:
        return fixed, fixed_cov, fixed, "fixed_b"
    return (float(free[0]), float(free[1]), float(free[2])), cov, fixed, "free"


def rb_iswap(
    channel_provider: Callable[[int], np.ndarray],
    lengths: Sequence[int],
    sequences_per_length: int,
    rng: np.random.Generator,
    table: CliffordTable | None = None,
) -> RBResult:
    """Two-qubit randomized benchmarking.

    Each sequence draws ``m`` uniform Cliffords, appends the exact inverse,
    propagates ``|00><00|`` through the provided channels and records the
    return probability. Sequence ``s`` of length ``m`` uses its own generator
    spawned from ``rng``.

    Raises:
        ContractError: Fewer than two lengths or non-positive counts.
    """
    lengths = [int(m) for m in lengths]
    if len(set(lengths)) < 2 or min(lengths) < 1 or sequences_per_length < 1:
        raise ContractError("need at least two distinct positive lengths and one sequence each")
    table = table or clifford_table()
    n = len(table)
    survival = []
    counts = []
    streams = rng.spawn(len(lengths) * sequences_per_length)
    rho0 = np.zeros(16, dtype=complex)
    rho0[0] = 1.0
    for li, m in enumerate(lengths):
        acc = 0.0
        for s in range(sequences_per_length):
            r = streams[li * sequences_per_length + s]
            seq = [int(x) for x in r.integers(0, n, size=m)]
            seq.append(table.inverse(seq))
            v = rho0
            for i in seq:
                v = channel_provider(i) @ v
                counts.append(table.iswap_count(i))
            acc += float(v[0].real)
        survival.append(acc / sequences_per_length)
    m_arr = np.array(lengths, dtype=float)
    y = np.array(survival)
    params, cov, fixed, primary = _fit_rb(m_arr, y)
    return RBResult(
        sequence_lengths=tuple(lengths),
        survival=tuple(survival),
        epg=0.75 * (1 - params[2]),
        fit_params=params,
        covariance=np.asarray(cov),
        fit_fixed_b=fixed,
        epg_fixed_b=0.75 * (1 - fixed[2]),
        primary=primary,
        iswaps_per_clifford=float(np.mean(counts)) if counts else 0.0,
    )
