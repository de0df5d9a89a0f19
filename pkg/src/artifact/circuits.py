"""Layered circuits: heuristic ansatz builders, depth/runtime accounting, checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import qcore
from .errors import ContractError, ResourceError

SINGLE_QUBIT_KINDS = {"x", "rx", "ry", "rz", "u3"}
TWO_QUBIT_KINDS = {"uex", "cnot", "iswap", "swap"}
T1_BUDGET = 100e-6  # best transmon relaxation times, seconds


@dataclass(frozen=True)
class GateTimes:
    """Gate durations in seconds."""

    cnot: float = 200e-9
    exchange: float = 170e-9
    single_qubit: float = 25e-9

    def __post_init__(self):
        if min(self.cnot, self.exchange, self.single_qubit) <= 0:
            raise ContractError("gate times must be positive")

    def scaled(self, factor: float) -> "GateTimes":
        return GateTimes(self.cnot * factor, self.exchange * factor, self.single_qubit * factor)


@dataclass(frozen=True)
class Gate:
    """One gate application.

    Args:
        kind: One of ``x, rx, ry, rz, u3, uex, cnot, iswap, swap``.
        targets: Qubit indices (control first for ``cnot``).
        params: Angles; ``(theta, phi)`` for ``uex``, Euler angles for ``u3``.
    """

    kind: str
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind in SINGLE_QUBIT_KINDS:
            arity = 1
        elif self.kind in TWO_QUBIT_KINDS:
            arity = 2
        else:
            raise ContractError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != arity or len(set(self.targets)) != arity:
            raise ContractError(f"{self.kind} needs {arity} distinct targets")

    def unitary(self) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "x":
            return qcore.PAULI["X"]
        if k == "rx":
            return qcore.rx(p[0])
        if k == "ry":
            return qcore.ry(p[0])
        if k == "rz":
            return qcore.rz(p[0])
        if k == "u3":
            return qcore.u3(*p)
        if k == "uex":
            return qcore.u_ex(*p) if p else qcore.u_ex(0.0, 0.0)
        if k == "cnot":
            return qcore.CNOT
        if k == "iswap":
            return qcore.ISWAP
        return qcore.SWAP

    def duration(self, times: GateTimes) -> float:
        if self.kind == "uex":
            return times.exchange
        if self.kind in TWO_QUBIT_KINDS:
            return times.cnot
        return times.single_qubit

    def text(self) -> str:
        params = ",".join(f"{v:.6g}" for v in self.params)
        return f"{self.kind}({params})@{','.join(map(str, self.targets))}"


@dataclass(frozen=True)
class Circuit:
    """Ordered layers of parallel gates.

    Args:
        n_qubits: Register width.
        layers: Each layer is a tuple of gates with disjoint targets.
        initial_excitations: Qubits flipped by ``X`` before the layers run. This
            preparation is not counted in depth or runtime.
    """

    n_qubits: int
    layers: tuple[tuple[Gate, ...], ...] = ()
    initial_excitations: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ContractError("a circuit needs at least one qubit")
        layers = tuple(tuple(layer) for layer in self.layers)
        for i, layer in enumerate(layers):
            used: set[int] = set()
            for g in layer:
                if any(t >= self.n_qubits or t < 0 for t in g.targets):
                    raise ContractError(f"layer {i}: target out of range")
                if used & set(g.targets):
                    raise ContractError(f"layer {i}: overlapping targets")
                used |= set(g.targets)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "initial_excitations", tuple(self.initial_excitations))

    @classmethod
    def from_gates(cls, n_qubits: int, gates: Iterable[Gate], **kw) -> "Circuit":
        """Schedule gates as soon as possible into layers."""
        free = [0] * n_qubits
        layers: list[list[Gate]] = []
        for g in gates:
            slot = max(free[t] for t in g.targets)
            while len(layers) <= slot:
                layers.append([])
            layers[slot].append(g)
            for t in g.targets:
                free[t] = slot + 1
        return cls(n_qubits, tuple(tuple(l) for l in layers), **kw)

    def gates(self) -> Iterable[Gate]:
        for layer in self.layers:
            yield from layer


def _pairs(n: int, start: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(start, n - 1, 2)]


def build_exchange_heuristic(
    n_qubits: int,
    blocks: int,
    initial_excitations: int,
    params: Sequence[tuple[float, float]] | None = None,
    rng: np.random.Generator | None = None,
) -> Circuit:
    """Excitation-preserving heuristic: ``blocks`` x two staggered exchange layers.

    Each block applies exchange gates on pairs (0,1),(2,3),... and then on
    (1,2),(3,4),...; an empty second layer (two qubits) is elided.

    Args:
        n_qubits: Register width ``N >= 2``.
        blocks: Number of blocks ``D``.
        initial_excitations: Number of leading qubits flipped by ``X``.
        params: Optional ``(theta, phi)`` per gate, in gate order.
        rng: If given (and ``params`` is not), angles are drawn uniformly.
    """
    if n_qubits < 2:
        raise ContractError("need at least two qubits")
    if not 0 <= initial_excitations <= n_qubits:
        raise ContractError("initial excitations must lie in [0, N]")
    if blocks < 0:
        raise ContractError("blocks must be non-negative")
    pattern = [p for p in (_pairs(n_qubits, 0), _pairs(n_qubits, 1)) if p]
    n_gates = blocks * sum(len(p) for p in pattern)
    if params is None:
        if rng is not None:
            params = [(rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)) for _ in range(n_gates)]
        else:
            params = [(0.0, 0.0)] * n_gates
    if len(params) != n_gates:
        raise ContractError(f"expected {n_gates} parameter pairs, got {len(params)}")
    it = iter(params)
    layers = []
    for _ in range(blocks):
        for pairs in pattern:
            layers.append(tuple(Gate("uex", pair, next(it)) for pair in pairs))
    return Circuit(n_qubits, tuple(layers), tuple(range(initial_excitations)))


def build_cnot_heuristic(
    n_qubits: int,
    blocks: int,
    coupling_map: Sequence[tuple[int, int]] | None = None,
    angles: Sequence[tuple[float, float, float]] | None = None,
    rng: np.random.Generator | None = None,
) -> Circuit:
    """Hardware-style heuristic: ``blocks`` x (CNOT entangler + rotation layer).

    Args:
        n_qubits: Register width ``N >= 2``.
        blocks: Number of blocks ``D``; zero gives an empty circuit.
        coupling_map: ``(control, target)`` pairs for the entangler, applied in
            order. Defaults to the linear chain ``(0,1), (1,2), ...``.
        angles: Optional Euler angles per rotation, in gate order.
        rng: If given (and ``angles`` is not), angles are drawn uniformly.
    """
    if n_qubits < 2:
        raise ContractError("need at least two qubits")
    cmap = list(coupling_map) if coupling_map is not None else [(q, q + 1) for q in range(n_qubits - 1)]
    n_rot = blocks * n_qubits
    if angles is None:
        if rng is not None:
            angles = [tuple(rng.uniform(0, 2 * math.pi, 3)) for _ in range(n_rot)]
        else:
            angles = [(0.0, 0.0, 0.0)] * n_rot
    if len(angles) != n_rot:
        raise ContractError(f"expected {n_rot} angle triples, got {len(angles)}")
    it = iter(angles)
    layers: list[tuple[Gate, ...]] = []
    for _ in range(blocks):
        ent = Circuit.from_gates(n_qubits, [Gate("cnot", pair) for pair in cmap])
        layers.extend(ent.layers)
        layers.append(tuple(Gate("u3", (q,), next(it)) for q in range(n_qubits)))
    return Circuit(n_qubits, tuple(layers))


def circuit_depth(c: Circuit) -> int:
    """Number of non-empty layers on the critical path."""
    return sum(1 for layer in c.layers if layer)


def circuit_runtime(c: Circuit, times: GateTimes = GateTimes()) -> float:
    """Sum over layers of the slowest gate duration in the layer, in seconds."""
    return float(sum(max(g.duration(times) for g in layer) for layer in c.layers if layer))


def decompose_exchange(c: Circuit) -> Circuit:
    """Replace every exchange gate by its nine-layer CNOT decomposition."""
    layers: list[tuple[Gate, ...]] = []
    for layer in c.layers:
        if not any(g.kind == "uex" for g in layer):
            layers.append(layer)
            continue
        sub: list[list[Gate]] = [[] for _ in range(9)]
        for g in layer:
            if g.kind != "uex":
                sub[0].append(g)
                continue
            dec = qcore.decompose_u_ex(tuple(g.params) if g.params else (0.0, 0.0))
            for k, dl in enumerate(dec.layers):
                for dg in dl:
                    sub[k].append(Gate(dg.kind, tuple(g.targets[t] for t in dg.targets), dg.params))
        layers.extend(tuple(s) for s in sub)
    return Circuit(c.n_qubits, tuple(layers), c.initial_excitations)


def circuit_unitary(c: Circuit, include_preparation: bool = False) -> np.ndarray:
    """Dense unitary of the circuit (qubit 0 most significant)."""
    if c.n_qubits > 12:
        raise ResourceError("dense circuit unitary limited to 12 qubits")
    dims = (2,) * c.n_qubits
    u = np.eye(2**c.n_qubits, dtype=complex)
    if include_preparation:
        for q in c.initial_excitations:
            u = qcore._embed(qcore.PAULI["X"], [q], dims) @ u
    for layer in c.layers:
        for g in layer:
            u = qcore._embed(g.unitary(), list(g.targets), dims) @ u
    return u


@dataclass(frozen=True)
class ConservationReport:
    """Outcome of an excitation-number check.

    Args:
        conserving: True if the unitary is block diagonal in Hamming weight.
        witness: ``(row, col, value)`` of the first offending element, if any.
    """

    conserving: bool
    witness: tuple[int, int, complex] | None = None

    def __bool__(self):
        return self.conserving


def verify_excitation_conservation(c: Circuit, tol: float = 1e-9) -> ConservationReport:
    """Check that the circuit (without preparation) commutes with total excitation number."""
    if c.n_qubits > 10:
        raise ResourceError("dense verification limited to 10 qubits")
    u = circuit_unitary(c)
    weight = np.array([bin(i).count("1") for i in range(2**c.n_qubits)])
    mask = weight[:, None] != weight[None, :]
    bad = np.argwhere(mask & (np.abs(u) > tol))
    if len(bad):
        r, col = (int(x) for x in bad[0])
        return ConservationReport(False, (r, col, complex(u[r, col])))
    return ConservationReport(True)


def export_text(c: Circuit) -> str:
    """Line-oriented dump: one layer per line, gates as ``kind(params)@targets``."""
    lines = [f"# n_qubits={c.n_qubits}"]
    if c.initial_excitations:
        lines.append("# prep " + " ".join(f"x()@{q}" for q in c.initial_excitations))
    lines += [" ".join(g.text() for g in layer) for layer in c.layers]
    return "\n".join(lines) + "\n"


# Reference rows: (N, D0, depth exchange, depth decomposed, runtime exchange us, runtime decomposed us)
EXCHANGE_REFERENCE = {
    "H2": (4, 4, 8, 72, 0.68, 4.5),
    "LiH": (10, 14, 28, 252, 4.76, 31.5),
    "BeH2": (12, 18, 36, 324, 6.12, 40.5),
    "H2O": (12, 20, 40, 360, 6.8, 45.0),
}
# (N, D0, depth, runtime us)
CNOT_REFERENCE = {"H2": (4, 5, 80, 7.3), "LiH": (10, 14, 1890, 208.9)}


def depth_report(n_qubits: int, blocks: int, style: str, times: GateTimes = GateTimes()) -> dict:
    """Depth, runtime and T1-budget ratio for one heuristic circuit.

    Args:
        n_qubits: Register width.
        blocks: Number of blocks.
        style: ``exchange``, ``decomposed`` or ``cnot``.
        times: Gate durations.
    """
    if style in ("exchange", "decomposed"):
        c = build_exchange_heuristic(n_qubits, blocks, 0)
        if style == "decomposed":
            c = decompose_exchange(c)
    elif style == "cnot":
        c = build_cnot_heuristic(n_qubits, blocks)
    else:
        raise ContractError(f"unknown style {style!r}")
    runtime = circuit_runtime(c, times)
    out = {
        "n_qubits": n_qubits,
        "blocks": blocks,
        "style": style,
        "depth": circuit_depth(c),
        "runtime_s": runtime,
        "t1_budget_s": T1_BUDGET,
        "runtime_over_t1": runtime / T1_BUDGET,
    }
    table = CNOT_REFERENCE if style == "cnot" else EXCHANGE_REFERENCE
    for name, row in table.items():
        if row[0] == n_qubits and row[1] == blocks:
            out["reference_molecule"] = name
            if style == "cnot":
                out["reference_depth"], out["reference_runtime_us"] = row[2], row[3]
            elif style == "exchange":
                out["reference_depth"], out["reference_runtime_us"] = row[2], row[4]
            else:
                out["reference_depth"], out["reference_runtime_us"] = row[3], row[5]
            ref_us = out["reference_runtime_us"]
            out["runtime_matches_reference"] = abs(runtime * 1e6 - ref_us) < 5e-3
    return out
