"""Single-exchange-gate trial states, energy estimation and SPSA minimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .hamiltonians import MoleculeTable, build_h2_hamiltonian
from .qcore import PauliSum, QuantumState, sample_pauli, u_ex

TWO_PI = 2 * math.pi
DEFAULT_SHOTS = 1024


def prepare_trial(theta: float, phi: float) -> QuantumState:
    """``u_ex(theta, phi)`` applied to ``X_pi|00> = |10>``.

    The result is ``i e^{i phi} sin(theta/2)|01> + cos(theta/2)|10>`` under the
    ``u_ex`` convention of :mod:`artifact.qcore`.
    """
    psi = u_ex(theta, phi)[:, 2].copy()
    psi[0] = psi[3] = 0.0
    return QuantumState.pure(psi)


@dataclass(frozen=True)
class EnergyMode:
    """How energies are estimated.

    Args:
        shots: ``None`` for exact expectation values, else samples per Pauli term.
        rng: Generator used in shot mode.
    """

    shots: int | None = None
    rng: np.random.Generator | None = field(default=None, compare=False)

    @classmethod
    def parse(cls, text: str, rng: np.random.Generator | None = None) -> "EnergyMode":
        """Parse ``exact`` or ``shots:<n>``."""
        if text == "exact":
            return cls()
        if text.startswith("shots:"):
            try:
                n = int(text.split(":", 1)[1])
            except ValueError as exc:
                raise ContractError(f"bad shot count in {text!r}") from exc
            if n < 1:
                raise ContractError("shot count must be >= 1")
            return cls(n, rng if rng is not None else np.random.default_rng())
        raise ContractError(f"mode must be 'exact' or 'shots:<n>', got {text!r}")

    @property
    def exact(self) -> bool:
        return self.shots is None


EXACT = EnergyMode()


def state_energy(state: QuantumState, h: PauliSum, mode: EnergyMode = EXACT) -> float:
    """Energy of an arbitrary two-qubit state, exact or shot-sampled per term."""
    if mode.exact:
        from .qcore import expectation

        return expectation(state, h)
    if mode.rng is None:
        raise ContractError("shot mode needs an rng")
    total = 0.0
    for term in h:
        if set(term.label) == {"I"}:
            total += term.coeff.real
        else:
            total += sample_pauli(state, term, mode.shots, mode.rng)
    return total


def energy(theta: float, phi: float, h: PauliSum, mode: EnergyMode = EXACT) -> float:
    """``<psi(theta, phi)|H|psi(theta, phi)>`` for the two-qubit Hamiltonian ``h``.

    Args:
        theta: Exchange angle.
        phi: Exchange phase.
        h: Two-qubit Hamiltonian.
        mode: Exact or per-term shot sampling (identity term added analytically).
    """
    if h.n_qubits != 2:
        raise ContractError("energy expects a two-qubit Hamiltonian")
    return state_energy(prepare_trial(theta, phi), h, mode)


@dataclass(frozen=True)
class SPSAConfig:
    """SPSA gains and stopping rule.

    Args:
        alpha_exponent: Step-size decay exponent.
        a_scale: Step-size prefactor.
        gamma_exponent: Perturbation decay exponent.
        c_scale: Perturbation prefactor.
        convergence_window: Number of recent energies whose spread sets the
            stopping threshold.
        max_iterations: Hard iteration cap.
        seed: Seed for the perturbation directions.
        stability: Offset ``A`` in ``a / (k + A)^alpha``.
    """

    alpha_exponent: float = 2.0
    a_scale: float = 20.0
    gamma_exponent: float = 0.101
    c_scale: float = 0.1
    convergence_window: int = 5
    max_iterations: int = 200
    seed: int = 0
    stability: float = 0.0

    def __post_init__(self):
        if not self.c_scale > 0 or not self.a_scale > 0:
            raise ContractError("a_scale and c_scale must be positive")
        if self.convergence_window < 2:
            raise ContractError("convergence_window must be >= 2")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be >= 1")


@dataclass(frozen=True)
class VQEResult:
    """Outcome of one minimisation.

    Args:
        theta_opt: Final exchange angle.
        phi_opt: Final phase.
        energy: Objective re-evaluated at the final point.
        iterations: Iterations performed.
        trace: ``(theta, phi, E)`` after each iteration, starting with the initial point.
        converged: Whether the stopping rule fired before the cap.
    """

    theta_opt: float
    phi_opt: float
    energy: float
    iterations: int
    trace: tuple[tuple[float, float, float], ...]
    converged: bool


def _checked(f: Callable[[float, float], float], x: np.ndarray) -> float:
    val = float(f(float(x[0]), float(x[1])))
    if not math.isfinite(val):
        raise NumericalError(f"objective returned {val} at theta={x[0]:.6g}, phi={x[1]:.6g}")
    return val


def spsa_minimize(
    objective: Callable[[float, float], float],
    config: SPSAConfig = SPSAConfig(),
    start: Sequence[float] = (0.0, 0.0),
) -> VQEResult:
    """Minimise ``objective(theta, phi)`` with simultaneous-perturbation steps.

    Iteration ``k`` uses ``c_k = c / k^gamma`` and ``a_k = a / (k + A)^alpha``,
    a Rademacher direction ``d``, gradient ``(f(x + c_k d) - f(x - c_k d)) / (2 c_k d)``
    and the update ``x <- x - a_k g`` (angles wrapped mod 2 pi). It stops once
    ``k >= window`` and ``|E_k - E_{k-1}|`` is below the sample standard
    deviation of the last ``window`` energies, where ``E_k`` is the objective at
    the updated point.

    Raises:
        NumericalError: If the objective returns a non-finite value.
    """
    rng = np.random.default_rng(config.seed)
    x = np.mod(np.asarray(start, dtype=float), TWO_PI)
    energies = [_checked(objective, x)]
    trace = [(float(x[0]), float(x[1]), energies[0])]
    converged = False
    k = 0
    for k in range(1, config.max_iterations + 1):
        ck = config.c_scale / k**config.gamma_exponent
        ak = config.a_scale / (k + config.stability) ** config.alpha_exponent
        d = rng.choice((-1.0, 1.0), size=2)
        fp = _checked(objective, x + ck * d)
        fm = _checked(objective, x - ck * d)
        g = (fp - fm) / (2 * ck) / d
        x = np.mod(x - ak * g, TWO_PI)
        energies.append(_checked(objective, x))
        trace.append((float(x[0]), float(x[1]), energies[-1]))
        w = config.convergence_window
        if k >= w:
            spread = float(np.std(energies[-w:], ddof=1))
            if abs(energies[-1] - energies[-2]) < spread:
                converged = True
                break
    final = _checked(objective, x)
    return VQEResult(float(x[0]), float(x[1]), final, k, tuple(trace), converged)


def dissociation_curve(
    table: MoleculeTable,
    config: SPSAConfig = SPSAConfig(),
    mode: EnergyMode = EXACT,
    runs: int = 5,
) -> list[tuple[float, VQEResult]]:
    """Best-of-``runs`` VQE per table row.

    Run ``j`` uses seed ``config.seed + j``; in shot mode each run draws from a
    generator seeded the same way, so the curve is reproducible.
    """
    if runs < 1:
        raise ContractError("runs must be >= 1")
    out = []
    for row in table:
        h = build_h2_hamiltonian(row)
        best = None
        for j in range(runs):
            cfg = SPSAConfig(**{**config.__dict__, "seed": config.seed + j})
            if mode.exact:
                m = EXACT
            else:
                m = EnergyMode(mode.shots, np.random.default_rng(config.seed + j))
            res = spsa_minimize(lambda t, p: energy(t, p, h, m), cfg)
            if best is None or res.energy < best.energy:
                best = res
        out.append((row.bond_length, best))
    return out
