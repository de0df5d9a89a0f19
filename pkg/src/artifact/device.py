"""Pulse-level model of two transmons coupled through a flux-modulated coupler.

Frequencies in the public types are angular (rad/s) and times are seconds.
Internally the numerics run in nanoseconds and rad/ns. The coupled-Duffing
Hamiltonian conserves total excitation number and the collapse operators only
lower it, so gate simulations that start with at most two excitations are
carried out exactly on the 10-state subspace ``n1 + n2 + nc <= 2`` of the
27-state register.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, curve_fit, minimize_scalar

from .errors import CalibrationError, ContractError, FitError, NumericalError, ParseError
from .qcore import PauliSum, QuantumState

TWO_PI = 2 * math.pi
GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6
NS = 1e-9
US = 1e-6
SUBSTEPS = 400
_PHYS_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))


# --------------------------------------------------------------------------- parameters


@dataclass(frozen=True)
class TransmonParams:
    """One transmon.

    Args:
        omega: Angular frequency, rad/s.
        anharmonicity: rad/s (negative for transmons).
        g: Coupling to the coupler, rad/s; zero for the coupler itself.
        T1: Relaxation time, s.
        T2: Echo coherence time, s. Carried for reference only; the master
            equation uses ``T1`` and ``T2_star``.
        T2_star: Ramsey coherence time, s.
    """

    omega: float
    anharmonicity: float
    g: float
    T1: float
    T2: float
    T2_star: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ContractError("omega must be positive")
        if not (self.T1 > 0 and self.T2_star > 0 and self.T2 > 0):
            raise ContractError("coherence times must be positive")


@dataclass(frozen=True)
class FluxDrive:
    """Coupler flux ``Phi(t) = phi_dc + delta cos(omega_phi t + phase_phi)``.

    Args:
        phi_dc: Bias in flux quanta.
        delta: Modulation amplitude in flux quanta; ``None`` means calibrate.
        omega_phi: Modulation frequency, rad/s; ``None`` means calibrate.
        phase_phi: Drive phase, rad.
        phi_offset: Offset between drive phase and gate phase; ``None`` means calibrate.
    """

    phi_dc: float = 0.195
    delta: float | None = None
    omega_phi: float | None = None
    phase_phi: float = 0.0
    phi_offset: float | None = None

    def __post_init__(self):
        if abs(self.phi_dc) + (abs(self.delta) if self.delta is not None else 0.0) >= 0.5:
            raise ContractError("|phi_dc| + delta must stay below 0.5 flux quanta")
        if self.omega_phi is not None and not self.omega_phi > 0:
            raise ContractError("omega_phi must be positive")

    @property
    def resolved(self) -> bool:
        return None not in (self.delta, self.omega_phi, self.phi_offset)


@dataclass(frozen=True)
class DeviceParams:
    """Two qubits, coupler, drive and the layout used to read out energies.

    Args:
        q1: First qubit (the one excited by the preparation pulse).
        q2: Second qubit.
        tc: Tunable coupler (its ``omega`` is the zero-flux frequency).
        drive: Flux modulation.
        levels_per_transmon: Fixed at 3.
        tau_pi: Target full-transfer time, s.
        hamiltonian_qubits: Physical qubit index (0 = q1, 1 = q2) that carries
            each qubit of the two-qubit Hamiltonian.
    """

    q1: TransmonParams
    q2: TransmonParams
    tc: TransmonParams
    drive: FluxDrive = FluxDrive()
    levels_per_transmon: int = 3
    tau_pi: float = 170e-9
    hamiltonian_qubits: tuple[int, int] = (1, 0)

    def __post_init__(self):
        if self.levels_per_transmon != 3:
            raise ContractError("the model uses exactly three levels per transmon")
        if not self.tau_pi > 0:
            raise ContractError("tau_pi must be positive")
        if tuple(sorted(self.hamiltonian_qubits)) != (0, 1):
            raise ContractError("hamiltonian_qubits must be a permutation of (0, 1)")

    @property
    def transmons(self) -> tuple[TransmonParams, TransmonParams, TransmonParams]:
        return (self.q1, self.q2, self.tc)

    @property
    def dim(self) -> int:
        return self.levels_per_transmon**3

    def with_coherence(self, which: str, **changes) -> "DeviceParams":
        """Copy with ``T1``/``T2``/``T2_star`` of ``q1``, ``q2`` or ``tc`` replaced."""
        if which not in ("q1", "q2", "tc"):
            raise ContractError("which must be q1, q2 or tc")
        t = dataclasses.replace(getattr(self, which), **changes)
        return dataclasses.replace(self, **{which: t})

    def noiseless(self) -> "DeviceParams":
        """Copy with all decoherence switched off (infinite coherence times)."""
        out = self
        for w in ("q1", "q2", "tc"):
            out = out.with_coherence(w, T1=math.inf, T2=math.inf, T2_star=math.inf)
        return out


@dataclass(frozen=True)
class LindbladRates:
    """Collapse rates of one transmon, 1/s.

    Args:
        gamma_minus: Relaxation rate ``1/T1``.
        gamma_z: Dephasing rate ``(1/T2* - 1/(2 T1)) / 2``.
    """

    gamma_minus: float
    gamma_z: float

    def __post_init__(self):
        if self.gamma_minus < 0 or self.gamma_z < 0:
            raise ContractError("rates must be non-negative")


def rates_from_params(p: TransmonParams) -> LindbladRates:
    """Lindblad rates of one transmon; unphysical ``T2* > 2 T1`` clamps ``gamma_z`` to 0."""
    gm = 1.0 / p.T1
    gz = 0.5 * (1.0 / p.T2_star - 1.0 / (2.0 * p.T1))
    if gz < 0:
        warnings.warn(
            f"T2*={p.T2_star:.3g} s exceeds 2*T1={2 * p.T1:.3g} s; dephasing rate clamped to 0",
            stacklevel=2,
        )
        gz = 0.0
    return LindbladRates(gm, gz)


def coupler_frequency(phi: float | np.ndarray, omega_c0: float) -> float | np.ndarray:
    """``omega_c0 * sqrt|cos(pi phi)|`` with ``phi`` in flux quanta."""
    return omega_c0 * np.sqrt(np.abs(np.cos(np.pi * np.asarray(phi, dtype=float))))


def coupler_slope(phi: float, omega_c0: float) -> float:
    """``d omega_c / d Phi`` in rad/s per flux quantum."""
    c = math.cos(math.pi * phi)
    if c == 0:
        return math.inf
    return -omega_c0 * math.pi * math.sin(math.pi * phi) * math.copysign(1.0, c) / (2 * math.sqrt(abs(c)))


# --------------------------------------------------------------------------- configuration files


def bundled_device_path() -> Path:
    return Path(str(resources.files("artifact") / "data" / "device_default.json"))


def _transmon_from_json(d: dict, name: str) -> TransmonParams:
    try:
        return TransmonParams(
            omega=float(d["omega_GHz"]) * GHZ,
            anharmonicity=float(d["anharmonicity_MHz"]) * MHZ,
            g=float(d.get("g_MHz", 0.0)) * MHZ,
            T1=float(d["T1_us"]) * US,
            T2=float(d["T2_us"]) * US,
            T2_star=float(d["T2_star_us"]) * US,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad transmon entry {name!r}: {exc}") from exc


def load_device(path: str | Path | None = None) -> DeviceParams:
    """Read a JSON device file; ``None`` loads the bundled default.

    Keys: ``q1``, ``q2``, ``tc`` with ``omega_GHz``, ``anharmonicity_MHz``,
    ``g_MHz``, ``T1_us``, ``T2_us``, ``T2_star_us``; ``drive`` with
    ``phi_dc``, ``delta``, ``omega_phi_GHz``, ``phase_phi``, ``phi_offset``
    (nulls are calibrated); ``tau_pi_ns``; ``hamiltonian_qubits``.

    Raises:
        ParseError: Unreadable file, invalid JSON or missing keys.
    """
    path = Path(path) if path is not None else bundled_device_path()
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    try:
        dr = data.get("drive", {})
        opt = lambda v, s=1.0: None if v is None else float(v) * s  # noqa: E731
        drive = FluxDrive(
            phi_dc=float(dr.get("phi_dc", 0.195)),
            delta=opt(dr.get("delta")),
            omega_phi=opt(dr.get("omega_phi_GHz"), GHZ),
            phase_phi=float(dr.get("phase_phi", 0.0)),
            phi_offset=opt(dr.get("phi_offset")),
        )
        return DeviceParams(
            q1=_transmon_from_json(data["q1"], "q1"),
            q2=_transmon_from_json(data["q2"], "q2"),
            tc=_transmon_from_json(data["tc"], "tc"),
            drive=drive,
            tau_pi=float(data.get("tau_pi_ns", 170.0)) * NS,
            hamiltonian_qubits=tuple(data.get("hamiltonian_qubits", (1, 0))),
        )
    except KeyError as exc:
        raise ParseError(f"missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc)) from exc


def device_to_json(p: DeviceParams) -> str:
    def t(x: TransmonParams):
        return {
            "omega_GHz": x.omega / GHZ,
            "anharmonicity_MHz": x.anharmonicity / MHZ,
            "g_MHz": x.g / MHZ,
            "T1_us": x.T1 / US,
            "T2_us": x.T2 / US,
            "T2_star_us": x.T2_star / US,
        }

    d = p.drive
    return json.dumps(
        {
            "q1": t(p.q1),
            "q2": t(p.q2),
            "tc": t(p.tc),
            "drive": {
                "phi_dc": d.phi_dc,
                "delta": d.delta,
                "omega_phi_GHz": None if d.omega_phi is None else d.omega_phi / GHZ,
                "phase_phi": d.phase_phi,
                "phi_offset": d.phi_offset,
            },
            "tau_pi_ns": p.tau_pi / NS,
            "hamiltonian_qubits": list(p.hamiltonian_qubits),
        },
        indent=2,
    )


# --------------------------------------------------------------------------- operators


def _basis(max_excitations: int | None) -> list[tuple[int, int, int]]:
    states = list(itertools.product(range(3), repeat=3))
    if max_excitations is not None:
        states = [s for s in states if sum(s) <= max_excitations]
    return states


def _lowering(states: Sequence[tuple[int, ...]]) -> list[np.ndarray]:
    idx = {s: i for i, s in enumerate(states)}
    out = []
    for k in range(3):
        a = np.zeros((len(states), len(states)))
        for s in states:
            if s[k] > 0:
                t = list(s)
                t[k] -= 1
                a[idx[tuple(t)], idx[s]] = math.sqrt(s[k])
        out.append(a)
    return out


def _static_hamiltonian(params: DeviceParams, states) -> tuple[np.ndarray, np.ndarray, list, list]:
    """Drive-free part in rad/ns, and the coupler number operator."""
    a = _lowering(states)
    n = [x.T @ x for x in a]
    tr = params.transmons
    h = np.zeros((len(states), len(states)))
    for k in range(2):
        h += tr[k].omega * NS * n[k]
    for k in range(3):
        h += tr[k].anharmonicity * NS / 2 * (n[k] @ n[k] - n[k])
    for k in range(2):
        # a_k^dag a_c is the transpose of a_c^dag a_k
        hop = a[2].T @ a[k]
        h += tr[k].g * NS * (hop + hop.T)
    return h, n[2], a, n


def system_hamiltonian(params: DeviceParams, t: float) -> np.ndarray:
    """27x27 lab-frame Hamiltonian at time ``t`` (s), in rad/s.

    ``sum_i omega_i n_i + alpha_i/2 a^dag a^dag a a + sum_i g_i (a_i^dag a_c + h.c.)``
    with the coupler frequency following the flux drive. An unresolved drive
    is calibrated first.
    """
    params = resolve_drive(params)
    states = _basis(None)
    h, nc, _, _ = _static_hamiltonian(params, states)
    d = params.drive
    phi = d.phi_dc + d.delta * math.cos(d.omega_phi * t + d.phase_phi)
    h = h + coupler_frequency(phi, params.tc.omega * NS) * nc
    return h.astype(complex) / NS


def _collapse_rates(params: DeviceParams) -> list[LindbladRates]:
    out = []
    for p in params.transmons:
        if math.isinf(p.T1) and math.isinf(p.T2_star):
            out.append(LindbladRates(0.0, 0.0))
        else:
            out.append(rates_from_params(p))
    return out


# --------------------------------------------------------------------------- open-system propagation


def _dissipator_rhs(rho, collapse):
    out = np.zeros_like(rho)
    for rate, c in collapse:
        cd = c.conj().T
        cdc = cd @ c
        out += rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def lindblad_propagate(
    rho0: QuantumState,
    params: DeviceParams,
    t_final: float,
    dt: float = 0.02e-9,
    hamiltonian: Callable[[float], np.ndarray] | None = None,
    frame: str = "rotating",
) -> QuantumState:
    """Fixed-step RK4 integration of the master equation on the 27-level register.

    ``drho/dt = -i[H(t), rho] + sum_i G-_i L[a_i] rho + Gz_i L[a_i^dag a_i] rho``
    with ``L[C] rho = C rho C^dag - {C^dag C, rho}/2``. The default frame is
    the interaction picture of the idle Hamiltonian (flux at its bias point),
    so only the flux modulation is integrated numerically; ``"lab"``
    integrates the full Hamiltonian. The returned state is always in the lab
    frame.

    Args:
        rho0: Initial state with dims ``(3, 3, 3)``.
        params: Device; an unresolved drive is calibrated first.
        t_final: Duration, s.
        dt: Step, s. Must not exceed 0.05 ns.
        hamiltonian: Optional override ``t -> H`` (rad/s, 27x27), integrated
            as given in the lab frame.
        frame: ``"rotating"`` or ``"lab"``.

    Raises:
        ContractError: Bad dims, ``dt`` above 0.05 ns or unknown frame.
        NumericalError: Trace drift above 1e-5 or eigenvalues below -1e-7.
    """
    if tuple(rho0.dims) != (3, 3, 3):
        raise ContractError("lindblad_propagate needs a (3, 3, 3) register")
    if not 0 < dt <= 0.05e-9 * (1 + 1e-9):
        raise ContractError("dt must lie in (0, 0.05 ns]")
    if frame not in ("rotating", "lab"):
        raise ContractError("frame must be 'rotating' or 'lab'")
    if t_final < 0:
        raise ContractError("t_final must be non-negative")
    states = _basis(None)
    a = _lowering(states)
    n = [x.T @ x for x in a]
    ops = []
    for r, ak, nk in zip(_collapse_rates(params), a, n):
        if r.gamma_minus > 0:
            ops.append((r.gamma_minus * NS, ak.astype(complex)))
        if r.gamma_z > 0:
            ops.append((r.gamma_z * NS, nk.astype(complex)))

    if hamiltonian is not None or frame == "lab":
        basis = np.eye(len(states))
        energies = np.zeros(len(states))
        if hamiltonian is not None:
            h_of_t = lambda t: np.asarray(hamiltonian(t * NS), dtype=complex) * NS  # noqa: E731
        else:
            params = resolve_drive(params)
            hs, nc, _, _ = _static_hamiltonian(params, states)
            wc_t = _flux_frequency(params)
            h_of_t = lambda t: hs + wc_t(t) * nc  # noqa: E731
    else:
        params = resolve_drive(params)
        hs, nc, _, _ = _static_hamiltonian(params, states)
        wc_t = _flux_frequency(params)
        wc_ref = float(coupler_frequency(params.drive.phi_dc, params.tc.omega * NS))
        energies, basis = np.linalg.eigh(hs + wc_ref * nc)
        nc_d = basis.T @ nc @ basis

        def h_of_t(t):
            ph = np.exp(1j * energies * t)
            return (wc_t(t) - wc_ref) * (ph[:, None] * nc_d * ph.conj()[None, :])

    dressed = [(g, basis.T @ c @ basis) for g, c in ops]
    dressed = [(g, c, c.conj().T @ c) for g, c in dressed]
    moving = frame == "rotating" and hamiltonian is None

    def rhs(t, rho):
        h = h_of_t(t)
        out = -1j * (h @ rho - rho @ h)
        if moving:
            ph = np.exp(1j * energies * t)
            frame_t = ph[:, None] * ph.conj()[None, :]
        for g, c, cdc in dressed:
            if moving:
                c, cdc = c * frame_t, cdc * frame_t
            out += g * (c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc))
        return out

    rho = basis.T @ rho0.density_matrix() @ basis
    tf = t_final / NS
    steps = int(math.ceil(tf / (dt / NS) - 1e-9)) if tf > 0 else 0
    h_ns = tf / steps if steps else 0.0
    t = 0.0
    for _ in range(steps):
        k1 = rhs(t, rho)
        k2 = rhs(t + h_ns / 2, rho + h_ns / 2 * k1)
        k3 = rhs(t + h_ns / 2, rho + h_ns / 2 * k2)
        k4 = rhs(t + h_ns, rho + h_ns * k3)
        rho = rho + h_ns / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        t += h_ns
    drift = abs(np.trace(rho) - np.trace(rho0.density_matrix()))
    if drift > 1e-5:
        raise NumericalError(f"trace drift {drift:.2e}; reduce dt")
    if moving:
        ph = np.exp(-1j * energies * tf)
        rho = ph[:, None] * rho * ph.conj()[None, :]
    return _as_state(basis @ rho @ basis.T)


def _flux_frequency(params: DeviceParams) -> Callable[[float], float]:
    """Coupler frequency (rad/ns) against time (ns) for a resolved drive."""
    d = params.drive
    wc0 = params.tc.omega * NS
    wphi = d.omega_phi * NS

    def wc(t):
        return float(coupler_frequency(d.phi_dc + d.delta * math.cos(wphi * t + d.phase_phi), wc0))

    return wc


def _as_state(rho: np.ndarray) -> QuantumState:
    """Wrap an integrator output, lifting eigenvalues in ``[-1e-7, 0)`` to zero.

    Fixed-step integration of a rank-deficient state leaves its null
    eigenvalues at the integration-error level; anything below ``-1e-7`` is
    reported as a numerical failure instead.
    """
    w, v = np.linalg.eigh(rho)
    if w.min() < -1e-7:
        raise NumericalError(f"state lost positivity (min eigenvalue {w.min():.2e}); reduce dt")
    if w.min() < 0:
        tr = np.trace(rho).real
        w = np.clip(w, 0.0, None)
        rho = (v * w) @ v.conj().T
        rho *= tr / np.trace(rho).real
    return QuantumState("mixed", (3, 3, 3), 0.5 * (rho + rho.conj().T))


# --------------------------------------------------------------------------- calibration


def _single_excitation(params: DeviceParams):
    tr = params.transmons
    w1, w2 = tr[0].omega * NS, tr[1].omega * NS
    g1, g2 = tr[0].g * NS, tr[1].g * NS
    wc0 = tr[2].omega * NS
    phi_dc = params.drive.phi_dc

    def h(t, delta, wphi):
        wc = coupler_frequency(phi_dc + delta * math.cos(wphi * t), wc0)
        return np.array([[w1, 0, g1], [0, w2, g2], [g1, g2, wc]], dtype=complex)

    return h


def _period_unitary(hfun, delta, wphi, substeps=SUBSTEPS):
    period = TWO_PI / wphi
    dt = period / substeps
    u = np.eye(3, dtype=complex)
    for k in range(substeps):
        u = sla.expm(-1j * hfun((k + 0.5) * dt, delta, wphi) * dt) @ u
    return u, period


def _floquet_gap(hfun, delta, wphi):
    """Quasienergy splitting of the two qubit-like Floquet states (rad/ns)."""
    u, period = _period_unitary(hfun, delta, wphi)
    ev, vec = np.linalg.eig(u)
    eps = -np.angle(ev) / period
    ic = int(np.argmax(np.abs(vec[2])))
    q = [i for i in range(3) if i != ic]
    d = (eps[q[0]] - eps[q[1]]) % wphi
    return min(d, wphi - d), eps, q


@dataclass(frozen=True)
class Calibration:
    """Calibrated drive and the frame used to read out the gate.

    Args:
        delta_opt: Modulation amplitude, flux quanta.
        omega_phi: Modulation frequency, rad/s.
        effective_rate: Exchange rate ``Omega_eff``, rad/s.
        tau_pi_achieved: ``pi / (2 Omega_eff)``, s.
        phi_offset: Gate phase produced with zero drive phase, rad.
        transfer: ``|10> -> |01>`` population at ``tau_pi`` without decoherence.
        nu1: Frame frequency of qubit 1, rad/s.
        nu2: Frame frequency of qubit 2, rad/s.
    """

    delta_opt: float
    omega_phi: float
    effective_rate: float
    tau_pi_achieved: float
    phi_offset: float
    transfer: float
    nu1: float
    nu2: float


def _calibration_key(params: DeviceParams):
    return (
        tuple((t.omega, t.anharmonicity, t.g) for t in params.transmons),
        params.drive.phi_dc,
        params.tau_pi,
    )


@functools.lru_cache(maxsize=16)
def _calibrate_cached(key, params: DeviceParams) -> Calibration:
    hfun = _single_excitation(params)
    # resonance sits at the dressed qubit splitting, so search around it
    h0 = hfun(0.0, 0.0, 1.0).real
    w, v = np.linalg.eigh(h0)
    i1, i2 = int(np.argmax(np.abs(v[0]))), int(np.argmax(np.abs(v[1])))
    centre = abs(w[i2] - w[i1])
    span = TWO_PI * 0.06
    target = params.tau_pi / NS

    def best_gap(delta):
        r = minimize_scalar(
            lambda wp: _floquet_gap(hfun, delta, wp)[0],
            bounds=(centre - span, centre + span),
            method="bounded",
            options={"xatol": 1e-9},
        )
        return r.fun, r.x

    def residual(delta):
        return math.pi / best_gap(delta)[0] - target

    lo, hi = 0.005, 0.5 - abs(params.drive.phi_dc) - 1e-3
    grid = np.linspace(lo, hi, 12)
    vals = [residual(d) for d in grid]
    bracket = next(((grid[i], grid[i + 1]) for i in range(len(grid) - 1) if vals[i] > 0 > vals[i + 1]), None)
    if bracket is None:
        diag = {"delta": grid.tolist(), "tau_pi_ns": [target + v for v in vals]}
        raise CalibrationError("no modulation amplitude reaches the target transfer time", diag)
    delta = brentq(residual, *bracket, xtol=1e-10)
    gap, wphi = best_gap(delta)
    model = _GateModel(params, delta, wphi, None)
    u = model.noiseless_unitary(params.tau_pi / NS, 0.0)
    phi_off = float(np.angle(u[1, 2] / 1j))
    transfer = float(abs(u[1, 2]) ** 2)
    if transfer < 0.99:
        raise CalibrationError(f"calibrated transfer {transfer:.4f} below 0.99", {"delta": delta})
    return Calibration(
        delta_opt=float(delta),
        omega_phi=float(wphi) / NS,
        effective_rate=float(gap / 2) / NS,
        tau_pi_achieved=float(math.pi / gap) * NS,
        phi_offset=phi_off,
        transfer=transfer,
        nu1=model.nu1 / NS,
        nu2=model.nu2 / NS,
    )


def calibrate_gate(params: DeviceParams) -> Calibration:
    """Find the drive that transfers ``|10> -> |01>`` in ``tau_pi``.

    For each amplitude the modulation frequency is set to the resonance (the
    minimum Floquet splitting in the single-excitation sector); the amplitude
    is then root-found so that ``pi / splitting = tau_pi``. The gate phase at
    zero drive phase is read off the noiseless propagator. Results are cached
    per Hamiltonian.

    Raises:
        CalibrationError: No amplitude in range reaches ``tau_pi`` or the
            resulting transfer is below 0.99.
    """
    return _calibrate_cached(_calibration_key(params), params)


def resolve_drive(params: DeviceParams) -> DeviceParams:
    """Fill unset drive fields from :func:`calibrate_gate`."""
    d = params.drive
    if d.resolved:
        return params
    cal = calibrate_gate(params)
    drive = dataclasses.replace(
        d,
        delta=cal.delta_opt if d.delta is None else d.delta,
        omega_phi=cal.omega_phi if d.omega_phi is None else d.omega_phi,
        phi_offset=cal.phi_offset if d.phi_offset is None else d.phi_offset,
    )
    return dataclasses.replace(params, drive=drive)


# --------------------------------------------------------------------------- gate model


class _Propagator:
    """Piecewise-midpoint propagators ``P(t)`` of the 100-dim Liouvillian."""

    def __init__(self, l0: np.ndarray, ln: np.ndarray, wc_of_t, period: float, substeps: int = SUBSTEPS):
        self.l0, self.ln, self.wc_of_t = l0, ln, wc_of_t
        self.period, self.dt, self.k = period, period / substeps, substeps
        ps = [np.eye(l0.shape[0], dtype=complex)]
        for k in range(substeps):
            ps.append(sla.expm(self.generator((k + 0.5) * self.dt) * self.dt) @ ps[-1])
        self.ps = np.array(ps)
        self.lt = self.ps[-1]
        self._powers = {0: np.eye(l0.shape[0], dtype=complex)}

    def generator(self, t: float) -> np.ndarray:
        return self.l0 + self.wc_of_t(t) * self.ln

    def power(self, n: int) -> np.ndarray:
        if n not in self._powers:
            self._powers[n] = np.linalg.matrix_power(self.lt, n)
        return self._powers[n]

    def split(self, t: float) -> tuple[int, int, float]:
        n = int(math.floor(t / self.period + 1e-12))
        s = t - n * self.period
        k = min(int(math.floor(s / self.dt)), self.k - 1)
        return n, k, s - k * self.dt

    def at(self, t: float) -> np.ndarray:
        n, k, r = self.split(t)
        step = sla.expm(self.generator(k * self.dt + r / 2) * r) if r > 1e-12 else np.eye(self.lt.shape[0])
        return step @ self.ps[k] @ self.power(n)

    def transfer(self, t0: float, tau: float) -> np.ndarray:
        """``P(t0 + tau) P(t0)^-1``: evolution over ``[t0, t0 + tau]``."""
        return np.linalg.solve(self.at(t0).T, self.at(t0 + tau).T).T


class _GateModel:
    """Exact evolution on the ``N <= 2`` subspace, in ns units."""

    def __init__(self, params: DeviceParams, delta: float, wphi: float, phi_offset: float | None):
        self.params = params
        self.delta, self.wphi = delta, wphi
        self.period = TWO_PI / wphi
        self.states = _basis(2)
        self.idx = {s: i for i, s in enumerate(self.states)}
        d = len(self.states)
        self.dim = d
        self.hs, self.nc, self.a, self.n = _static_hamiltonian(params, self.states)
        self.wc0 = params.tc.omega * NS
        self.phi_dc = params.drive.phi_dc
        idle = self.hs + coupler_frequency(self.phi_dc, self.wc0) * self.nc
        e, v = np.linalg.eigh(idle)
        # dressed states labelled by their dominant bare component
        vd = np.zeros((d, d), dtype=complex)
        energy = np.zeros(d)
        used: set[int] = set()
        for s in self.states:
            weights = np.abs(v[self.idx[s]]) ** 2
            weights[list(used)] = -1
            j = int(np.argmax(weights))
            used.add(j)
            vd[:, self.idx[s]] = v[:, j] * np.exp(-1j * np.angle(v[self.idx[s], j]))
            energy[self.idx[s]] = e[j]
        self.vd = vd
        self.dressed_energy = energy
        gap, eps, q = _floquet_gap(_single_excitation(params), delta, wphi)
        ea, eb = eps[q[0]], eps[q[1]]
        eb = ea + ((eb - ea + wphi / 2) % wphi - wphi / 2)
        mean = 0.5 * (ea + eb)
        e10 = energy[self.idx[(1, 0, 0)]]
        self.nu1 = mean + round((e10 - mean) / wphi) * wphi
        self.nu2 = self.nu1 + wphi
        self.frame = np.array([s[0] * self.nu1 + s[1] * self.nu2 for s in self.states])
        self.comp = np.array([vd[:, self.idx[(i, j, 0)]] for i, j in _PHYS_ORDER]).T
        self.comp_frame = np.array([i * self.nu1 + j * self.nu2 for i, j in _PHYS_ORDER])
        self.phi_offset = phi_offset
        self._fold = self._fold_map()
        self._props: dict = {}

    def wc_of_t(self, t: float) -> float:
        return float(coupler_frequency(self.phi_dc + self.delta * math.cos(self.wphi * t), self.wc0))

    def noiseless_unitary(self, tau: float, t0: float) -> np.ndarray:
        """4x4 computational block of the closed-system evolution (physical order)."""
        dt = self.period / SUBSTEPS
        steps = int(round(tau / dt))
        u = np.eye(self.dim, dtype=complex)
        h = self.hs.astype(complex)
        for k in range(steps):
            hk = h + self.wc_of_t(t0 + (k + 0.5) * dt) * self.nc
            u = sla.expm(-1j * hk * dt) @ u
        rest = tau - steps * dt
        if rest > 1e-12:
            hk = h + self.wc_of_t(t0 + steps * dt + rest / 2) * self.nc
            u = sla.expm(-1j * hk * rest) @ u
        m = self.comp.conj().T @ u @ self.comp
        return m * np.exp(1j * self.comp_frame * tau)[:, None]

    def propagator(self, params: DeviceParams) -> _Propagator:
        rates = tuple((r.gamma_minus, r.gamma_z) for r in _collapse_rates(params))
        if rates not in self._props:
            eye = np.eye(self.dim)

            def comm(h):
                return -1j * (np.kron(h, eye) - np.kron(eye, h.T))

            def diss(c):
                cdc = c.conj().T @ c
                return np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)

            l0 = comm(self.hs)
            for (gm, gz), ak, nk in zip(rates, self.a, self.n):
                l0 = l0 + gm * NS * diss(ak) + gz * NS * diss(nk)
            self._props[rates] = _Propagator(l0, comm(self.nc), self.wc_of_t, self.period)
        return self._props[rates]

    def start_time(self, phi: float) -> float:
        """Drive time offset that realises gate phase ``phi``."""
        return ((self.phi_offset - phi) / self.wphi) % self.period

    def channel(self, params: DeviceParams, theta: float, phi: float) -> np.ndarray:
        if theta < 0:
            theta, phi = -theta, phi + math.pi
        tau = theta / math.pi * params.tau_pi / NS
        lam = self.propagator(params).transfer(self.start_time(phi), tau)
        c = self.comp
        s = np.kron(c.conj().T, c.T) @ lam @ np.kron(c, c.conj())
        phase = np.exp(1j * np.subtract.outer(self.comp_frame, self.comp_frame) * tau).reshape(-1)
        return phase[:, None] * s

    def _fold_map(self) -> np.ndarray:
        """Map dressed-basis ``vec(rho)`` to the two-qubit state (physical order).

        The coupler is traced out and each qubit's level 2 is folded onto 1
        through the Kraus pair ``{P_01, |1><2|}``.
        """
        d = self.dim
        f = np.zeros((16, d * d))
        fold = lambda m: min(m, 1)  # noqa: E731
        for i, si in enumerate(self.states):
            for j, sj in enumerate(self.states):
                if si[2] != sj[2]:
                    continue
                if any((si[q] == 2) != (sj[q] == 2) for q in range(2)):
                    continue
                a = fold(si[0]) * 2 + fold(si[1])
                b = fold(sj[0]) * 2 + fold(sj[1])
                f[a * 4 + b, i * d + j] = 1.0
        return f

    def readout_map(self, tau: float) -> np.ndarray:
        """16 x d^2 linear map from bare ``vec(rho)`` to the reduced qubit state."""
        vd = self.vd
        dress = np.kron(vd.conj().T, vd.T)
        phase = np.exp(1j * np.subtract.outer(self.frame, self.frame) * tau).reshape(-1)
        return self._fold @ (phase[:, None] * dress)

    def prepared(self) -> np.ndarray:
        v = self.vd[:, self.idx[(1, 0, 0)]]
        return np.outer(v, v.conj()).reshape(-1)


@functools.lru_cache(maxsize=8)
def _gate_model_cached(key, params: DeviceParams) -> _GateModel:
    cal = calibrate_gate(params)
    d = params.drive
    delta = cal.delta_opt if d.delta is None else d.delta
    wphi = (cal.omega_phi if d.omega_phi is None else d.omega_phi) * NS
    off = cal.phi_offset if d.phi_offset is None else d.phi_offset
    return _GateModel(params, delta, wphi, off)


def _gate_model(params: DeviceParams) -> _GateModel:
    d = params.drive
    key = (_calibration_key(params), d.delta, d.omega_phi, d.phi_offset)
    return _gate_model_cached(key, params)


def _layout_perm(params: DeviceParams) -> np.ndarray:
    """Permutation taking the physical-order qubit state to Hamiltonian order."""
    hq = params.hamiltonian_qubits
    p = np.zeros((4, 4))
    for col, bits in enumerate(_PHYS_ORDER):
        row = bits[hq[0]] * 2 + bits[hq[1]]
        p[row, col] = 1.0
    return p


def noisy_gate_channel(theta: float, phi: float, params: DeviceParams) -> np.ndarray:
    """Two-qubit superoperator of the simulated exchange gate (physical qubit order).

    The pulse lasts ``|theta| / pi * tau_pi``; the drive is started at the
    time offset that yields gate phase ``phi``. Inputs are the dressed
    computational states with the coupler in its ground state, outputs are
    projected back onto them in the qubit frame. Leakage shows up as trace
    loss (see :func:`channel_leakage`). Acts on row-major ``vec(rho)``.
    """
    return _gate_model(params).channel(params, float(theta), float(phi))


def channel_leakage(superop: np.ndarray) -> float:
    """Average trace lost by a two-qubit superoperator over the maximally mixed input."""
    out = superop @ (np.eye(4) / 4).reshape(-1)
    return float(1.0 - np.real(np.trace(out.reshape(4, 4))))


def unitary_superop(u: np.ndarray) -> np.ndarray:
    """``vec(U rho U^dag) = (U kron U*) vec(rho)``."""
    u = np.asarray(u, dtype=complex)
    return np.kron(u, u.conj())


def gate_process_fidelity(superop: np.ndarray, u: np.ndarray) -> float:
    """``Tr(S_U^dag S) / d^2``: process fidelity against unitary ``u``."""
    d = u.shape[0]
    return float(np.real(np.trace(unitary_superop(u).conj().T @ superop)) / d**2)


# --------------------------------------------------------------------------- noisy trial states


def noisy_trial_state(theta: float, phi: float, params: DeviceParams) -> QuantumState:
    """Two-qubit state after ``X_pi`` on q1 and the simulated exchange gate.

    The full state is reduced to the qubits (coupler traced out, level 2
    folded onto 1) and permuted into Hamiltonian qubit order.
    """
    model = _gate_model(params)
    if theta < 0:
        theta, phi = -theta, phi + math.pi
    tau = theta / math.pi * params.tau_pi / NS
    lam = model.propagator(params).transfer(model.start_time(phi), tau)
    red = (model.readout_map(tau) @ (lam @ model.prepared())).reshape(4, 4)
    p = _layout_perm(params)
    red = p @ red @ p.T
    return QuantumState.mixed(0.5 * (red + red.conj().T))


def _taylor_step(l0, ln, wc, r, v, order=12):
    """``exp((l0 + wc ln) r) v`` column-wise, for small ``r``."""
    out = v.copy()
    term = v.copy()
    for m in range(1, order + 1):
        term = (l0 @ term + ln @ term * wc[None, :]) * (r[None, :] / m)
        out = out + term
    return out


@functools.lru_cache(maxsize=8)
def trial_state_grid(params: DeviceParams, grid: tuple[int, int] = (201, 201)):
    """Reduced trial states over ``theta in [0, pi]`` and ``phi in [0, 2 pi)``.

    Returns:
        ``(thetas, phis, states)`` with ``states`` of shape ``(n_theta, n_phi, 4, 4)``
        in Hamiltonian qubit order.
    """
    n_th, n_ph = grid
    if n_th < 2 or n_ph < 1:
        raise ContractError("grid needs at least 2 theta and 1 phi points")
    model = _gate_model(params)
    prop = model.propagator(params)
    thetas = np.linspace(0.0, math.pi, n_th)
    phis = np.linspace(0.0, TWO_PI, n_ph, endpoint=False)
    rho0 = model.prepared()
    t0 = np.array([model.start_time(p) for p in phis])
    w = np.array([np.linalg.solve(prop.at(t), rho0) for t in t0]).T  # d^2 x n_phi
    taus = thetas / math.pi * params.tau_pi / NS
    n_max = int(math.floor((t0.max() + taus.max()) / prop.period + 1e-12)) + 1
    y = [w]
    for _ in range(n_max):
        y.append(prop.lt @ y[-1])
    perm = _layout_perm(params)
    states = np.zeros((n_th, n_ph, 4, 4), dtype=complex)
    cols = np.arange(n_ph)
    for i, tau in enumerate(taus):
        t = t0 + tau
        nk = [prop.split(x) for x in t]
        n_idx = np.array([s[0] for s in nk])
        k_idx = np.array([s[1] for s in nk])
        r = np.array([s[2] for s in nk])
        base = np.stack([y[n][:, j] for n, j in zip(n_idx, cols)], axis=1)
        v = np.einsum("jab,bj->aj", prop.ps[k_idx], base)
        tm = k_idx * prop.dt + r / 2
        wc = np.array([model.wc_of_t(x) for x in tm])
        v = _taylor_step(prop.l0, prop.ln, wc, r, v)
        red = (model.readout_map(tau) @ v).T.reshape(n_ph, 4, 4)
        red = perm @ red @ perm.T
        states[i] = 0.5 * (red + np.conj(np.swapaxes(red, -1, -2)))
    return thetas, phis, states


@dataclass(frozen=True)
class NoisyEnergyResult:
    """Grid minimum of the simulated energy.

    Args:
        energy: ``min Tr(rho H)`` over the grid, Hartree.
        theta_opt: Minimising angle.
        phi_opt: Minimising phase.
        rho_opt: Minimising two-qubit state (Hamiltonian order).
    """

    energy: float
    theta_opt: float
    phi_opt: float
    rho_opt: QuantumState


def noisy_ground_energy(
    h: PauliSum, params: DeviceParams, grid: tuple[int, int] = (201, 201)
) -> NoisyEnergyResult:
    """Grid-global minimum of ``Tr(rho(theta, phi) H)`` over simulated trial states."""
    if h.n_qubits != 2:
        raise ContractError("noisy_ground_energy expects a two-qubit Hamiltonian")
    thetas, phis, states = trial_state_grid(params, tuple(grid))
    hm = h.matrix()
    e = np.real(np.einsum("ijab,ba->ij", states, hm))
    i, j = np.unravel_index(int(np.argmin(e)), e.shape)
    return NoisyEnergyResult(float(e[i, j]), float(thetas[i]), float(phis[j]), QuantumState.mixed(states[i, j]))


# --------------------------------------------------------------------------- flux-noise dephasing


def tphi_from_coherence(T1: float, T2_star: float) -> float:
    """Pure-dephasing time ``2 T1 T2* / (2 T1 - T2*)``."""
    if not 2 * T1 > T2_star:
        raise ContractError("need T2* < 2 T1")
    return 2 * T1 * T2_star / (2 * T1 - T2_star)


def tphi_flux_model(dwc_dphi: float | np.ndarray, A: float, T_other: float) -> float | np.ndarray:
    """``T_phi = 1 / (A |d omega_c / d Phi|) + T_other``.

    Args:
        dwc_dphi: Coupler slope, rad/s per flux quantum.
        A: Flux-noise amplitude, flux quanta.
        T_other: Flux-independent contribution, s.

    Raises:
        ContractError: Non-positive ``A``.
    """
    if not A > 0:
        raise ContractError("flux-noise amplitude must be positive")
    slope = np.abs(np.asarray(dwc_dphi, dtype=float))
    with np.errstate(divide="ignore"):
        first = np.where(slope > 0, 1.0 / (A * np.where(slope > 0, slope, 1.0)), np.inf)
    if np.any(slope == 0):
        warnings.warn("zero flux slope: sweet spot, first-order flux dephasing diverges", stacklevel=2)
    out = first + T_other
    return float(out) if out.ndim == 0 else out


def fit_flux_noise(dwc_dphi: Sequence[float], tphi: Sequence[float]) -> tuple[float, float]:
    """Least-squares ``(A, T_other)`` for measured ``T_phi`` against slope.

    Raises:
        FitError: Fewer than 3 points or the optimiser fails.
    """
    x = np.abs(np.asarray(dwc_dphi, dtype=float))
    y = np.asarray(tphi, dtype=float)
    if len(x) < 3 or np.any(x <= 0):
        raise FitError("need at least 3 points with nonzero slope")
    # linear in (1/A, T_other) against 1/slope
    design = np.column_stack([1.0 / x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    p0 = (1.0 / coef[0] if coef[0] > 0 else 1e-5, max(coef[1], 0.0))
    try:
        popt, _ = curve_fit(lambda s, a, t: 1.0 / (a * s) + t, x, y, p0=p0, maxfev=10000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    return float(popt[0]), float(popt[1])
