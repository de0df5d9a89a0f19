"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Criteria that the faithful implementation does not meet are left failing; the
printed line carries the measured numbers.
"""

import dataclasses
import math
import time

import numpy as np
import scipy.linalg as sla

from artifact import device as dv
from artifact.circuits import (
    EXCHANGE_REFERENCE,
    build_exchange_heuristic,
    circuit_depth,
    circuit_runtime,
    circuit_unitary,
    decompose_exchange,
    depth_report,
    verify_excitation_conservation,
)
from artifact.eom import excited_states
from artifact.hamiltonians import build_h2_hamiltonian, exact_spectrum, load_h2_table
from artifact.qcore import ISWAP, QuantumState, decompose_u_ex, equal_up_to_phase, u_ex
from artifact.tomography import (
    analytic_phase_fidelity,
    channel_to_chi,
    clifford_table,
    depolarizing_provider,
    device_provider,
    fit_exponential_decay,
    fit_phase_fidelity,
    ideal_provider,
    process_fidelity,
    rb_iswap,
    unitary_chi,
)
from artifact.vqe import EXACT, EnergyMode, SPSAConfig, energy, prepare_trial, spsa_minimize

CHEM_ACC = 6.5e-3
TABLE = load_h2_table()
HAMS = [build_h2_hamiltonian(r) for r in TABLE]
GROUND = [exact_spectrum(h).ground_energy for h in HAMS]
DEVICE = dv.load_device()


def report(capsys, n, ok, detail, elapsed, budget):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    with capsys.disabled():
        print(f"\ncriterion {n:2d}: {status}  {detail}  [{elapsed:.1f} s, budget {budget:.0f} s]")
    assert ok, detail
    assert elapsed < budget, f"runtime {elapsed:.1f} s over budget {budget} s"


def test_criterion_01_exchange_algebra(capsys):
    t = time.perf_counter()
    exact = np.array_equal(u_ex(math.pi, 0.0), ISWAP)
    grid = np.linspace(0, 2 * math.pi, 8)
    worst = max(
        equal_up_to_phase(circuit_unitary(decompose_u_ex((a, b))), u_ex(a, b)) for a in grid for b in grid
    )
    el = time.perf_counter() - t
    report(capsys, 1, exact and worst <= 1e-10, f"iSWAP exact={exact}, worst decomposition error {worst:.1e}", el, 1)


def test_criterion_02_ansatz_exhaustive(capsys):
    t = time.perf_counter()
    # (theta, phi) and (2 pi - theta, phi + pi) give the same state, so theta spans [0, pi]
    thetas = np.linspace(0, math.pi, 201)
    phis = np.linspace(0, 2 * math.pi, 201, endpoint=False)
    vecs = np.array([[prepare_trial(a, b).data for b in phis] for a in thetas])
    worst = 0.0
    for h, e0 in zip(HAMS, GROUND):
        e = np.real(np.einsum("ijk,kl,ijl->ij", vecs.conj(), h.matrix(), vecs))
        worst = max(worst, e.min() - e0)
    el = time.perf_counter() - t
    report(capsys, 2, worst <= 1e-4, f"worst grid-min gap {worst:.2e} Ha over 16 bond lengths", el, 30)


def test_criterion_03_noiseless_vqe(capsys):
    t = time.perf_counter()
    good_seeds, iters = 0, []
    worst = []
    for seed in range(20):
        errs = []
        for h, e0 in zip(HAMS, GROUND):
            res = spsa_minimize(lambda a, b: energy(a, b, h, EXACT), SPSAConfig(seed=seed))
            errs.append(res.energy - e0)
            iters.append(res.iterations)
        worst.append(max(errs))
        good_seeds += max(errs) <= CHEM_ACC
    med = float(np.median(iters))
    el = time.perf_counter() - t
    ok = good_seeds >= 18 and 8 <= med <= 30
    detail = (
        f"{good_seeds}/20 seeds within 6.5 mHa everywhere, median iterations {med:.0f}, "
        f"median worst error {1e3 * np.median(worst):.1f} mHa"
    )
    report(capsys, 3, ok, detail, el, 120)


def test_criterion_04_eom_exact(capsys):
    t = time.perf_counter()
    worst = 0.0
    for h in HAMS:
        spec = exact_spectrum(h)
        res = excited_states(QuantumState.pure(spec.ground_state), h)
        gaps = spec.eigenvalues[1:] - spec.eigenvalues[0]
        if len(res.excitation_energies) != 3:
            worst = math.inf
            break
        worst = max(worst, float(np.max(np.abs(res.excitation_energies - gaps))))
    el = time.perf_counter() - t
    report(capsys, 4, worst <= 1e-8, f"worst gap error {worst:.1e} Ha", el, 10)


def test_criterion_05_open_system(capsys):
    t = time.perf_counter()
    zero = lambda s: np.zeros((27, 27))  # noqa: E731
    start = QuantumState.basis((1, 0, 0), (3, 3, 3))
    out = dv.lindblad_propagate(start, DEVICE, 170e-9)
    trace_err = abs(np.trace(out.data).real - 1)

    static = dataclasses.replace(
        DEVICE, drive=dv.FluxDrive(DEVICE.drive.phi_dc, delta=0.0, omega_phi=1e9, phi_offset=0.0)
    )
    t1 = static.noiseless().with_coherence("q1", T1=200e-9, T2_star=400e-9)
    pop = dv.lindblad_propagate(start, t1, 170e-9, hamiltonian=zero).probabilities()[9]
    decay_err = abs(pop / math.exp(-170 / 200) - 1)

    deph = static.noiseless().with_coherence("q1", T1=math.inf, T2_star=100e-9)
    gz = dv.rates_from_params(deph.q1).gamma_z
    plus = (start.data + QuantumState.basis((0, 0, 0), (3, 3, 3)).data) / math.sqrt(2)
    coh = dv.lindblad_propagate(QuantumState.pure(plus, (3, 3, 3)), deph, 170e-9, hamiltonian=zero).data[0, 9]
    deph_err = abs(abs(coh) / (0.5 * math.exp(-gz * 170e-9 / 2)) - 1)

    free = static.noiseless()
    mix = QuantumState.pure((start.data + QuantumState.basis((0, 1, 0), (3, 3, 3)).data) / math.sqrt(2), (3, 3, 3))
    u = sla.expm(-1j * dv.system_hamiltonian(free, 0.0) * 170e-9)
    ref = u @ mix.density_matrix() @ u.conj().T
    expm_err = float(np.max(np.abs(dv.lindblad_propagate(mix, free, 170e-9).data - ref)))
    el = time.perf_counter() - t
    ok = trace_err <= 1e-7 and decay_err <= 5e-3 and deph_err <= 5e-3 and expm_err <= 1e-8
    detail = (
        f"trace drift {trace_err:.1e}, decay law {100 * decay_err:.2e} %, "
        f"dephasing law {100 * deph_err:.2e} %, zero-rate vs expm {expm_err:.1e}"
    )
    report(capsys, 5, ok, detail, el, 60)


def test_criterion_06_calibration(capsys):
    t = time.perf_counter()
    cal = dv.calibrate_gate(DEVICE.noiseless())
    el = time.perf_counter() - t
    detail = f"transfer {cal.transfer:.5f}, delta {cal.delta_opt:.6f}, tau_pi {cal.tau_pi_achieved * 1e9:.2f} ns"
    report(capsys, 6, cal.transfer >= 0.99, detail, el, 120)


def test_criterion_07_noisy_gate_fidelity(capsys):
    t = time.perf_counter()
    f_pi = process_fidelity(channel_to_chi(dv.noisy_gate_channel(math.pi, 0.0, DEVICE)), unitary_chi(ISWAP))
    thetas = math.pi * np.arange(1, 9) / 4
    fids = [
        process_fidelity(channel_to_chi(dv.noisy_gate_channel(th, 0.0, DEVICE)), unitary_chi(u_ex(th, 0.0)))
        for th in thetas
    ]
    _, tau_us = fit_exponential_decay(thetas / math.pi * DEVICE.tau_pi * 1e6, fids)
    el = time.perf_counter() - t
    ok = 0.89 <= f_pi <= 0.97 and 6.3 / 2 <= tau_us <= 6.3 * 2
    detail = f"iSWAP fidelity {f_pi:.4f} (band 0.89-0.97), decay time {tau_us:.2f} us (band 3.15-12.6)"
    report(capsys, 7, ok, detail, el, 600)


def test_criterion_08_phase_fit(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    phis = np.linspace(0, 2 * math.pi, 32, endpoint=False)
    worst_f, worst_p = 0.0, 0.0
    for f0, p0 in [(0.94, 0.0), (0.932, 1.574), (0.9, 3.155), (0.85, -1.0)]:
        data = analytic_phase_fidelity(phis, f0, p0) * (1 + rng.normal(0, 0.01, phis.size))
        res = fit_phase_fidelity(list(zip(phis, data)))
        worst_f = max(worst_f, abs(res.F0 - f0))
        worst_p = max(worst_p, abs((res.phi0 - p0 + math.pi) % (2 * math.pi) - math.pi))
    peaks = []
    chis = [channel_to_chi(dv.noisy_gate_channel(math.pi, p, DEVICE)) for p in phis]
    for target in (0.0, math.pi / 2, math.pi):
        ideal = unitary_chi(u_ex(math.pi, target))
        fit = fit_phase_fidelity([(p, process_fidelity(c, ideal)) for p, c in zip(phis, chis)])
        peaks.append(fit.phi0)
    peak_err = max(
        abs((p - tg + math.pi) % (2 * math.pi) - math.pi) for p, tg in zip(peaks, (0.0, math.pi / 2, math.pi))
    )
    el = time.perf_counter() - t
    ok = worst_f <= 0.02 and worst_p <= 0.05 and peak_err <= 0.05
    detail = (
        f"round trip dF0 {worst_f:.4f}, dphi0 {worst_p:.4f} rad; device peaks "
        + ", ".join(f"{p:.3f}" for p in peaks)
        + " rad"
    )
    report(capsys, 8, ok, detail, el, 10)


def test_criterion_09_decoherence_limited(capsys):
    t = time.perf_counter()
    errs = [dv.noisy_ground_energy(h, DEVICE).energy - e0 for h, e0 in zip(HAMS, GROUND)]
    above = all(e > CHEM_ACC for e in errs)
    falling = int(np.sum(np.diff(errs) < 0))
    i07 = TABLE.bond_lengths().index(0.7)
    sweep = []
    for t2 in (20, 100, 200, 500):
        p = DEVICE.with_coherence("tc", T2_star=t2 * 1e-9)
        sweep.append(dv.noisy_ground_energy(HAMS[i07], p).energy - GROUND[i07])
    monotone = all(b < a for a, b in zip(sweep, sweep[1:]))
    el = time.perf_counter() - t
    ok = above and falling >= 12 and monotone and sweep[-1] <= CHEM_ACC
    detail = (
        f"errors {1e3 * min(errs):.1f}-{1e3 * max(errs):.1f} mHa, {falling}/15 decreasing; "
        f"R=0.70 sweep " + ", ".join(f"{1e3 * e:.2f}" for e in sweep) + " mHa"
    )
    report(capsys, 9, ok, detail, el, 1800)


def test_criterion_10_rb(capsys):
    t = time.perf_counter()
    table = clifford_table()
    short = [1, 2, 4, 8, 16, 32]
    ideal = rb_iswap(ideal_provider(table), short, 10, np.random.default_rng(10), table)
    dep = rb_iswap(depolarizing_provider(0.02, table), short, 10, np.random.default_rng(10), table)
    dep_err = abs(dep.epg / 0.015 - 1)
    lengths = [1, 2, 4, 8, 16, 32, 64]
    dev = rb_iswap(device_provider(DEVICE, table), lengths, 20, np.random.default_rng(10), table)
    el = time.perf_counter() - t
    ok = ideal.epg <= 1e-6 and dep_err <= 0.05 and 0.0125 <= dev.epg_per_iswap <= 0.05
    detail = (
        f"ideal EPG {ideal.epg:.1e}, depolarizing recovery error {100 * dep_err:.2f} %, "
        f"device EPG {dev.epg_per_iswap:.4f} per iSWAP ({dev.epg:.4f} per Clifford, "
        f"fixed-B {dev.epg_fixed_b:.4f})"
    )
    report(capsys, 10, ok, detail, el, 600)


def test_criterion_11_depth_accounting(capsys):
    t = time.perf_counter()
    ok = True
    parts = []
    for name in ("LiH", "BeH2", "H2O"):
        n, d0, depth, _, runtime_us, _ = EXCHANGE_REFERENCE[name]
        c = build_exchange_heuristic(n, d0, n // 2)
        got = circuit_depth(c)
        ok &= got == depth and circuit_depth(decompose_exchange(c)) == 9 * got
        parts.append(f"{name} {got}")
    lih = circuit_runtime(build_exchange_heuristic(10, 14, 5)) * 1e6
    ok &= abs(lih - 4.76) < 1e-9
    h2 = depth_report(4, 4, "exchange")
    flagged = h2["runtime_matches_reference"] is False
    ok &= flagged
    el = time.perf_counter() - t
    detail = f"depths {', '.join(parts)}; LiH runtime {lih:.2f} us; H2 runtime row flagged={flagged}"
    report(capsys, 11, ok, detail, el, 1)


def test_criterion_12_property_suite(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(12)
    cases = failures = 0

    for _ in range(400):
        a, b = rng.uniform(0, 2 * math.pi, 2)
        u = u_ex(a, b)
        cases += 1
        failures += not np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)

    for _ in range(200):
        n, blocks = int(rng.integers(2, 6)), int(rng.integers(1, 3))
        c = build_exchange_heuristic(n, blocks, 0, rng=rng)
        u = circuit_unitary(c)
        cases += 1
        failures += not (verify_excitation_conservation(c) and np.allclose(u.conj().T @ u, np.eye(2**n), atol=1e-10))

    _, _, states = dv.trial_state_grid(DEVICE, (21, 16))
    for rho in states.reshape(-1, 4, 4):
        cases += 1
        herm = np.allclose(rho, rho.conj().T, atol=1e-12)
        failures += not (herm and abs(np.trace(rho).real - 1) < 1e-9 and np.linalg.eigvalsh(rho).min() > -1e-9)

    h = HAMS[4]
    for seed in range(40):
        cfg = SPSAConfig(seed=seed)
        r1 = spsa_minimize(lambda a, b: energy(a, b, h), cfg)
        r2 = spsa_minimize(lambda a, b: energy(a, b, h), cfg)
        m1 = EnergyMode(128, np.random.default_rng(seed))
        m2 = EnergyMode(128, np.random.default_rng(seed))
        cases += 2
        failures += r1 != r2
        failures += energy(1.0, 0.5, h, m1) != energy(1.0, 0.5, h, m2)
    table = clifford_table()
    prov = depolarizing_provider(0.03, table)
    for seed in range(5):
        a = rb_iswap(prov, [1, 2, 4], 2, np.random.default_rng(seed), table)
        b = rb_iswap(prov, [1, 2, 4], 2, np.random.default_rng(seed), table)
        cases += 1
        failures += a.survival != b.survival
    el = time.perf_counter() - t
    report(capsys, 12, failures == 0 and cases >= 1000, f"{cases} randomized cases, {failures} failures", el, 120)
