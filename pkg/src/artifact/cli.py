"""Command-line entry points.

Every command writes its data file(s) plus ``<out>.manifest.json``. Exit codes:
0 success, 1 numerical or convergence failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArtifactError, ContractError, NumericalError, ParseError

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2


@dataclass
class RunManifest:
    """Provenance record written next to every output."""

    command: str
    config_paths: list[str]
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    tool_version: str = ""
    wall_time: float = 0.0
    error: str | None = None
    exit_code: int = 0


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        g = (int(a), int(b))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("grid must look like 201x201") from exc
    if g[0] < 2 or g[1] < 1:
        raise argparse.ArgumentTypeError("grid needs at least 2x1 points")
    return g


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc
    return vals


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _table_path(args) -> str:
    from .hamiltonians import bundled_table_path

    return str(args.table or bundled_table_path())


def _device_path(args) -> str | None:
    from .device import bundled_device_path

    if getattr(args, "noise", "device") != "device":
        return args.device
    return str(args.device or bundled_device_path())


def _run(command: str, args, configs: list, body: Callable[[], list[Path]]) -> int:
    out = Path(args.out)
    manifest = RunManifest(command, [str(c) for c in configs if c], getattr(args, "seed", None))
    manifest.tool_version = _version()
    start = time.perf_counter()
    try:
        manifest.outputs = [str(p) for p in body()]
    except (ParseError, ContractError, FileNotFoundError) as exc:
        manifest.error, manifest.exit_code = f"{type(exc).__name__}: {exc}", EXIT_INPUT
    except (NumericalError, ArtifactError) as exc:
        manifest.error, manifest.exit_code = f"{type(exc).__name__}: {exc}", EXIT_NUMERICAL
    manifest.wall_time = time.perf_counter() - start
    _write_json(out.with_name(out.name + ".manifest.json"), asdict(manifest))
    if manifest.error:
        print(f"error: {manifest.error}", file=sys.stderr)
    return manifest.exit_code


# --------------------------------------------------------------------------- dissociation


def cmd_dissociation(args) -> int:
    from .eom import build_eom_system, solve_eom
    from .hamiltonians import build_h2_hamiltonian, exact_spectrum, load_h2_table
    from .qcore import expectation
    from .vqe import EnergyMode, SPSAConfig, dissociation_curve, prepare_trial

    def body():
        table = load_h2_table(args.table)
        header = ["R"] + [f"E_exact_{k}" for k in range(4)] + ["E_vqe"]
        header += [f"E_eom_{k}" for k in (1, 2, 3)] + ["err_vqe"] + [f"err_eom_{k}" for k in (1, 2, 3)]
        rows = []
        if args.device:
            from .device import load_device, noisy_ground_energy

            params = load_device(args.device)
            results = []
            for row in table:
                h = build_h2_hamiltonian(row)
                r = noisy_ground_energy(h, params, args.grid)
                results.append((row, h, r.energy, r.rho_opt))
        else:
            mode = EnergyMode.parse(args.mode, np.random.default_rng(args.seed))
            cfg = SPSAConfig(seed=args.seed, max_iterations=args.max_iter)
            curve = dissociation_curve(table, cfg, mode, args.runs)
            results = []
            for row, (_, res) in zip(table, curve):
                h = build_h2_hamiltonian(row)
                state = prepare_trial(res.theta_opt, res.phi_opt)
                results.append((row, h, expectation(state, h), state))
        for row, h, e_vqe, state in results:
            spec = exact_spectrum(h).eigenvalues
            try:
                eom = solve_eom(build_eom_system(state, h), e_vqe).absolute_energies
            except NumericalError:
                eom = np.array([])
            eom = list(eom[:3]) if len(eom) >= 3 else list(eom) + [math.nan] * (3 - len(eom))
            rows.append(
                [row.bond_length, *spec, e_vqe, *eom, e_vqe - spec[0]]
                + [eom[k] - spec[k + 1] for k in range(3)]
            )
        out = Path(args.out)
        _write_csv(out, header, rows)
        return [out]

    return _run("dissociation", args, [_table_path(args), args.device], body)


# --------------------------------------------------------------------------- process tomography


def cmd_qpt(args) -> int:
    from .device import NS, load_device, noisy_gate_channel
    from .qcore import u_ex
    from .tomography import (
        channel_to_chi,
        fit_exponential_decay,
        fit_phase_fidelity,
        process_fidelity,
        unitary_chi,
    )

    def body():
        params = load_device(args.device)
        out = Path(args.out)
        fit_path = out.with_name(out.name + ".fit.json")
        if args.sweep == "phi":
            phis = np.linspace(0, 2 * math.pi, args.points, endpoint=False)
            rows, fixed = [], []
            target_fixed = unitary_chi(u_ex(math.pi, 0.0))
            for phi in phis:
                chi = channel_to_chi(noisy_gate_channel(math.pi, phi, params))
                f_move = process_fidelity(chi, unitary_chi(u_ex(math.pi, phi)))
                f_fixed = process_fidelity(chi, target_fixed)
                rows.append([phi, f_move, f_fixed, chi.trace])
                fixed.append((phi, f_fixed))
            _write_csv(out, ["phi", "F_vs_target", "F_vs_iswap", "trace"], rows)
            fit = fit_phase_fidelity(fixed)
            _write_json(fit_path, {"model": "phase", "F0": fit.F0, "phi0": fit.phi0, "residual": fit.residual})
        else:
            thetas = math.pi * np.arange(1, args.points + 1) / 4
            rows = []
            for th in thetas:
                chi = channel_to_chi(noisy_gate_channel(th, 0.0, params))
                f = process_fidelity(chi, unitary_chi(u_ex(th, 0.0)))
                rows.append([th, th / math.pi * params.tau_pi / NS, f, chi.trace])
            _write_csv(out, ["theta", "duration_ns", "F", "trace"], rows)
            t_us = np.array([r[1] for r in rows]) / 1e3
            a, tau = fit_exponential_decay(t_us, [r[2] for r in rows])
            _write_json(fit_path, {"model": "exponential", "A": a, "decay_time_us": tau})
        return [out, fit_path]

    return _run("qpt", args, [_device_path(args)], body)


# --------------------------------------------------------------------------- randomized benchmarking


def cmd_rb(args) -> int:
    from .tomography import clifford_table, depolarizing_provider, device_provider, ideal_provider, rb_iswap

    def body():
        table = clifford_table()
        if args.noise == "none":
            provider = ideal_provider(table)
        elif args.noise.startswith("depolarizing:"):
            provider = depolarizing_provider(float(args.noise.split(":", 1)[1]), table)
        elif args.noise == "device":
            from .device import load_device

            provider = device_provider(load_device(args.device), table)
        else:
            raise ContractError(f"unknown noise model {args.noise!r}")
        res = rb_iswap(provider, args.lengths, args.nseq, np.random.default_rng(args.seed), table)
        out = Path(args.out)
        _write_csv(out, ["m", "survival"], list(zip(res.sequence_lengths, res.survival)))
        fit_path = out.with_name(out.name + ".fit.json")
        _write_json(
            fit_path,
            {
                "epg": res.epg,
                "epg_per_iswap": res.epg_per_iswap,
                "fit_params": list(res.fit_params),
                "covariance": res.covariance,
                "fit_fixed_b": list(res.fit_fixed_b),
                "epg_fixed_b": res.epg_fixed_b,
                "primary_fit": res.primary,
                "iswaps_per_clifford": res.iswaps_per_clifford,
            },
        )
        return [out, fit_path]

    return _run("rb", args, [_device_path(args)], body)


# --------------------------------------------------------------------------- coupler T2* sweep


def cmd_t2_sweep(args) -> int:
    from .device import NS, load_device, noisy_ground_energy
    from .hamiltonians import build_h2_hamiltonian, exact_spectrum, load_h2_table

    def body():
        if not args.t2:
            raise ContractError("--t2 needs at least one value")
        if any(t <= 0 for t in args.t2):
            raise ContractError("T2* values must be positive")
        table = load_h2_table(args.table)
        base = load_device(args.device)
        rows = []
        for t2 in args.t2:
            params = base.with_coherence("tc", T2_star=t2 * NS)
            for row in table:
                h = build_h2_hamiltonian(row)
                e0 = exact_spectrum(h).ground_energy
                r = noisy_ground_energy(h, params, args.grid)
                rows.append([t2, row.bond_length, e0, r.energy, r.energy - e0])
        out = Path(args.out)
        _write_csv(out, ["T2_star_ns", "R", "E_exact", "E_noisy", "error"], rows)
        return [out]

    return _run("t2-sweep", args, [_table_path(args), _device_path(args)], body)


# --------------------------------------------------------------------------- depth accounting


def cmd_depth(args) -> int:
    from .circuits import depth_report

    def body():
        if args.qubits < 2 or args.blocks < 0:
            raise ContractError("need --qubits >= 2 and --blocks >= 0")
        rep = depth_report(args.qubits, args.blocks, args.style)
        out = Path(args.out)
        _write_json(out, rep)
        return [out]

    return _run("depth", args, [], body)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description="Exchange-gate VQE and device simulation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dissociation", help="ground and excited energies against bond length")
    d.add_argument("--table", default=None, help="coefficient CSV (default: bundled table)")
    d.add_argument("--device", default=None, help="device JSON; enables the noisy model")
    d.add_argument("--mode", default="shots:1024", help="exact or shots:<n> (noiseless runs)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--runs", type=int, default=5, help="best-of-k VQE runs per bond length")
    d.add_argument("--max-iter", type=int, default=200)
    d.add_argument("--grid", type=_parse_grid, default=(201, 201), help="noisy grid, e.g. 201x201")
    d.add_argument("--out", default="dissociation.csv")
    d.set_defaults(func=cmd_dissociation)

    q = sub.add_parser("qpt", help="process fidelity sweeps of the simulated gate")
    q.add_argument("--device", default=None)
    q.add_argument("--sweep", choices=("phi", "theta"), required=True)
    q.add_argument("--points", type=int, default=None, help="phi: samples over 2 pi; theta: multiples of pi/4")
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--out", default="qpt.csv")
    q.set_defaults(func=cmd_qpt)

    r = sub.add_parser("rb", help="randomized benchmarking of the iSWAP primitive")
    r.add_argument("--device", default=None)
    r.add_argument("--noise", default="device", help="device, none or depolarizing:<q>")
    r.add_argument("--lengths", type=_int_list, default=[1, 2, 4, 8, 16, 32])
    r.add_argument("--nseq", type=int, default=20)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="rb.csv")
    r.set_defaults(func=cmd_rb)

    t = sub.add_parser("t2-sweep", help="noisy ground-state error against coupler T2*")
    t.add_argument("--table", default=None)
    t.add_argument("--device", default=None)
    t.add_argument("--t2", type=_float_list, default=[20.0, 100.0, 200.0, 500.0], help="T2* values in ns")
    t.add_argument("--grid", type=_parse_grid, default=(201, 201))
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default="t2_sweep.csv")
    t.set_defaults(func=cmd_t2_sweep)

    c = sub.add_parser("depth", help="depth and runtime of heuristic circuits")
    c.add_argument("--qubits", type=int, required=True)
    c.add_argument("--blocks", type=int, required=True)
    c.add_argument("--style", choices=("exchange", "cnot", "decomposed"), default="exchange")
    c.add_argument("--out", default="depth.json")
    c.set_defaults(func=cmd_depth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.command == "qpt" and args.points is None:
        args.points = 16 if args.sweep == "phi" else 8
    if getattr(args, "points", 1) is not None and getattr(args, "points", 1) < 1:
        print("error: --points must be positive", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
