"""Batch front end: structured config in, seeded runs, CSV/JSON out.

Subcommands::

    collapse-sim run            --config run.yaml [--seed N] [--out DIR]
    collapse-sim analyze rate   --config run.yaml [--out DIR]
    collapse-sim analyze pair-potential | kappa-scan | linearity ...
    collapse-sim presets        [--json]

Exit codes: 0 success, 2 invalid configuration, 3 numerical guard tripped.
CSV files carry a header row with units and 17 significant digits, so a
(config, seed) pair reproduces them byte for byte.  The JSON summary echoes
the resolved configuration (its wall_time field is the one value excluded
from the byte-reproducibility contract).  COLLAPSE_SIM_THREADS limits the
ensemble worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import analysis
from .config import ConfigError, RunConfig, build_initial_state, load_config
from .engine import run_trajectory
from .lattice import GuardError
from .models import (LATTICE_MAPPING_FORMULA, PRESETS, build_model,
                     preset_lattice_values)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3

ATOMIC_MASS_KG = 1.66053906892e-27


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _worker_count(ensemble: int) -> int:
    env = os.environ.get("COLLAPSE_SIM_THREADS")
    if env:
        try:
            n = max(1, int(env))
        except ValueError:
            n = 1
        return min(n, ensemble)
    return min(4, ensemble)


def _trajectory_rows(cfg: RunConfig, rec):
    header = ["t (lattice time)", "trace (1)", "purity (1)"]
    header += [f"x{n} (length)" for n in range(cfg.spec.particles.count)]
    header += [f"abs_rho_{x}_{y} (1)" for x, y in cfg.offdiagonal_pairs]
    header += [f"signal_site{s} (mass/volume)" for s in cfg.signal_sites]
    rows = []
    for j in range(len(rec.times)):
        row = [rec.times[j], rec.trace[j], rec.purity[j]]
        row += list(rec.positions[j])
        if rec.offdiagonals is not None:
            row += list(rec.offdiagonals[j])
        if rec.signals is not None:
            row += [rec.signals[j].reshape(-1)[s] for s in cfg.signal_sites]
        rows.append(row)
    return header, rows


def cmd_run(cfg: RunConfig, out_dir: Path) -> int:
    t0 = time.perf_counter()
    model = build_model(cfg.spec)
    psi = build_initial_state(cfg)
    if cfg.representation == "pure":
        initial = psi
    else:
        initial = np.outer(psi, psi.conj())
    unconditional = cfg.representation == "mean"
    seeds = [cfg.seed + i for i in range(cfg.ensemble)]

    def one(seed):
        return run_trajectory(
            initial, model, cfg.dt, cfg.steps, seed,
            record_every=cfg.record_every,
            record_signal=bool(cfg.signal_sites),
            offdiagonal_pairs=cfg.offdiagonal_pairs,
            snapshot_every=cfg.snapshot_every,
            unconditional=unconditional)

    if len(seeds) == 1:
        records = [one(seeds[0])]
    else:
        with ThreadPoolExecutor(max_workers=_worker_count(len(seeds))) as pool:
            records = list(pool.map(one, seeds))

    out_dir.mkdir(parents=True, exist_ok=True)
    diagnostics = []
    for i, rec in enumerate(records):
        header, rows = _trajectory_rows(cfg, rec)
        _write_csv(out_dir / f"trajectory_{i:04d}.csv", header, rows)
        diagnostics.append({
            "seed": rec.seed,
            "final_trace": rec.trace[-1],
            "final_purity": rec.purity[-1],
            "min_eigenvalue": (None if rec.min_eigenvalue is None
                               else float(rec.min_eigenvalue.min())),
            "positivity_events": len(rec.positivity_warnings),
        })
    summary = {
        "config": cfg.raw,
        "seeds": seeds,
        "trajectories": diagnostics,
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")
    return EXIT_OK


def _analyze_rate(cfg: RunConfig, out_dir: Path) -> int:
    block = cfg.analyze.get("rate", {})
    seps = block.get("separations", list(range(0, max(2, min(cfg.spec.grid.dims) // 4 + 1))))
    axis = int(block.get("axis", 0))
    prof = analysis.decoherence_profile(cfg.spec, seps, axis=axis)
    rows = zip(prof.separations, prof.intrinsic, prof.backaction, prof.total)
    _write_csv(out_dir / "rate.csv",
               ["d (length)", "rate_intrinsic (1/time)",
                "rate_backaction (1/time)", "rate_total (1/time)"], rows)
    return EXIT_OK


def _analyze_pair_potential(cfg: RunConfig, out_dir: Path) -> int:
    block = cfg.analyze.get("pair_potential", {})
    seps = block.get("separations")
    if seps is None:
        L = cfg.spec.grid.dims[0]
        seps = list(range(1, L // 2 + 1))
    rows = analysis.pair_potential_curve(cfg.spec, seps,
                                         axis=int(block.get("axis", 0)),
                                         corrected=bool(block.get("corrected", True)))
    _write_csv(out_dir / "pair_potential.csv",
               ["d (length)", "V_inter (energy)", "V_corrected (energy)",
                "newton_ratio (1)"],
               ((r.separation, r.potential, r.corrected, r.newton_ratio) for r in rows))
    return EXIT_OK


def _analyze_kappa_scan(cfg: RunConfig, out_dir: Path) -> int:
    block = cfg.analyze.get("kappa_scan", {})
    kappas = block.get("kappas", [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0])
    sep = int(block.get("separation", 3))
    rows, best = analysis.kappa_scan(cfg.spec, kappas, sep)
    _write_csv(out_dir / "kappa_scan.csv",
               ["kappa (1)", "rate_total (1/time)", "is_minimum (0/1)"],
               ((k, r, 1.0 if k == best else 0.0) for k, r in rows))
    return EXIT_OK


def _analyze_linearity(cfg: RunConfig, out_dir: Path) -> int:
    block = cfg.analyze.get("linearity", {})
    t = float(block.get("time", 0.2))
    samples = int(block.get("samples", 200))
    model = build_model(cfg.spec)
    init = cfg.initial[0]
    if init.get("type") != "cat":
        raise ConfigError(["analyze.linearity needs a cat initial state for particle 0"])
    from .config import single_particle_state
    grid = cfg.spec.grid
    a = single_particle_state(grid, {"type": "gaussian", "center": init["centers"][0],
                                     "width": init.get("width", 1.0)})
    b = single_particle_state(grid, {"type": "gaussian", "center": init["centers"][1],
                                     "width": init.get("width", 1.0)})
    # orthonormalize so superposition and mixture prepare the same average exactly
    b = b - (a.conj() @ b) * a
    b = b / np.linalg.norm(b)
    plus = (a + b) / np.sqrt(2.0)
    minus = (a - b) / np.sqrt(2.0)
    ens_sup = [(0.5, plus), (0.5, minus)]
    ens_mix = [(0.5, a), (0.5, b)]
    report = analysis.linearity_witness(model, ens_sup, ens_mix, t, cfg.dt,
                                        n_samples=samples, seed0=cfg.seed)
    out = {"trace_distance": float(report.distance),
           "tolerance": float(report.tolerance), "linear": bool(report.linear),
           "time": report.time, "samples": report.n_samples,
           "model_kind": cfg.spec.kind}
    with open(out_dir / "linearity.json", "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, default=float)
        fh.write("\n")
    return EXIT_OK


def cmd_analyze(subcommand: str, cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    handlers = {
        "rate": _analyze_rate,
        "pair-potential": _analyze_pair_potential,
        "kappa-scan": _analyze_kappa_scan,
        "linearity": _analyze_linearity,
    }
    return handlers[subcommand](cfg, out_dir)


def cmd_presets(as_json: bool) -> int:
    payload = {"presets": {}, "lattice_mapping": LATTICE_MAPPING_FORMULA}
    for key, preset in PRESETS.items():
        entry = dict(preset)
        entry["lattice_example"] = preset_lattice_values(
            preset, length_m=preset["sigma_m"], mass_kg=ATOMIC_MASS_KG)
        payload["presets"][key] = entry
    if as_json:
        print(json.dumps(payload, indent=2, default=float))
        return EXIT_OK
    for key, entry in payload["presets"].items():
        print(f"{key}: {entry['description']}")
        print(f"  sigma = {entry['sigma_m']:g} m")
        if entry["gamma_over_hbar2_si"] is not None:
            print(f"  gamma/hbar^2 = {entry['gamma_over_hbar2_si']:g} m^3 kg^-2 s^-1"
                  f"  ({entry['gamma_note']})")
        else:
            print(f"  {entry['gamma_note']}")
        if entry["kappa"] is not None:
            print(f"  kappa = {entry['kappa']:g}")
        print(f"  G = {entry['G_si']:g} m^3 kg^-1 s^-2")
        ex = entry["lattice_example"]
        print(f"  lattice example (ell = sigma, mu = 1 u): tau = {ex['time_unit_s']:.6g} s, "
              f"sigma_lat = {ex['sigma_lattice']:g}, G_lat = {ex['G_lattice']:.6g}")
    print(f"\nlattice mapping: {LATTICE_MAPPING_FORMULA}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collapse-sim",
                                     description="monitored-gravity lattice runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate seeded trajectories")
    p_an = sub.add_parser("analyze", help="closed-form observables")
    p_an.add_argument("what", choices=["rate", "pair-potential", "kappa-scan", "linearity"])
    for p in (p_run, p_an):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
    p_pre = sub.add_parser("presets", help="physical parameter presets")
    p_pre.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return cmd_presets(args.json)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = Path(args.out)
    try:
        if args.command == "run":
            return cmd_run(cfg, out_dir)
        return cmd_analyze(args.what, cfg, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
