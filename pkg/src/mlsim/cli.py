"""Command-line entry point: experiment orchestration and file emission.

Subcommands: soliton, simulate, simulate-lab, stability, lowerbound,
jacobian, gradcheck, atlas.  Every run writes a deterministic report.json
(and CSV/binary outputs) plus a manifest.json with provenance/timing.

Exit codes: 0 all invariant checks pass, 1 a numerical check failed (named
on stderr), 2 configuration errors (all violations listed).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, dynamics, io
from .analysis import (jacobian_entries, jacobian_vs_finite_difference,
                       lower_bound_check, solenoidal_perturbation,
                       stability_experiment)
from .config import load_config, parse_config, validate
from .dynamics import ParticleKind
from .errors import ConfigError, DomainError, InversionError
from .kspace import KSpaceIntegrals, kinetic_momentum
from .soliton import SolitonParams, build_soliton, solve_soliton_params
from .spectral import Grid, VectorField, divergence_max, make_charge_density, norms

SNAPSHOT_PLANES = ("A1", "A2", "Pi1", "Pi2")


def worker_count():
    cap = os.environ.get("MLSIM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def parallel_map(fn, items):
    """Order-preserving map, threaded when MLSIM_THREADS allows."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Shared setup
# ---------------------------------------------------------------------------

class Check:
    def __init__(self, name, value, tolerance, ok=None, direction="<="):
        self.name = name
        self.value = float(value)
        self.tolerance = float(tolerance)
        if ok is None:
            ok = value <= tolerance if direction == "<=" else value >= tolerance
        self.ok = bool(ok)
        self.direction = direction

    def as_json(self):
        return {"value": self.value, "tolerance": self.tolerance,
                "direction": self.direction, "pass": self.ok}


def _setup(cfg):
    grid = Grid(L=cfg["grid.L"], N=cfg["grid.N"])
    rho = make_charge_density(cfg["rho.shape"], cfg["rho.sigma"],
                              cfg["rho.amplitude"], grid)
    particle = ParticleKind(cfg["particle.kind"], m=cfg["particle.m"], I=cfg["particle.I"])
    return grid, rho, particle


def _soliton_params(cfg, rho, particle):
    """Parameters from soliton.v/omega, or by inversion when momenta set."""
    if cfg["momenta.P"] is not None:
        return solve_soliton_params(np.asarray(cfg["momenta.P"]), cfg["momenta.M"],
                                    rho, kind=particle)
    return SolitonParams(cfg["soliton.v"], cfg["soliton.omega"])


def _perturbed_initial(cfg, rho, particle, record):
    """Soliton plus seeded perturbation, velocities preserved at t = 0."""
    grid = rho.grid
    delta = cfg["perturbation.delta"]
    pert = solenoidal_perturbation(grid, cfg["experiment.seed"], amplitude=delta,
                                   sigma_p=cfg["perturbation.sigma_p"])
    Ah = record.A.hat + pert.dA.hat
    Pih = record.Pi.hat + pert.dPi.hat
    pi_gradA, A_rho, jy_A = dynamics.field_couplings(grid, rho, Ah, Pih)
    pkin = kinetic_momentum(record.params.v_array, particle.m, particle.relativistic)
    P = pkin - pi_gradA + A_rho
    M = particle.I * record.params.omega - jy_A
    return dynamics.ReducedState(
        A=VectorField(grid, hat=Ah, solenoidal=True),
        Pi=VectorField(grid, hat=Pih, solenoidal=True),
        P=P, M=float(M), q=np.zeros(2), phi=0.0, t=0.0)


def _atlas_row(rho, particle, params, integrals):
    rec = build_soliton(params, rho, kind=particle)
    det = jacobian_entries(float(np.linalg.norm(params.v_array)), params.omega,
                           rho, kind=particle, integrals=integrals).det
    return [params.v[0], params.v[1], params.omega, rec.P[0], rec.P[1], rec.M,
            norms(rec.A)["h1dot"], norms(rec.Pi)["l2"], det], rec


def _snapshot(outdir, name, grid, t, A, Pi):
    vals_A, vals_Pi = A.values, Pi.values
    return io.write_field_snapshot(
        outdir / name, grid, t,
        [("A1", vals_A[0]), ("A2", vals_A[1]), ("Pi1", vals_Pi[0]), ("Pi2", vals_Pi[1])])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def run_soliton(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    ks = KSpaceIntegrals(rho, mode="lattice")
    params = _soliton_params(cfg, rho, particle)
    row, rec = _atlas_row(rho, particle, params, ks)

    state = rec.to_state()
    dA, dPi = dynamics.reduced_rhs(state, rho, particle)
    scale = norms(rec.A)["h1dot"] + norms(rec.Pi)["l2"] + 1.0
    stat = (norms(dA)["h1dot"] + norms(dPi)["l2"]) / scale
    pi_res = norms(VectorField(grid, hat=rec.Pi.hat + 1j * (
        params.v[0] * grid.kk[0] + params.v[1] * grid.kk[1]) * rec.A.hat))["l2"]
    checks = [
        Check("stationarity_residual", stat, 1e-8),
        Check("velocity_identity", stat_velocity(state, rho, particle, params), 1e-8),
        Check("pi_transport_identity", pi_res / scale, 1e-10),
        Check("solenoidal_A", divergence_max(rec.A), 1e-10),
        Check("solenoidal_Pi", divergence_max(rec.Pi), 1e-10),
    ]
    outputs = [
        io.write_csv(outdir / "soliton.csv", io.ATLAS_COLUMNS, [row]),
        _snapshot(outdir, "soliton_fields.mls2", grid, 0.0, rec.A, rec.Pi),
    ]
    measured = {"P": [row[3], row[4]], "M": row[5], "jacobian_det": row[8],
                "v": list(params.v), "omega": params.omega}
    return checks, outputs, measured


def stat_velocity(state, rho, particle, params):
    qdot, phidot = dynamics.particle_velocities(state, rho, particle)
    return float(np.linalg.norm(qdot - params.v_array) + abs(phidot - params.omega))


def run_atlas(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    ks = KSpaceIntegrals(rho, mode="lattice")
    rows = []
    for speed in cfg["atlas.v_values"]:
        for omega in cfg["atlas.omega_values"]:
            row, _ = _atlas_row(rho, particle, SolitonParams((speed, 0.0), omega), ks)
            rows.append(row)
            log(f"atlas v={speed} omega={omega} det={row[-1]:.6g}")
    min_det = min(r[-1] for r in rows)
    checks = [Check("jacobian_det_min", min_det, 0.0, direction=">=",
                    ok=min_det > 0.0)]
    outputs = [io.write_csv(outdir / "atlas.csv", io.ATLAS_COLUMNS, rows)]
    return checks, outputs, {"rows": len(rows), "min_det": min_det}


def _trajectory_rows_reduced(samples, rho, particle):
    rows = []
    for s in samples:
        qdot, phidot = dynamics.particle_velocities(s, rho, particle)
        H = dynamics.reduced_hamiltonian(s, rho, particle)
        rows.append([s.t, s.q[0], s.q[1], qdot[0], qdot[1], s.phi, phidot,
                     H, H, s.P[0], s.P[1], s.M,
                     divergence_max(s.A), divergence_max(s.Pi)])
    return rows


def run_simulate(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    params = _soliton_params(cfg, rho, particle)
    record = build_soliton(params, rho, kind=particle)
    state = _perturbed_initial(cfg, rho, particle, record)
    dt, T, stride = cfg.dt, cfg["integrator.T"], cfg["integrator.stride"]
    n_steps = int(round(T / dt))
    samples = dynamics.evolve_reduced(state, rho, particle, dt, n_steps,
                                      scheme=cfg["integrator.scheme"], stride=stride)
    rows = _trajectory_rows_reduced(samples, rho, particle)
    drifts = analysis.conservation_monitor(samples, rho, particle)
    final = samples[-1]
    # rk4 holds the acceptance-grade bound; the second-order splitting is
    # held to a documented looser figure at the default step
    h_tol = 1e-8 if cfg["integrator.scheme"] == "rk4" else 1e-6
    checks = [
        Check("H_drift", drifts["reduced_hamiltonian"], h_tol),
        Check("solenoidal_A", max(divergence_max(s.A) for s in samples), 1e-10),
        Check("solenoidal_Pi", max(divergence_max(s.Pi) for s in samples), 1e-10),
        Check("spectrum_top_fraction", dynamics.spectrum_top_fraction(final.A), 1e-10),
    ]
    outputs = [
        io.write_csv(outdir / "trajectory.csv", io.TRAJECTORY_COLUMNS, rows),
        _snapshot(outdir, "final_fields.mls2", grid, final.t, final.A, final.Pi),
    ]
    return checks, outputs, {"drifts": drifts, "steps": n_steps}


def run_simulate_lab(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    params = _soliton_params(cfg, rho, particle)
    record = build_soliton(params, rho, kind=particle)
    red0 = _perturbed_initial(cfg, rho, particle, record)
    lab0 = dynamics.lab_from_reduced(red0, rho, particle)
    dt, T, stride = cfg.dt, cfg["integrator.T"], cfg["integrator.stride"]
    n_steps = int(round(T / dt))
    samples = dynamics.evolve_lab(lab0, rho, particle, dt, n_steps,
                                  scheme=cfg["integrator.scheme"], stride=stride)
    P0, M0 = red0.P, red0.M
    rows = []
    for s in samples:
        qdot, phidot = dynamics.lab_velocities(s, rho, particle)
        red = dynamics.comoving_transform(s, rho, particle)
        H = dynamics.reduced_hamiltonian(
            dynamics.ReducedState(A=red.A, Pi=red.Pi, P=P0, M=M0, q=red.q, phi=red.phi),
            rho, particle)
        E = dynamics.lab_energy(s, rho, particle)
        P = dynamics.lab_momentum(s, rho, particle)
        M = dynamics.lab_angular_momentum(s, rho, particle)
        rows.append([s.t, s.q[0], s.q[1], qdot[0], qdot[1], s.phi, phidot,
                     H, E, P[0], P[1], M,
                     divergence_max(s.A), divergence_max(s.Pi)])
    drifts = analysis.conservation_monitor(samples, rho, particle)
    checks = [
        Check("energy_drift", drifts["energy"], 1e-7),
        Check("momentum_drift", drifts["momentum"], 1e-7),
        Check("angular_momentum_drift", drifts["angular_momentum"], 1e-7),
        Check("solenoidal_A", max(divergence_max(s.A) for s in samples), 1e-10),
    ]
    if particle.relativistic:
        vmax = max(float(np.linalg.norm(dynamics.lab_velocities(s, rho, particle)[0]))
                   for s in samples)
        checks.append(Check("speed_limit", vmax, 1.0, ok=vmax < 1.0))
    final = samples[-1]
    outputs = [
        io.write_csv(outdir / "trajectory_lab.csv", io.TRAJECTORY_COLUMNS, rows),
        _snapshot(outdir, "final_fields_lab.mls2", grid, final.t, final.A, final.Pi),
    ]
    return checks, outputs, {"drifts": drifts, "steps": n_steps}


def run_stability(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    params = _soliton_params(cfg, rho, particle)
    delta = cfg["perturbation.delta"]
    report = stability_experiment(
        params.v_array, params.omega, delta, cfg["integrator.T"], cfg.dt,
        cfg["experiment.seed"], rho, kind=particle,
        scheme=cfg["integrator.scheme"], stride=cfg["integrator.stride"],
        sigma_p=cfg["perturbation.sigma_p"])
    rows = list(zip(report.times, report.d_original, report.d_rematched))
    if delta > 0:
        checks = [
            Check("rematched_distance_bound", report.sup_rematched, 20 * delta),
            Check("original_distance_finite", report.sup_original, 1e6),
        ]
    else:
        checks = [Check("zero_perturbation_identity", report.sup_original, 1e-8)]
    outputs = [io.write_csv(outdir / "stability.csv", io.STABILITY_COLUMNS, rows)]
    measured = {
        "delta": delta,
        "sup_d_original": report.sup_original,
        "sup_d_rematched": report.sup_rematched,
        "stability_constant": (None if delta == 0 else report.stability_constant),
        "matched_v": list(report.matched_params.v),
        "matched_omega": report.matched_params.omega,
    }
    return checks, outputs, measured


def run_lowerbound(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    params = _soliton_params(cfg, rho, particle)
    record = build_soliton(params, rho, kind=particle)
    n = cfg["lowerbound.samples"]
    amps = np.geomspace(cfg["lowerbound.amp_min"], cfg["lowerbound.amp_max"], n)
    seed0 = cfg["experiment.seed"]

    def one(i):
        pert = solenoidal_perturbation(grid, seed0 + i, amplitude=float(amps[i]),
                                       sigma_p=cfg["perturbation.sigma_p"])
        return lower_bound_check(record, pert, rho)

    results = parallel_map(one, range(n))
    min_margin = min(r.delta_H - r.bound for r in results)
    worst_abs = max(r.identity_abs_err for r in results)
    identity_ok = all(r.identity_ok for r in results)
    all_passed = all(r.passed for r in results)
    checks = [
        Check("lower_bound_all_samples", 0.0 if all_passed else 1.0, 0.5, ok=all_passed),
        Check("rearrangement_identity", 0.0 if identity_ok else 1.0, 0.5, ok=identity_ok),
    ]
    if particle.relativistic:
        min_gap = min(r.convexity_gap for r in results)
        checks.append(Check("kinetic_convexity", min_gap, -1e-12, direction=">="))
    measured = {"samples": n, "min_margin": float(min_margin),
                "worst_identity_abs_err": float(worst_abs)}
    return checks, [], measured


def run_jacobian(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    rows, tables = [], []
    for v in cfg["jacobian.v_values"]:
        for omega in cfg["jacobian.omega_values"]:
            t = jacobian_entries(v, omega, rho, kind=particle, mode="box")
            tables.append(t)
            rows.append([getattr(t, c) for c in t.COLUMNS])
            log(f"jacobian v={v} omega={omega} det={t.det:.6g}")
    min_det = min(t.det for t in tables)
    entry_scale = max(abs(t.dM_domega) + abs(t.dP1_dv1) for t in tables)
    worst_zero = max(max(abs(z) for z in t.structural_zeros().values()) for t in tables)
    cs_ok = all(analysis.cauchy_schwarz_check(v, rho, mode="lattice")[2]
                for v in cfg["jacobian.v_values"])
    checks = [
        Check("jacobian_det_min", min_det, 0.0, direction=">=", ok=min_det > 0),
        Check("structural_zeros", worst_zero / entry_scale, 1e-10),
        Check("cauchy_schwarz", 0.0 if cs_ok else 1.0, 0.5, ok=cs_ok),
    ]
    measured = {"min_det": min_det, "tables": len(tables)}
    h = cfg["jacobian.fd_step"]
    if h > 0:
        v0 = cfg["jacobian.v_values"][len(cfg["jacobian.v_values"]) // 2]
        om0 = cfg["jacobian.omega_values"][-1]
        err, _, _ = jacobian_vs_finite_difference(v0, om0, rho, kind=particle, h=h)
        checks.append(Check("fd_match", err, 1e-4))
        measured["fd_point"] = [v0, om0]
        measured["fd_max_rel_err"] = err
    outputs = [io.write_csv(outdir / "jacobian.csv", list(tables[0].COLUMNS), rows)]
    return checks, outputs, measured


def run_gradcheck(cfg, outdir, log):
    grid, rho, particle = _setup(cfg)
    params = _soliton_params(cfg, rho, particle)
    record = build_soliton(params, rho, kind=particle)
    state = _perturbed_initial(cfg, rho, particle, record)
    err = analysis.gradient_check(state, rho, particle, cfg["experiment.seed"],
                                  n_directions=cfg["gradcheck.directions"])
    gap = analysis.relativistic_convexity_check(particle.m, cfg["experiment.seed"], 10000)
    checks = [
        Check("gradient_match", err, 1e-6),
        Check("kinetic_convexity", gap, -1e-12, direction=">="),
    ]
    return checks, [], {"max_rel_err": err, "min_convexity_gap": gap}


RUNNERS = {
    "soliton": run_soliton,
    "atlas": run_atlas,
    "simulate": run_simulate,
    "simulate-lab": run_simulate_lab,
    "stability": run_stability,
    "lowerbound": run_lowerbound,
    "jacobian": run_jacobian,
    "gradcheck": run_gradcheck,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv=None):
    parser = argparse.ArgumentParser(prog="mlsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="experiment config file (key.path = value lines)")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    if args.config is not None:
        if not args.config.exists():
            print(f"config: file not found: {args.config}", file=sys.stderr)
            return 2
        cfg, parse_errors = load_config(args.config)
    else:
        cfg, parse_errors = parse_config("")
    if args.seed is not None:
        cfg.values["experiment.seed"] = args.seed
    errors = parse_errors + validate(cfg)
    if errors:
        for e in errors:
            print(f"config: {e}", file=sys.stderr)
        return 2

    def log(msg):
        if not args.quiet:
            print(msg)

    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    try:
        checks, outputs, measured = RUNNERS[args.command](cfg, outdir, log)
    except (ConfigError, DomainError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except InversionError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1

    report = {
        "experiment": args.command,
        "tag": cfg["experiment.tag"],
        "seed": cfg["experiment.seed"],
        "params": cfg.as_json(),
        "checks": {c.name: c.as_json() for c in checks},
        "measured": measured,
    }
    outputs = list(outputs)
    outputs.append(io.write_json(outdir / "report.json", report))
    finished = datetime.now(timezone.utc).isoformat()
    io.write_manifest(outdir / "manifest.json", cfg.canonical_text(), __version__,
                      started, finished, outputs)

    failed = [c for c in checks if not c.ok]
    for c in checks:
        log(f"{'PASS' if c.ok else 'FAIL'} {c.name}: value={c.value:.6g} "
            f"tolerance={c.tolerance:.6g}")
    if failed:
        print(f"numerical check failed: {failed[0].name} "
              f"(value {failed[0].value:.6g}, tolerance {failed[0].tolerance:.6g})",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
