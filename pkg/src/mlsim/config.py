"""Plain-text experiment configuration: `key.path = value` lines.

The format is deliberately flat and diff-able.  Blank lines and `#` comments
are ignored; values are scalars, pairs, or comma/space-separated lists.
Unknown keys are rejected, and validation reports every violation (never just
the first) without doing any heavy computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ExperimentConfig", "parse_config", "load_config", "validate"]


def _parse_float(s):
    return float(s)


def _parse_int(s):
    return int(s)


def _parse_str(s):
    return s


def _parse_vec2(s):
    parts = [p for p in s.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_floats(s):
    parts = [p for p in s.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(p) for p in parts)


# key -> (parser, default); None default means "unset"
_SCHEMA = {
    "grid.L": (_parse_float, 32.0),
    "grid.N": (_parse_int, 128),
    "rho.shape": (_parse_str, "laplacian-gaussian"),
    "rho.sigma": (_parse_float, 1.0),
    "rho.amplitude": (_parse_float, 1.0),
    "particle.kind": (_parse_str, "nonrelativistic"),
    "particle.m": (_parse_float, 1.0),
    "particle.I": (_parse_float, 1.0),
    "soliton.v": (_parse_vec2, (0.0, 0.0)),
    "soliton.omega": (_parse_float, 0.0),
    "momenta.P": (_parse_vec2, None),
    "momenta.M": (_parse_float, None),
    "integrator.scheme": (_parse_str, "rk4"),
    "integrator.dt": (_parse_float, None),        # None -> 0.1 * dx
    "integrator.T": (_parse_float, 10.0),
    "integrator.stride": (_parse_int, 10),
    "experiment.tag": (_parse_str, ""),
    "experiment.seed": (_parse_int, 1234),
    "perturbation.delta": (_parse_float, 0.01),
    "perturbation.sigma_p": (_parse_float, 1.0),
    "jacobian.v_values": (_parse_floats, tuple(round(0.1 * i, 1) for i in range(10))),
    "jacobian.omega_values": (_parse_floats, (0.0, 1.0, 5.0)),
    "jacobian.fd_step": (_parse_float, 1e-4),
    "lowerbound.samples": (_parse_int, 100),
    "lowerbound.amp_min": (_parse_float, 1e-3),
    "lowerbound.amp_max": (_parse_float, 1.0),
    "gradcheck.directions": (_parse_int, 20),
    "atlas.v_values": (_parse_floats, (0.0, 0.3, 0.6)),
    "atlas.omega_values": (_parse_floats, (0.0, 1.0, 5.0)),
}

_SCHEMES = ("rk4", "splitstep")
_KINDS = ("nonrelativistic", "relativistic")
_SHAPES = ("laplacian-gaussian", "laplacian-bump")


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def dt(self):
        """Configured dt, defaulting to 0.1 dx."""
        if self.values["integrator.dt"] is not None:
            return self.values["integrator.dt"]
        return 0.1 * self.values["grid.L"] / self.values["grid.N"]

    def canonical_text(self):
        """Sorted key = value rendering used for hashing and provenance."""
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if val is None:
                continue
            if isinstance(val, tuple):
                lines.append(f"{key} = {' '.join(f'{v:.17g}' for v in val)}")
            elif isinstance(val, float):
                lines.append(f"{key} = {val:.17g}")
            else:
                lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def as_json(self):
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in sorted(self.values.items()) if v is not None}


def parse_config(text):
    """Parse config text; returns (ExperimentConfig, [error strings])."""
    values = {k: d for k, (_, d) in _SCHEMA.items()}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            errors.append(f"{key}: unknown key")
            continue
        parser, _ = _SCHEMA[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    return ExperimentConfig(values), errors


def load_config(path):
    return parse_config(Path(path).read_text())


def validate(cfg):
    """Cheap structural validation; returns ALL violations as strings."""
    v = cfg.values
    errors = []
    L, N = v["grid.L"], v["grid.N"]
    if L <= 0:
        errors.append(f"grid.L: must be positive, got {L}")
    if N < 16 or (N & (N - 1)) != 0:
        errors.append(f"grid.N: must be a power of two >= 16, got {N}")
    dx = L / N if N else float("inf")

    sigma = v["rho.sigma"]
    if v["rho.shape"] not in _SHAPES:
        errors.append(f"rho.shape: unknown shape {v['rho.shape']!r}")
    if sigma < 4 * dx:
        errors.append(f"rho.sigma: {sigma} unresolved, need >= 4 dx = {4 * dx}")
    if sigma > L / 8:
        errors.append(f"rho.sigma: {sigma} exceeds box bound L/8 = {L / 8}")

    if v["particle.kind"] not in _KINDS:
        errors.append(f"particle.kind: unknown kind {v['particle.kind']!r}")
    if v["particle.m"] <= 0:
        errors.append("particle.m: must be positive")
    if v["particle.I"] <= 0:
        errors.append("particle.I: must be positive")

    speed = float(np.hypot(*v["soliton.v"]))
    if speed >= 1.0:
        errors.append(f"soliton.v: |v| = {speed:.6g} outside the admissible open set |v| < 1")
    for val in v["jacobian.v_values"] + v["atlas.v_values"]:
        if not 0.0 <= val < 1.0:
            errors.append(f"jacobian/atlas v value {val}: need 0 <= v < 1")
            break

    if v["integrator.scheme"] not in _SCHEMES:
        errors.append(f"integrator.scheme: unknown scheme {v['integrator.scheme']!r}")
    dt = cfg.dt
    if dt <= 0:
        errors.append(f"integrator.dt: must be positive, got {dt}")
    elif dt > 0.5 * dx:
        errors.append(f"integrator.dt: {dt} violates the step bound 0.5 dx = {0.5 * dx}")
    T = v["integrator.T"]
    if T <= 0:
        errors.append(f"integrator.T: must be positive, got {T}")
    elif T > L / 2:
        errors.append(f"integrator.T: {T} exceeds one light-crossing L/2 = {L / 2}")
    if v["integrator.stride"] < 1:
        errors.append("integrator.stride: must be >= 1")

    if v["perturbation.delta"] < 0:
        errors.append("perturbation.delta: must be >= 0")
    if v["perturbation.sigma_p"] <= 0:
        errors.append("perturbation.sigma_p: must be positive")
    if v["lowerbound.samples"] < 1:
        errors.append("lowerbound.samples: must be >= 1")
    if not 0 < v["lowerbound.amp_min"] <= v["lowerbound.amp_max"]:
        errors.append("lowerbound: need 0 < amp_min <= amp_max")
    if v["gradcheck.directions"] < 1:
        errors.append("gradcheck.directions: must be >= 1")
    if v["jacobian.fd_step"] < 0:
        errors.append("jacobian.fd_step: must be >= 0")
    if (v["momenta.P"] is None) != (v["momenta.M"] is None):
        errors.append("momenta: set both momenta.P and momenta.M or neither")
    return errors
