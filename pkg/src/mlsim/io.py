"""File emission: delimited tables, JSON reports, binary field snapshots.

Output rules: floats are written with shortest round-trip formatting (17
significant digits), every value is checked finite before it reaches a file,
and reruns with an identical (config, seed) produce byte-identical CSV/JSON.
The run manifest is the one deliberately non-deterministic file (it carries
wall-clock timestamps and the runtime).
"""

from __future__ import annotations

import hashlib
import json
import struct
from datetime import datetime
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"MLS2"

TRAJECTORY_COLUMNS = ["t", "q1", "q2", "qdot1", "qdot2", "phi", "phidot",
                      "H_reduced", "E_lab", "P1", "P2", "M",
                      "divA_max", "divPi_max"]
ATLAS_COLUMNS = ["v1", "v2", "omega", "P1", "P2", "M",
                 "h1dot_A", "l2_Pi", "jacobian_det"]
STABILITY_COLUMNS = ["t", "d_original", "d_rematched"]


def fmt(x):
    """Render one cell; floats use round-trip precision, bools use 0/1."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if not np.isfinite(v):
        raise ValueError(f"refusing to emit non-finite value {v!r}")
    return f"{v:.17g}"


def write_csv(path, columns, rows):
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} != header width {len(columns)}")
        lines.append(",".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _check_finite(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)
    elif isinstance(obj, float) and not np.isfinite(obj):
        raise ValueError("refusing to emit non-finite value in JSON report")


def write_json(path, obj):
    _check_finite(obj)
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# Binary field snapshots
# ---------------------------------------------------------------------------
# 32-byte little-endian header: magic "MLS2", uint32 N, float64 L, float64 t,
# uint32 number of component planes, 4 zero pad bytes; then ncomp flat
# row-major float64 arrays of shape (N, N).

_HEADER = struct.Struct("<4sIddI4x")


def write_field_snapshot(path, grid, t, planes):
    """planes: ordered dict/list of (name, (N, N) real array); names recorded
    in a sidecar-free convention (documented component order)."""
    arrays = [np.ascontiguousarray(a, dtype="<f8") for _, a in planes]
    for a in arrays:
        if a.shape != (grid.N, grid.N):
            raise ValueError("snapshot plane has wrong shape")
        if not np.isfinite(a).all():
            raise ValueError("refusing to emit non-finite field snapshot")
    header = _HEADER.pack(SNAPSHOT_MAGIC, grid.N, float(grid.L), float(t), len(arrays))
    with open(path, "wb") as f:
        f.write(header)
        for a in arrays:
            f.write(a.tobytes())
    return Path(path)


def read_field_snapshot(path):
    raw = Path(path).read_bytes()
    magic, N, L, t, ncomp = _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return {"N": N, "L": L, "t": t,
            "planes": data.reshape(ncomp, N, N).copy()}


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def config_hash(canonical_text):
    return hashlib.sha256(canonical_text.encode()).hexdigest()


def write_manifest(path, canonical_config, version, started, finished, outputs):
    t0 = datetime.fromisoformat(started)
    t1 = datetime.fromisoformat(finished)
    return write_json(path, {
        "config_sha256": config_hash(canonical_config),
        "code_version": version,
        "started": started,
        "finished": finished,
        "runtime_seconds": (t1 - t0).total_seconds(),
        "outputs": sorted(str(o) for o in outputs),
    })
