"""Figure rendering from the simulator's file formats.

Four figure kinds:

    drift      conserved-quantity deviation curves from a trajectory CSV
    stability  distance time series d(t), overlaying one or more runs
    heatmap    momentum-map Jacobian determinant over (v, omega); any
               non-positive cell is flagged in red with a hatch
    field      component planes of a binary field snapshot

Inputs are never modified; rendering twice produces byte-identical files
(figures carry no timestamps).  Input columns are validated against the
simulator's declared schemas and mismatches raise SchemaError naming the
offending column.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# --- the simulator's file interface (the schemas ARE the boundary) ---------

TRAJECTORY_COLUMNS = ["t", "q1", "q2", "qdot1", "qdot2", "phi", "phidot",
                      "H_reduced", "E_lab", "P1", "P2", "M",
                      "divA_max", "divPi_max"]
STABILITY_COLUMNS = ["t", "d_original", "d_rematched"]
JACOBIAN_COLUMNS = ["v", "omega",
                    "dP1_dv1", "dP1_dv2", "dP1_domega",
                    "dP2_dv1", "dP2_dv2", "dP2_domega",
                    "dM_dv1", "dM_dv2", "dM_domega",
                    "det", "positive"]
SNAPSHOT_MAGIC = b"MLS2"
_SNAPSHOT_HEADER = struct.Struct("<4sIddI4x")

DRIFT_QUANTITIES = ["H_reduced", "E_lab", "P1", "P2", "M"]

KINDS = ("drift", "stability", "heatmap", "field")


class SchemaError(ValueError):
    """An input file does not match the simulator's declared schema."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; options {KINDS}")
        if not self.inputs:
            raise SchemaError("figure spec needs at least one input file")


def load_spec(path):
    """Figure spec from a JSON file: {kind, inputs, output, labels?, ...}."""
    raw = json.loads(Path(path).read_text())
    known = {"kind", "inputs", "output", "title", "xlabel", "ylabel", "labels"}
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown spec keys: {sorted(unknown)}")
    return FigureSpec(**raw)


# ---------------------------------------------------------------------------
# Input readers
# ---------------------------------------------------------------------------

def read_table(path, expected_columns):
    """CSV reader validating the header against a declared schema."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    for col in expected_columns:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    for col in header:
        if col not in expected_columns:
            raise SchemaError(f"{path}: unexpected column {col!r}")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if data.size == 0:
        raise SchemaError(f"{path}: no data rows")
    return {c: data[:, header.index(c)] for c in header}


def read_snapshot(path):
    raw = Path(path).read_bytes()
    if len(raw) < _SNAPSHOT_HEADER.size:
        raise SchemaError(f"{path}: truncated snapshot")
    magic, N, L, t, ncomp = _SNAPSHOT_HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise SchemaError(f"{path}: bad snapshot magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_SNAPSHOT_HEADER.size)
    if data.size != ncomp * N * N:
        raise SchemaError(f"{path}: payload size mismatch")
    return {"N": N, "L": L, "t": t, "planes": data.reshape(ncomp, N, N)}


# ---------------------------------------------------------------------------
# Renderers
# ---------------------------------------------------------------------------

def _new_axes(spec):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=130)
    if spec.title:
        ax.set_title(spec.title)
    return fig, ax


def _label(spec, i, default):
    if i < len(spec.labels):
        return spec.labels[i]
    return default


def _render_drift(spec):
    fig, ax = _new_axes(spec)
    table = read_table(spec.inputs[0], TRAJECTORY_COLUMNS)
    t = table["t"]
    floor = 1e-18
    for name in DRIFT_QUANTITIES:
        q = table[name]
        dev = np.abs(q - q[0]) / max(abs(q[0]), 1.0)
        ax.semilogy(t, np.maximum(dev, floor), label=name)
    ax.set_xlabel(spec.xlabel or "t")
    ax.set_ylabel(spec.ylabel or "relative deviation from t = 0")
    ax.axhline(np.finfo(float).eps, color="grey", lw=0.8, ls=":",
               label="double epsilon")
    ax.legend(fontsize=8)
    return fig


def _render_stability(spec):
    fig, ax = _new_axes(spec)
    for i, path in enumerate(spec.inputs):
        table = read_table(path, STABILITY_COLUMNS)
        label = _label(spec, i, Path(path).stem)
        sup0 = table["d_original"].max()
        ax.semilogy(table["t"], np.maximum(table["d_original"], 1e-18),
                    label=f"{label} (sup {sup0:.2e})")
        ax.semilogy(table["t"], np.maximum(table["d_rematched"], 1e-18),
                    ls="--", color=ax.lines[-1].get_color())
    ax.set_xlabel(spec.xlabel or "t")
    ax.set_ylabel(spec.ylabel or "distance to soliton (solid) / matched (dashed)")
    ax.legend(fontsize=8)
    return fig


def _render_heatmap(spec):
    table = read_table(spec.inputs[0], JACOBIAN_COLUMNS)
    v = np.unique(table["v"])
    om = np.unique(table["omega"])
    det = np.full((len(om), len(v)), np.nan)
    for vi, oi, d in zip(table["v"], table["omega"], table["det"]):
        det[np.searchsorted(om, oi), np.searchsorted(v, vi)] = d
    if np.isnan(det).any():
        raise SchemaError("jacobian sweep is not a full (v, omega) grid")

    fig, ax = _new_axes(spec)
    masked = np.ma.masked_less_equal(det, 0.0)
    mesh = ax.pcolormesh(v, om, masked, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="det of the momentum-map Jacobian")
    bad = ~(det > 0.0)
    if bad.any():
        # non-positive cells get an unmissable marker
        ax.pcolormesh(v, om, np.ma.masked_where(~bad, np.ones_like(det)),
                      shading="nearest", cmap="autumn", vmin=0, vmax=1)
        for i, j in zip(*np.nonzero(bad)):
            ax.plot(v[j], om[i], "kx", ms=12, mew=3)
    ax.set_xlabel(spec.xlabel or "speed v")
    ax.set_ylabel(spec.ylabel or "spin rate omega")
    return fig


def _render_field(spec):
    snap = read_snapshot(spec.inputs[0])
    planes = snap["planes"]
    n = len(planes)
    names = spec.labels or [f"component {i}" for i in range(n)]
    cols = min(n, 2)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4.6 * cols, 3.8 * rows),
                             dpi=130, squeeze=False)
    half = snap["L"] / 2
    extent = (-half, half, -half, half)
    for i in range(rows * cols):
        ax = axes[i // cols][i % cols]
        if i >= n:
            ax.axis("off")
            continue
        vmax = np.max(np.abs(planes[i])) or 1.0
        im = ax.imshow(planes[i].T, origin="lower", extent=extent,
                       cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.set_title(names[i] if i < len(names) else f"component {i}", fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.85)
    if spec.title:
        fig.suptitle(spec.title)
    return fig


_RENDERERS = {
    "drift": _render_drift,
    "stability": _render_stability,
    "heatmap": _render_heatmap,
    "field": _render_field,
}


def render(spec, outdir):
    """Render one figure; returns the written path.

    Deterministic: metadata that would break byte-identity is stripped.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig = _RENDERERS[spec.kind](spec)
    fig.tight_layout()
    out = outdir / spec.output
    fig.savefig(out, metadata={"Software": "mlsplots"})
    plt.close(fig)
    return out
