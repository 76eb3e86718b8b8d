"""DTN1 binary cache files and eigenvalue CSV export.

Layout (little-endian)::

    b"DTN1" | u32 n_boundary | u32 n_total | f64 mesh_h
    | f64 matrix[n_boundary * n_boundary] (row-major)
    | f64 arc_weights[n_boundary]

The file does not store boundary coordinates. ``read_dtn`` rebuilds them
only when the caller supplies the points, otherwise a unit-spaced stand-in
is used and the fractional norms must not be taken from the result.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .forward import DtnMap

MAGIC = b"DTN1"
HEADER = struct.Struct("<4sIId")


def write_dtn(path, dtn: DtnMap) -> Path:
    path = Path(path)
    n = dtn.n_boundary
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, int(dtn.n_total), float(dtn.mesh_h)))
        fh.write(np.ascontiguousarray(dtn.matrix, dtype="<f8").tobytes(order="C"))
        fh.write(np.ascontiguousarray(dtn.arc_weights, dtype="<f8").tobytes())
    return path


def read_raw(path):
    """Header fields, matrix and weights of a DTN1 file."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise FormatError(f"{path}: missing DTN1 magic bytes")
    _, n, n_total, h = HEADER.unpack_from(data)
    expected = HEADER.size + 8 * (n * n + n)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for n_boundary={n}, found {len(data)}")
    off = HEADER.size
    matrix = np.frombuffer(data, dtype="<f8", count=n * n, offset=off).reshape(n, n).astype(float)
    weights = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 * n * n).astype(float)
    return {"n_boundary": n, "n_total": n_total, "mesh_h": h, "matrix": matrix, "arc_weights": weights}


def read_dtn(path, boundary_points=None) -> DtnMap:
    raw = read_raw(path)
    n = raw["n_boundary"]
    if boundary_points is None:
        # stand-in polygon; callers needing fractional norms pass the real points
        t = 2 * np.pi * np.arange(n) / n
        boundary_points = np.column_stack([np.cos(t), np.sin(t)])
    boundary_points = np.asarray(boundary_points, dtype=float)
    if boundary_points.shape != (n, 2):
        raise FormatError(f"{path}: boundary points do not match n_boundary={n}")
    return DtnMap(
        matrix=raw["matrix"], boundary_points=boundary_points,
        arc_weights=raw["arc_weights"], mesh_h=raw["mesh_h"], n_total=raw["n_total"],
    )


def cache_dir():
    """Directory named by ``PROBEKIT_CACHE``, or None."""
    d = os.environ.get("PROBEKIT_CACHE")
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_eigenvalues_csv(path, eigenvalues):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("m,lambda\n")
        for m, lam in enumerate(eigenvalues):
            fh.write(f"{m},{lam:.17g}\n")
    return path
