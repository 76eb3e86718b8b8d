"""Closed-form fundamental solutions of the Laplacian and of the two-phase
operator ``div((1 + (k-1)χ₊)∇·)`` with χ₊ the indicator of ``{x_n > 0}``.

All kernels are vectorized over leading axes: ``x`` and ``y`` broadcast
against each other with the coordinate on the last axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, SingularityError


@dataclass(frozen=True)
class MaterialParams:
    """Conductivity contrast ``k`` of the inclusion phase."""

    k: float

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ArgumentError(f"contrast k must be positive, got {self.k}")
        if self.k == 1:
            raise ArgumentError("contrast k must differ from 1")

    @property
    def mu(self) -> float:
        """Reflection coefficient ``(k-1)/(k+1)``."""
        return (self.k - 1.0) / (self.k + 1.0)


@dataclass(frozen=True)
class FundamentalValue:
    value: np.ndarray
    gradient_x: np.ndarray


def _contrast(mat):
    return float(mat.k if isinstance(mat, MaterialParams) else mat)


def _dim(x, y, dim):
    d = np.shape(x)[-1]
    if np.shape(y)[-1] != d or (dim is not None and dim != d):
        raise ArgumentError(f"point dimension mismatch: x has {d}, y has {np.shape(y)[-1]}, dim={dim}")
    if d not in (2, 3):
        raise ArgumentError(f"dimension must be 2 or 3, got {d}")
    return d


def image_point(x):
    """Reflect the last coordinate: ``(x', x_n) -> (x', -x_n)``."""
    x = np.array(x, dtype=float, copy=True)
    x[..., -1] = -x[..., -1]
    return x


def _kernel(x, y, d, check=True):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = np.sum(diff * diff, axis=-1)
    if check and np.any(r2 == 0):
        raise SingularityError("fundamental solution evaluated at its pole x = y")
    if d == 2:
        val = -np.log(r2) / (4 * np.pi)
        grad = -diff / (2 * np.pi * r2[..., None])
    else:
        r = np.sqrt(r2)
        val = 1.0 / (4 * np.pi * r)
        grad = -diff / (4 * np.pi * (r2 * r)[..., None])
    return val, grad


def gamma(x, y, dim=None) -> FundamentalValue:
    """Free-space Laplace kernel and its x-gradient.

    ``-(1/2π) log|x-y|`` in the plane, ``1/(4π|x-y|)`` in space.
    """
    d = _dim(x, y, dim)
    return FundamentalValue(*_kernel(x, y, d))


def _side(z, side):
    s = np.sign(z)
    return np.where(s == 0, side, s)


def gamma_plus(x, y, mat, dim=None, side=1, x_side=None) -> FundamentalValue:
    """Two-phase half-space kernel, conductivity ``k`` on ``{x_n > 0}``.

    Parameters
    ----------
    x, y : array_like
        Receiver and source points.
    mat : MaterialParams or float
        Contrast ``k``. ``k = 1`` returns the free-space kernel.
    side : {1, -1}
        Half-space whose limit is taken when ``x_n = 0``.
    x_side : array_like, optional
        Phase of each receiver (+1 for conductivity k), overriding the sign
        of ``x_n``. Used when the half-space models a curved interface.

    Notes
    -----
    With ``μ = (k-1)/(k+1)`` the kernel is ``(Γ + μΓ(·,y★))/k`` when both
    points are above the interface, ``2Γ/(k+1)`` when they are on opposite
    sides, and ``Γ - μΓ(·,y★)`` when both are below. A source on the
    interface is unambiguous since ``y★ = y`` there.
    """
    d = _dim(x, y, dim)
    k = _contrast(mat)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x[..., -1] == 0) & (y[..., -1] == 0)):
        raise SingularityError("gamma_plus needs x_n != 0 or y_n != 0")
    mu = (k - 1.0) / (k + 1.0)
    g, dg = _kernel(x, y, d)
    gs, dgs = _kernel(x, image_point(y), d, check=False)
    sx = _side(x[..., -1], side) if x_side is None else np.broadcast_to(x_side, x.shape[:-1])
    sy = _side(y[..., -1], sx)
    up = (sx > 0) & (sy > 0)
    down = (sx < 0) & (sy < 0)
    cross = ~(up | down)
    a = np.where(up, 1.0 / k, np.where(down, 1.0, 2.0 / (k + 1.0)))
    b = np.where(up, mu / k, np.where(down, -mu, 0.0))
    # the reflected term is finite wherever it is used
    gs = np.where(cross, 0.0, gs)
    dgs = np.where(cross[..., None], 0.0, dgs)
    val = a * g + b * gs
    grad = a[..., None] * dg + b[..., None] * dgs
    return FundamentalValue(val, grad)


def to_local(x, origin, normal):
    """Coordinates of plane points in a frame whose last axis is ``normal``."""
    x = np.asarray(x, dtype=float) - np.asarray(origin, dtype=float)
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    t = np.array([-n[1], n[0]])
    return np.stack([x @ t, x @ n], axis=-1), np.stack([t, n])


def gamma_plus_frame(x, y, mat, origin, normal, x_side=None) -> FundamentalValue:
    """Half-space kernel for the plane through ``origin`` (2-D).

    ``normal`` points into the phase of conductivity ``k``. The returned
    gradient is expressed in global coordinates.
    """
    xl, rot = to_local(x, origin, normal)
    yl, _ = to_local(y, origin, normal)
    fv = gamma_plus(xl, yl, mat, x_side=x_side)
    return FundamentalValue(fv.value, fv.gradient_x @ rot)
