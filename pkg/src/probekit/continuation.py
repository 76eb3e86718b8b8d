"""Three-spheres checks for harmonic functions and point-source Runge fits.

In the plane a "sphere" is a circle; sup-norms over balls are taken on
their boundary circles, which is exact for harmonic functions by the
maximum principle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError
from .fundsol import gamma

log = logging.getLogger(__name__)

CIRCLE_SAMPLES = 1440


@dataclass(frozen=True)
class ThreeSpheresParams:
    l1: float
    l2: float
    tau: float = 1.0

    def __post_init__(self):
        if not 1 < self.l1 < self.l2:
            raise ArgumentError(f"need 1 < l1 < l2, got l1={self.l1}, l2={self.l2}")
        if not 0 < self.tau <= 1:
            raise ArgumentError(f"tau must lie in (0, 1], got {self.tau}")

    @property
    def homogeneous_tau(self) -> float:
        """Exponent ``log(l2/l1)/log(l2)`` that is sharp for ``Re z^m``."""
        return math.log(self.l2 / self.l1) / math.log(self.l2)


@dataclass(frozen=True)
class ThreeSpheresResult:
    inner: float
    middle: float
    outer: float
    lhs: float
    rhs: float
    satisfied: bool


def circle_sup(v, x, r, n=CIRCLE_SAMPLES) -> float:
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.asarray(x, dtype=float) + r * np.column_stack([np.cos(ang), np.sin(ang)])
    return float(np.max(np.abs(v(pts))))


def _norms(v, x, r, params):
    return (circle_sup(v, x, r), circle_sup(v, x, params.l1 * r), circle_sup(v, x, params.l2 * r))


def three_spheres_check(v, x, r, params: ThreeSpheresParams, harmonic_radius=None) -> ThreeSpheresResult:
    """Check ``‖v‖_{B_{l1 r}} ≤ ‖v‖^τ_{B_r} ‖v‖^{1-τ}_{B_{l2 r}}``.

    Parameters
    ----------
    v : callable
        Maps an ``(n, 2)`` array of points to values of a harmonic function.
    harmonic_radius : float, optional
        Radius around ``x`` where ``v`` is known to be harmonic.
    """
    if harmonic_radius is not None and params.l2 * r > harmonic_radius:
        raise DomainError(f"B_(l2 r) of radius {params.l2 * r:.4g} exits the harmonicity region")
    n0, n1, n2 = _norms(v, x, r, params)
    rhs = n0**params.tau * n2 ** (1 - params.tau)
    return ThreeSpheresResult(n0, n1, n2, n1, rhs, bool(n1 <= rhs * (1 + 1e-12)))


def estimate_tau(ensemble, x, r, l1, l2, tol=1e-3) -> float:
    """Largest τ in (0, 1] for which every ensemble member passes, by bisection."""
    ensemble = list(ensemble)
    if not ensemble:
        raise ArgumentError("estimate_tau needs a nonempty ensemble")
    base = ThreeSpheresParams(l1, l2)
    norms = [_norms(v, x, r, base) for v in ensemble]

    def ok(tau):
        return all(n1 <= n0**tau * n2 ** (1 - tau) * (1 + 1e-12) for n0, n1, n2 in norms)

    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol / 4:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def homogeneous_harmonic(m, phase=0.0):
    """``Re(e^{-iφ}(x₁ + i x₂)^m)``."""

    def v(pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        return np.real(np.exp(-1j * phase) * z**m)

    return v


def random_harmonic(rng: np.random.Generator, degree=10):
    """Random combination of ``Re z^m`` and ``Im z^m`` for ``m ≤ degree``."""
    a = rng.standard_normal(degree + 1)
    b = rng.standard_normal(degree + 1)
    b[0] = 0.0

    def v(pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        powers = z[:, None] ** np.arange(degree + 1)
        return powers.real @ a + powers.imag @ b

    return v


@dataclass(frozen=True)
class SourceCurve:
    """Charges equally spaced on a circle enclosing Ω.

    ``reg`` fixes the Tikhonov weight (relative to the largest singular
    value); ``None`` selects it by the L-curve corner.
    """

    center: tuple
    radius: float
    n_sources: int
    reg: float = None

    def sources(self) -> np.ndarray:
        ang = 2 * np.pi * np.arange(self.n_sources) / max(self.n_sources, 1)
        c = np.asarray(self.center, dtype=float)
        return c + self.radius * np.column_stack([np.cos(ang), np.sin(ang)])

    @classmethod
    def around(cls, dom, margin, n_sources, reg=None) -> "SourceCurve":
        if margin <= 0:
            raise ArgumentError("source curve margin must be positive")
        return cls(tuple(dom.outer.center), dom.outer.r_max + margin, n_sources, reg)


@dataclass(frozen=True)
class RungeFit:
    weights: np.ndarray
    sources: np.ndarray
    residual: float
    reg: float

    def evaluate(self, pts) -> np.ndarray:
        if len(self.sources) == 0:
            return np.zeros(len(pts))
        return kernel_matrix(pts, self.sources) @ self.weights


def kernel_matrix(pts, sources) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return gamma(pts[:, None, :], np.asarray(sources)[None, :, :]).value


def _lcurve_corner(s, beta, b_perp2, grid):
    """Regularization at the maximal-curvature point of the L-curve."""
    rho, eta = [], []
    for lam in grid:
        f = s**2 / (s**2 + lam**2)
        rho.append(math.sqrt(np.sum(((1 - f) * beta) ** 2) + b_perp2))
        eta.append(math.sqrt(np.sum((f * beta / s) ** 2)))
    x = np.log(np.maximum(rho, 1e-300))
    y = np.log(np.maximum(eta, 1e-300))
    t = np.log(grid)
    dx, dy = np.gradient(x, t), np.gradient(y, t)
    ddx, ddy = np.gradient(dx, t), np.gradient(dy, t)
    kappa = (dx * ddy - ddx * dy) / np.maximum((dx * dx + dy * dy) ** 1.5, 1e-300)
    return float(grid[int(np.argmax(kappa))])


def runge_approximate(y, curve: SourceCurve, eval_set, dom=None, warn=True) -> RungeFit:
    """Fit ``Σ_j w_j Γ(·, s_j) ≈ Γ(·, y)`` on ``eval_set`` by ridge regression.

    Returns the weights and the relative residual on ``eval_set``. A
    warning is logged when the fit is ill-conditioned and inaccurate,
    unless ``warn`` is False.

    Raises
    ------
    DomainError
        If ``dom`` is given and the source curve does not enclose Ω.
    """
    y = np.asarray(y, dtype=float)
    pts = np.atleast_2d(np.asarray(eval_set, dtype=float))
    b = gamma(pts, y).value
    bn = float(np.linalg.norm(b))
    src = curve.sources()
    if dom is not None and curve.n_sources and np.any(dom.contains(src)):
        raise DomainError("source curve must lie outside Ω̄")
    if curve.n_sources == 0:
        return RungeFit(np.zeros(0), src, 1.0 if bn > 0 else 0.0, 0.0)
    A = kernel_matrix(pts, src)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    beta = U.T @ b
    b_perp2 = max(bn**2 - float(beta @ beta), 0.0)
    if curve.reg is None:
        grid = s[0] * np.logspace(-14, 0, 141)
        lam = _lcurve_corner(s, beta, b_perp2, grid)
    else:
        lam = curve.reg * s[0]
    w = Vt.T @ (s / (s**2 + lam**2) * beta)
    res = float(np.linalg.norm(A @ w - b) / bn) if bn > 0 else 0.0
    if warn and s[-1] / s[0] < 1e-15 and res > 1e-2:
        log.warning("ill-conditioned source fit: residual %.3g with condition %.3g", res, s[0] / s[-1])
    return RungeFit(w, src, res, lam)


def needle_eval_set(dom, entry, y, width, n_grid=60, n_boundary=256):
    """Points of Ω and ∂Ω away from the segment from ``entry`` to ``y``.

    The target ``Γ(·, y)`` is harmonic off the needle, so it can be
    approximated there by sources outside Ω.
    """
    pts = _omega_samples(dom, n_grid, n_boundary)
    a = np.asarray(entry, dtype=float)
    d = np.asarray(y, dtype=float) - a
    L2 = float(d @ d)
    t = np.clip(((pts - a) @ d) / L2, 0.0, 1.0)
    dist = np.linalg.norm(pts - (a + t[:, None] * d), axis=1)
    return pts[dist > width]


def _omega_samples(dom, n_grid, n_boundary):
    c = np.asarray(dom.outer.center)
    R = dom.outer.r_max
    g = np.linspace(-R, R, n_grid)
    X, Y = np.meshgrid(g, g)
    grid = c + np.column_stack([X.ravel(), Y.ravel()])
    grid = grid[dom.contains(grid)]
    th = np.linspace(0, 2 * np.pi, n_boundary, endpoint=False)
    return np.vstack([grid, dom.outer.point(th)])


def wedge_eval_set(dom, entry, y, half_angle, rho, n_grid=80, n_boundary=256):
    """Points of Ω and ∂Ω outside a wedge behind ``y`` and a disk around it.

    The wedge has its apex at ``y``, opens toward ``entry`` with the given
    half-angle and contains the straight needle. Its complement stays
    simply connected with a connected exterior, and the fit is far better
    conditioned than with a thin tube around the needle.
    """
    pts = _omega_samples(dom, n_grid, n_boundary)
    y = np.asarray(y, dtype=float)
    d = np.asarray(entry, dtype=float) - y
    d /= np.linalg.norm(d)
    v = pts - y
    r = np.linalg.norm(v, axis=1)
    cos = (v @ d) / np.maximum(r, 1e-300)
    return pts[(r > rho) & (cos < math.cos(half_angle))]
