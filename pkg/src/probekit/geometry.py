"""Domains, inclusions, distances and probe frames in the plane.

Every boundary is a star-shaped curve ``x(θ) = c + r(θ)(cos θ, sin θ)``
whose radius is a trigonometric polynomial, so points, tangents and normals
are available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
import shapely.ops
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .errors import (
    AdmissibilityError,
    ArgumentError,
    GeometryError,
    InternalError,
    RangeError,
    ResolutionError,
)

# Points used when a boundary is replaced by a polygon for membership and
# distance queries. The chord sag for r ~ 1 is below 1e-6.
POLYGON_POINTS = 4096


@dataclass(frozen=True)
class AprioriData:
    """A-priori constants constraining admissible geometries.

    Parameters
    ----------
    rbar : float
        Regularity scale r̄ of the boundaries.
    bigM : float
        Volume bound, ``|Ω| <= M r̄^n``.
    delta_tilde : float
        Minimal distance between the inclusions and ``∂Ω``.
    lipL : float
        Regularity constant L.
    alpha : float
        Hölder exponent of the boundary normals, in ``(0, 1)``.
    dim : int
        Space dimension, 2 or 3.
    """

    rbar: float
    bigM: float
    delta_tilde: float
    lipL: float
    alpha: float
    dim: int = 2

    def __post_init__(self):
        problems = []
        if not self.rbar > 0:
            problems.append("(H1) r̄ > 0")
        if not self.delta_tilde > 0:
            problems.append("(H2) δ̃ > 0")
        if not 0 < self.alpha < 1:
            problems.append("(H1) 0 < α < 1")
        if not self.lipL > 0:
            problems.append("(H1) L > 0")
        if not self.bigM > 0:
            problems.append("(H1) M > 0")
        if self.dim not in (2, 3):
            problems.append("(H1) n ∈ {2, 3}")
        if problems:
            raise AdmissibilityError(problems)

    @property
    def cone_angle(self) -> float:
        """Half-angle ``arctan(1/L)`` of the probe cone."""
        return math.atan(1.0 / self.lipL)

    @property
    def rbar0(self) -> float:
        """Radius below which the half-space kernel is a local model."""
        return min(0.5 * (8.0 * self.lipL) ** (-1.0 / self.alpha), 0.5) * self.rbar / 2.0


@dataclass(frozen=True)
class StarBoundary:
    """Closed curve ``c + r(θ)(cos θ, sin θ)`` with trigonometric radius.

    ``r(θ) = a[0] + Σ_m a[m] cos(mθ) + b[m-1] sin(mθ)``. The curve is
    simple whenever ``r > 0``, which is checked at construction.
    """

    center: tuple
    a: tuple
    b: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "a", tuple(float(c) for c in self.a))
        b = tuple(float(c) for c in self.b)
        if len(b) < len(self.a) - 1:
            b = b + (0.0,) * (len(self.a) - 1 - len(b))
        object.__setattr__(self, "b", b)
        if len(self.center) != 2:
            raise GeometryError("(H1) boundary center must be a 2-D point")
        if len(self.a) < 1 or len(self.b) != len(self.a) - 1:
            raise GeometryError("(H1) radius coefficients need a0 and len(b) == len(a) - 1")
        if not all(math.isfinite(c) for c in self.a + self.b + self.center):
            raise GeometryError("(H1) radius coefficients must be finite")
        rmin = self.r_min
        if rmin <= 0:
            raise GeometryError(
                f"(H1) radius function must stay positive, min r(θ) = {rmin:.6g}"
            )

    @classmethod
    def circle(cls, center, radius) -> "StarBoundary":
        return cls(center=tuple(center), a=(float(radius),), b=())

    @property
    def order(self) -> int:
        return len(self.a) - 1

    def _modes(self, theta):
        theta = np.asarray(theta, dtype=float)
        m = np.arange(1, self.order + 1)
        return theta, m, np.multiply.outer(theta, m)

    def radius(self, theta):
        theta, m, mt = self._modes(theta)
        r = np.full(theta.shape, self.a[0])
        if self.order:
            r = r + np.cos(mt) @ np.array(self.a[1:]) + np.sin(mt) @ np.array(self.b)
        return r

    def dradius(self, theta, order=1):
        """Derivative ``d^order r / dθ^order``."""
        theta, m, mt = self._modes(theta)
        if not self.order:
            return np.zeros(theta.shape)
        a = np.array(self.a[1:])
        b = np.array(self.b)
        # d/dθ maps (cos, sin) -> (-sin, cos) with a factor m
        ca, cb = a, b
        for _ in range(order):
            ca, cb = m * cb, -m * ca
        return np.cos(mt) @ ca + np.sin(mt) @ cb

    @property
    def r_min(self) -> float:
        return float(self.radius(np.linspace(0, 2 * np.pi, 8192, endpoint=False)).min())

    @property
    def r_max(self) -> float:
        return float(self.radius(np.linspace(0, 2 * np.pi, 8192, endpoint=False)).max())

    @property
    def area(self) -> float:
        """Exact enclosed area ``½∫r²dθ``."""
        return math.pi * (self.a[0] ** 2 + 0.5 * sum(c * c for c in self.a[1:] + self.b))

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        return np.stack([self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)], axis=-1)

    def tangent(self, theta):
        """Unnormalized tangent ``dx/dθ`` (counter-clockwise)."""
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        dr = self.dradius(theta)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([dr * c - r * s, dr * s + r * c], axis=-1)

    def normal(self, theta):
        """Outward unit normal."""
        t = self.tangent(theta)
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        d1 = self.dradius(theta, 1)
        d2 = self.dradius(theta, 2)
        return (r * r + 2 * d1 * d1 - r * d2) / (r * r + d1 * d1) ** 1.5

    def polygon(self, n=POLYGON_POINTS) -> np.ndarray:
        return self.point(np.linspace(0, 2 * np.pi, n, endpoint=False))

    def shape(self, n=POLYGON_POINTS):
        return shapely.Polygon(self.polygon(n))

    def contains(self, pts) -> np.ndarray:
        """Closed-set membership, decided analytically from the polar angle."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = pts - np.array(self.center)
        rho = np.hypot(d[:, 0], d[:, 1])
        th = np.arctan2(d[:, 1], d[:, 0])
        return rho <= self.radius(th)

    def diameter(self) -> float:
        return float(pdist(self.polygon(512)).max())

    def translated(self, offset) -> "StarBoundary":
        return StarBoundary((self.center[0] + offset[0], self.center[1] + offset[1]), self.a, self.b)

    def smoothness(self, alpha, n=1024) -> dict:
        """Dense-grid estimates of the regularity constants.

        Returns the minimal radius, maximal curvature and the Hölder
        seminorm ``sup |T(s)−T(t)| / |x(s)−x(t)|^α`` of the unit tangent
        over pairs closer than a quarter turn.
        """
        theta = np.linspace(0, 2 * np.pi, n, endpoint=False)
        p = self.point(theta)
        t = self.tangent(theta)
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        best = 0.0
        for shift in range(1, n // 8):
            dp = np.linalg.norm(p - np.roll(p, shift, axis=0), axis=1)
            dt = np.linalg.norm(t - np.roll(t, shift, axis=0), axis=1)
            best = max(best, float(np.max(dt / dp**alpha)))
        return {
            "r_min": self.r_min,
            "curvature_max": float(np.abs(self.curvature(theta)).max()),
            "holder_seminorm": best,
        }

    def to_dict(self) -> dict:
        return {"center": list(self.center), "a": list(self.a), "b": list(self.b)}


def sample_boundary(b: StarBoundary, n_pts: int):
    """Equally spaced (in θ) points on ``b`` and their outward unit normals.

    Returns
    -------
    points, normals : ndarray of shape (n_pts, 2)
    """
    if n_pts < 16:
        raise ArgumentError(f"n_pts must be at least 16, got {n_pts}")
    theta = np.linspace(0, 2 * np.pi, n_pts, endpoint=False)
    if np.any(b.radius(theta) <= 0):
        raise GeometryError("(H1) radius function is not positive")
    return b.point(theta), b.normal(theta)


def curve_table(b: StarBoundary, n_pts: int) -> np.ndarray:
    """Columns ``theta, x, y, nx, ny`` for CSV export."""
    theta = np.linspace(0, 2 * np.pi, n_pts, endpoint=False)
    pts, nrm = sample_boundary(b, n_pts)
    return np.column_stack([theta, pts, nrm])


def _directed(a, b):
    d, j = cKDTree(b).query(a)
    i = int(np.argmax(d))
    return float(d[i]), a[i], b[j[i]]


def hausdorff_distance(a, b, witnesses=False):
    """Hausdorff distance between two sampled curves.

    Parameters
    ----------
    a, b : array_like of shape (n, 2)
        Point samples. The accuracy is bounded by the sample spacing.
    witnesses : bool
        Also return the pair of points realizing the distance.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("hausdorff_distance needs two nonempty samples")
    dab = _directed(a, b)
    dba = _directed(b, a)
    best = dab if dab[0] >= dba[0] else (dba[0], dba[2], dba[1])
    if witnesses:
        return best[0], (np.asarray(best[1]), np.asarray(best[2]))
    return best[0]


@dataclass(frozen=True)
class DomainSpec:
    """The outer domain Ω together with its a-priori constants."""

    outer: StarBoundary
    apriori: AprioriData

    def violations(self) -> list:
        out = []
        n = self.apriori.dim
        if self.outer.area > self.apriori.bigM * self.apriori.rbar**n * (1 + 1e-12):
            out.append(
                f"(H1) |Ω| ≤ M·r̄^n violated: |Ω| = {self.outer.area:.6g} > "
                f"{self.apriori.bigM * self.apriori.rbar ** n:.6g}"
            )
        return out

    def validate(self):
        v = self.violations()
        if v:
            raise AdmissibilityError(v)
        return self

    def contains(self, pts):
        return self.outer.contains(pts)

    def boundary_distance(self, pts):
        """Unsigned distance from points to ``∂Ω``."""
        ring = shapely.LinearRing(self.outer.polygon())
        pts = np.atleast_2d(pts)
        return shapely.distance(shapely.points(pts), ring)

    def diameter(self) -> float:
        return self.outer.diameter()


@dataclass(frozen=True)
class InclusionSet:
    """An inclusion D as a union of disjoint star-shaped parts."""

    parts: tuple = ()

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                gap = parts[i].shape(1024).distance(parts[j].shape(1024))
                if gap <= 0:
                    raise AdmissibilityError(
                        [f"(H2) inclusion parts {i} and {j} must be disjoint with a positive gap"]
                    )

    @classmethod
    def disk(cls, center, radius) -> "InclusionSet":
        return cls((StarBoundary.circle(center, radius),))

    def __len__(self):
        return len(self.parts)

    @property
    def empty(self) -> bool:
        return not self.parts

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    def shape(self, n=POLYGON_POINTS):
        return shapely.unary_union([p.shape(n) for p in self.parts])

    def distance(self, pts) -> np.ndarray:
        """Distance from points to the closed set D (0 inside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.empty:
            return np.full(len(pts), np.inf)
        return shapely.distance(shapely.points(pts), self.shape())

    def boundary_samples(self, n_per_part):
        """Points, normals and part index of a dense sample of ``∂D``."""
        pts, nrm, idx = [], [], []
        for i, p in enumerate(self.parts):
            x, n = sample_boundary(p, n_per_part)
            pts.append(x)
            nrm.append(n)
            idx.append(np.full(len(x), i))
        if not pts:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
        return np.vstack(pts), np.vstack(nrm), np.concatenate(idx)

    @property
    def area(self) -> float:
        return sum(p.area for p in self.parts)

    def diameter(self) -> float:
        if self.empty:
            return 0.0
        pts = np.vstack([p.polygon(512) for p in self.parts])
        return float(pdist(pts).max())

    def to_dict(self) -> dict:
        return {f"part{i}": p.to_dict() for i, p in enumerate(self.parts)}


def _label_free_space(inside, blocked):
    free = inside & ~blocked
    labels, count = ndimage.label(free)
    return free, labels, count


def _curve_gap(inner: StarBoundary, outer: StarBoundary, n=512, n_refine=4, rounds=3) -> float:
    """Distance between two nested curves.

    The closest sample pairs of a coarse all-pairs search are refined by
    resampling both curves on shrinking windows around the current pair.
    """
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    D = cdist(inner.point(t), outer.point(t))
    best = float(D.min())
    w0 = 2 * np.pi / n
    s = np.linspace(-2.0, 2.0, 65)
    for i in np.argsort(D.min(axis=1))[:n_refine]:
        ti, to, w = t[i], t[int(np.argmin(D[i]))], w0
        for _ in range(rounds):
            a, b = ti + w * s, to + w * s
            d = cdist(inner.point(a), outer.point(b))
            k, j = np.unravel_index(np.argmin(d), d.shape)
            ti, to, w = a[k], b[j], w / 16
            best = min(best, float(d[k, j]))
    return best


def admissibility_violations(dom: DomainSpec, inc: InclusionSet, grid_h=None) -> list:
    """Every violated hypothesis for the pair (Ω, D), as tagged messages."""
    out = list(dom.violations())
    ap = dom.apriori
    if inc.empty:
        return out
    outer = dom.outer.shape()
    for i, p in enumerate(inc.parts):
        if not outer.contains(p.shape(1024)):
            out.append(f"(H2) inclusion part {i} must lie inside Ω")
            continue
        gap = _curve_gap(p, dom.outer)
        if gap < ap.delta_tilde:
            out.append(f"(H2) dist(D,∂Ω) ≥ δ̃ violated by part {i}: {gap:.6g} < {ap.delta_tilde:.6g}")
    if out:
        return out
    h = grid_h or ap.delta_tilde / 4
    xs, ys, pts = _grid(dom, h, 0.0)
    inside = dom.contains(pts).reshape(len(ys), len(xs))
    blocked = inc.contains(pts).reshape(inside.shape)
    _, _, count = _label_free_space(inside, blocked)
    if count != 1:
        out.append(f"(H2) Ω∖D̄ must be connected, found {count} components")
    return out


def check_admissible(dom: DomainSpec, inc: InclusionSet, grid_h=None):
    v = admissibility_violations(dom, inc, grid_h)
    if v:
        raise AdmissibilityError(v)


def _grid(dom: DomainSpec, h, pad):
    c = np.array(dom.outer.center)
    R = dom.outer.r_max + pad + 2 * h
    xs = np.arange(c[0] - R, c[0] + R + h / 2, h)
    ys = np.arange(c[1] - R, c[1] + R + h / 2, h)
    X, Y = np.meshgrid(xs, ys)
    return xs, ys, np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True, eq=False)
class RegionDecomposition:
    """Grid tagging of G, Ω_D and the exterior shells for a pair (D₁, D₂).

    Masks are boolean arrays indexed ``[iy, ix]`` on the grid ``(xs, ys)``.
    """

    xs: np.ndarray
    ys: np.ndarray
    grid_h: float
    omega_mask: np.ndarray
    g_mask: np.ndarray
    omega_d_mask: np.ndarray
    collar_mask: np.ndarray
    shell_mask: np.ndarray
    labels: np.ndarray
    g_label: int
    d1: InclusionSet
    d2: InclusionSet
    outer: StarBoundary = None

    def __post_init__(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        lab = self.labels.ravel()
        keep = lab > 0
        object.__setattr__(self, "_free_tree", cKDTree(nodes[keep]))
        object.__setattr__(self, "_free_labels", lab[keep])

    def _index(self, pts):
        pts = np.atleast_2d(pts)
        ix = np.rint((pts[:, 0] - self.xs[0]) / self.grid_h).astype(int)
        iy = np.rint((pts[:, 1] - self.ys[0]) / self.grid_h).astype(int)
        ok = (ix >= 0) & (ix < len(self.xs)) & (iy >= 0) & (iy < len(self.ys))
        return ix, iy, ok

    def in_g(self, pts) -> np.ndarray:
        """Membership in G for arbitrary points.

        A point belongs to G when it is outside D₁ ∪ D₂, inside Ω and its
        nearest free grid node carries the label of G.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        free = ~(self.d1.contains(pts) | self.d2.contains(pts))
        if self.outer is not None:
            free &= self.outer.contains(pts)
        _, j = self._free_tree.query(pts)
        return free & (self._free_labels[j] == self.g_label)

    def matches(self, d1, d2) -> bool:
        return (self.d1 == d1 and self.d2 == d2) or (self.d1 == d2 and self.d2 == d1)


def region_decomposition(dom: DomainSpec, d1: InclusionSet, d2: InclusionSet, grid_h: float) -> RegionDecomposition:
    """Flood-fill decomposition of Ω into G and Ω_D on a uniform grid.

    Raises
    ------
    ResolutionError
        If ``grid_h > δ̃/4`` or the band along ``∂Ω`` does not lie in a
        single free component.
    """
    ap = dom.apriori
    if grid_h > ap.delta_tilde / 4 * (1 + 1e-12):
        raise ResolutionError(f"grid_h = {grid_h} exceeds δ̃/4 = {ap.delta_tilde / 4}")
    xs, ys, pts = _grid(dom, grid_h, 2 * ap.rbar)
    shape = (len(ys), len(xs))
    inside = dom.contains(pts).reshape(shape)
    blocked = (d1.contains(pts) | d2.contains(pts)).reshape(shape)
    free, labels, count = _label_free_space(inside, blocked)
    dist_out = dom.boundary_distance(pts).reshape(shape)
    band = inside & (dist_out <= 2 * grid_h)
    band_labels = np.unique(labels[band])
    band_labels = band_labels[band_labels > 0]
    if len(band_labels) != 1:
        raise ResolutionError(
            f"band along ∂Ω touches {len(band_labels)} free components; refine grid_h"
        )
    g_label = int(band_labels[0])
    g_mask = labels == g_label
    omega_d = inside & ~g_mask
    outside = ~inside
    collar = outside & (dist_out <= ap.rbar)
    shell = outside & (dist_out >= ap.rbar) & (dist_out <= 2 * ap.rbar)
    return RegionDecomposition(
        xs=xs, ys=ys, grid_h=float(grid_h), omega_mask=inside, g_mask=g_mask,
        omega_d_mask=omega_d, collar_mask=collar, shell_mask=shell,
        labels=labels, g_label=g_label, d1=d1, d2=d2, outer=dom.outer,
    )


@dataclass(frozen=True)
class DistanceReport:
    """Hausdorff and modified distances with their witness points.

    ``mu_witness`` is ``(O, nearest point of the other inclusion, side)``
    where ``side`` is 1 when O lies on ``∂D₁`` and 2 when on ``∂D₂``.
    """

    d_hausdorff: float
    d_mu: float
    hausdorff_witness: tuple = None
    mu_witness: tuple = None
    mu_normal: tuple = None


def _one_sided(src: InclusionSet, other: InclusionSet, decomp, n_per_part):
    pts, nrm, _ = src.boundary_samples(n_per_part)
    if len(pts) == 0:
        return 0.0, None, None
    if other.empty:
        dist = np.full(len(pts), np.inf)
    else:
        dist = other.distance(pts)
    cand = dist > 0
    if not np.any(cand):
        return 0.0, None, None
    step = np.minimum(0.5 * decomp.grid_h, 0.5 * dist)
    probe = pts + step[:, None] * nrm
    on_boundary = np.zeros(len(pts), dtype=bool)
    on_boundary[cand] = decomp.in_g(probe[cand])
    if not np.any(on_boundary):
        return 0.0, None, None
    d = np.where(on_boundary, dist, -1.0)
    i = int(np.argmax(d))
    return float(d[i]), pts[i], nrm[i]


def modified_distance(d1: InclusionSet, d2: InclusionSet, decomp: RegionDecomposition, n_per_part=4096) -> DistanceReport:
    """Modified distance d_μ and Hausdorff distance between two inclusions.

    ``d_μ`` is the larger of ``sup dist(x, D₂)`` over ``∂D₁ ∩ ∂Ω_D`` and the
    symmetric term; a supremum over an empty set contributes 0.
    """
    if not decomp.matches(d1, d2):
        raise InternalError("region decomposition was computed for a different pair")
    if d1 == d2:
        return DistanceReport(0.0, 0.0)
    m1, o1, n1 = _one_sided(d1, d2, decomp, n_per_part)
    m2, o2, n2 = _one_sided(d2, d1, decomp, n_per_part)
    if m1 >= m2:
        dmu, O, nu, side, other = m1, o1, n1, 1, d2
    else:
        dmu, O, nu, side, other = m2, o2, n2, 2, d1
    mu_w = None
    if O is not None:
        near = shapely.ops.nearest_points(other.shape(), shapely.Point(O))[0]
        mu_w = (tuple(O), (near.x, near.y), side)
    b1 = d1.boundary_samples(n_per_part)[0]
    b2 = d2.boundary_samples(n_per_part)[0]
    if len(b1) and len(b2):
        dh, wit = hausdorff_distance(b1, b2, witnesses=True)
        wit = (tuple(wit[0]), tuple(wit[1]))
    else:
        dh, wit = math.inf, None
    return DistanceReport(
        d_hausdorff=float(dh), d_mu=float(dmu), hausdorff_witness=wit,
        mu_witness=mu_w, mu_normal=None if nu is None else tuple(nu),
    )


@dataclass(frozen=True)
class ProbeFrame:
    """Origin, normal and depths of a probe line entering an inclusion.

    ``side`` tells which inclusion carries O (1 or 2); when it is 2 the
    roles of D₁ and D₂ must be swapped by the caller. ``cone_height`` is
    the largest height up to ``rbar`` for which the sampled truncated cone
    stays in G.
    """

    origin: tuple
    normal: tuple
    theta: float
    rbar0: float
    h_values: tuple
    side: int = 1
    d_mu: float = 0.0
    cone_height: float = 0.0
    h_limit: float = 0.0

    def probe_points(self, h_values=None) -> np.ndarray:
        h = np.asarray(self.h_values if h_values is None else h_values, dtype=float)
        return np.asarray(self.origin) + h[:, None] * np.asarray(self.normal)

    def chain_report(self, rbar) -> dict:
        """Geometry of the first ball in a chain of balls inside the cone."""
        s = math.sin(self.theta)
        lam1 = min(rbar / (1 + s), rbar / (3 * s))
        theta1 = math.asin(s / 4)
        w1 = np.asarray(self.origin) + lam1 * np.asarray(self.normal)
        return {
            "lambda1": lam1,
            "theta1": theta1,
            "w1": tuple(float(v) for v in w1),
            "rho1": lam1 * math.sin(theta1),
        }


def cone_samples(origin, normal, theta, height, n_r=24, n_a=9):
    """Points filling the truncated cone of the given half-angle and height."""
    origin = np.asarray(origin, dtype=float)
    normal = np.asarray(normal, dtype=float)
    base = math.atan2(normal[1], normal[0])
    r = height * np.linspace(1.0 / n_r, 1.0, n_r)
    ang = base + theta * np.linspace(-1, 1, n_a) * (1 - 1e-9)
    R, A = np.meshgrid(r, ang)
    return origin + np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()])


def probe_frame_at(
    d1: InclusionSet,
    d2: InclusionSet,
    decomp: RegionDecomposition,
    dom: DomainSpec,
    h_values=(),
    cone_angle=None,
) -> ProbeFrame:
    """Probe frame at the witness point of the modified distance.

    ``cone_angle`` overrides the half-angle ``arctan(1/L)`` of the cone.

    Raises
    ------
    RangeError
        If ``d_μ = 0`` or a probe point leaves Ω or G.
    """
    rep = modified_distance(d1, d2, decomp)
    if rep.d_mu <= 0 or rep.mu_witness is None:
        raise RangeError("probe frame needs d_μ > 0")
    O, _, side = rep.mu_witness
    nu = np.asarray(rep.mu_normal)
    ap = dom.apriori
    theta = ap.cone_angle if cone_angle is None else float(cone_angle)
    # largest contained cone height, found by halving from r̄
    height = ap.rbar
    while height > 1e-6:
        pts = cone_samples(O, nu, theta, height)
        if np.all(decomp.in_g(pts) & dom.contains(pts)):
            break
        height *= 0.5
    hs = tuple(sorted((float(h) for h in h_values), reverse=True))
    frame = ProbeFrame(
        origin=tuple(O), normal=tuple(nu), theta=theta, rbar0=ap.rbar0,
        h_values=hs, side=side, d_mu=rep.d_mu, cone_height=height,
    )
    frame = ProbeFrame(**{**frame.__dict__, "h_limit": probe_depth_limit(frame, dom)})
    if hs:
        pts = frame.probe_points()
        if not np.all(dom.contains(pts)):
            raise RangeError("probe points leave Ω")
        if not np.all(decomp.in_g(pts)):
            raise RangeError("probe points leave G")
    return frame


def probe_depth_limit(frame: ProbeFrame, dom: DomainSpec) -> float:
    """Operational upper bound for probe depths along a frame.

    Half the smaller of ``d_μ`` and ``dist(O, ∂Ω)``, capped by the height
    of the contained cone.
    """
    dO = float(dom.boundary_distance(np.asarray(frame.origin)[None])[0])
    return min(0.5 * frame.d_mu, 0.5 * dO, frame.cone_height)
