"""Conforming triangulations of Ω with fitted inclusion interfaces.

Meshes are generated with Shewchuk's Triangle. Boundary and interface
polylines are passed as constrained segments and Triangle is told not to
split them, so the vertex set on ``∂Ω`` depends only on Ω and the mesh
size. That keeps DtN matrices of different inclusions directly comparable.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import shapely
import triangle
from scipy.spatial import cKDTree

from .errors import DomainError, ResolutionError
from .geometry import DomainSpec, InclusionSet, StarBoundary

# Ratio between the allowed triangle area and h²; an equilateral triangle
# of side h has area 0.433 h².
AREA_FACTOR = 0.40


@dataclass(frozen=True, eq=False)
class Mesh:
    """Piecewise-linear triangulation.

    Attributes
    ----------
    vertices : ndarray (nv, 2)
    triangles : ndarray (nt, 3)
        Counter-clockwise vertex indices.
    tags : ndarray (nt,)
        0 for background, ``i + 1`` for elements in part ``i`` of the
        primary inclusion set.
    masks : dict
        Named boolean element masks, e.g. ``"D"`` or ``"D1"``/``"D2"``.
    boundary_vertices : ndarray
        Indices of ``∂Ω`` vertices as one counter-clockwise loop.
    h : float
        Nominal mesh size on ``∂Ω``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    masks: dict
    boundary_vertices: np.ndarray
    h: float
    omega_elements: np.ndarray = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_vertices)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def quality(self) -> dict:
        p = self.vertices[self.triangles]
        ang = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        ang = np.concatenate(ang)
        return {
            "n_vertices": int(self.n_vertices),
            "n_triangles": int(len(self.triangles)),
            "n_boundary": int(self.n_boundary),
            "min_angle_deg": float(ang.min()),
            "max_diameter": float(self.diameters().max()),
            "min_area": float(self.areas().min()),
        }

    def mask(self, region=None) -> np.ndarray:
        if region is None:
            return self.tags > 0
        return self.masks[region]

    def boundary_points(self) -> np.ndarray:
        return self.vertices[self.boundary_vertices]

    def with_region(self, name: str, inc: InclusionSet) -> "Mesh":
        """Copy with an element mask for ``inc`` taken from centroids.

        The interfaces of ``inc`` need not be fitted, which lets every
        inclusion share one triangulation.
        """
        masks = dict(self.masks)
        masks[name] = inc.contains(self.centroids()) if inc.parts else np.zeros(len(self.triangles), bool)
        return dataclasses.replace(self, masks=masks)


def resample_closed(points, size_fn, min_points=16, n=None):
    """Redistribute a densely sampled closed curve to local spacing ``size_fn``.

    The first point is kept, so curves sampled from θ = 0 start at θ = 0.
    ``n`` fixes the number of output points.
    """
    p = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    mid = 0.5 * (p + np.roll(p, -1, axis=0))
    density = seg / size_fn(mid)
    cum = np.concatenate([[0.0], np.cumsum(density)])
    if n is None:
        n = max(min_points, int(math.ceil(cum[-1])))
    targets = np.linspace(0, cum[-1], n, endpoint=False)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    arc = np.interp(targets, cum, s)
    closed = np.vstack([p, p[:1]])
    x = np.interp(arc, s, closed[:, 0])
    y = np.interp(arc, s, closed[:, 1])
    return np.column_stack([x, y])


def _curve(b: StarBoundary, size_fn, dense=20000):
    return resample_closed(b.polygon(dense), size_fn)


def uniform_boundary(b: StarBoundary, h, n=None) -> np.ndarray:
    """Boundary vertices of ``∂Ω``: uniform in arc length with spacing ≈ h.

    With ``n`` given the count is fixed instead; doubling ``n`` reproduces
    the coarse vertices at the even positions.
    """
    return resample_closed(b.polygon(20000), lambda x: np.full(len(x), h), n=n)


def _ring_segments(start, n):
    i = np.arange(n)
    return np.column_stack([start + i, start + (i + 1) % n])


def _node_interfaces(rings):
    """Planar arrangement of possibly intersecting closed polylines.

    Returns vertex coordinates and segment index pairs.
    """
    if not rings:
        return np.zeros((0, 2)), np.zeros((0, 2), dtype=int)
    lines = shapely.unary_union([shapely.LinearRing(r) for r in rings])
    coords, segs = [], []
    index = {}

    def vid(pt):
        key = (round(pt[0], 12), round(pt[1], 12))
        if key not in index:
            index[key] = len(coords)
            coords.append(pt)
        return index[key]

    geoms = getattr(lines, "geoms", [lines])
    for g in geoms:
        c = np.asarray(g.coords)
        for a, b in zip(c[:-1], c[1:]):
            ia, ib = vid(tuple(a)), vid(tuple(b))
            if ia != ib:
                segs.append((ia, ib))
    return np.asarray(coords, dtype=float), np.asarray(segs, dtype=int)


def _refine(tri, size_fn, max_rounds=12):
    for _ in range(max_rounds):
        v = tri["vertices"]
        t = tri["triangles"]
        p = v[t]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        target = AREA_FACTOR * size_fn(p.mean(axis=1)) ** 2
        if np.all(area <= target * 1.25):
            return tri
        data = dict(tri)
        data["triangle_max_area"] = target.reshape(-1, 1)
        tri = triangle.triangulate(data, "rpq30Ya")
    return tri


def _triangulate(pslg, size_fn, hmax):
    amax = AREA_FACTOR * hmax * hmax
    try:
        tri = triangle.triangulate(pslg, f"pq30Ya{amax:.12f}")
        tri = _refine(tri, size_fn)
    except Exception as exc:  # Triangle reports failures as generic errors
        raise ResolutionError(f"triangulation failed: {exc}") from exc
    if "triangles" not in tri or len(tri["triangles"]) == 0:
        raise ResolutionError("triangulation produced no elements")
    return tri


def mesh_domain(
    dom: DomainSpec,
    inc: InclusionSet,
    target_h: float,
    extra: dict = None,
    sizing=None,
    check_h=True,
    n_boundary=None,
    collar=None,
) -> Mesh:
    """Conforming mesh of Ω with the interfaces of ``inc`` fitted.

    Parameters
    ----------
    dom : DomainSpec
    inc : InclusionSet
        Primary inclusion, recorded in ``tags`` and in ``masks["D"]``.
    target_h : float
        Mesh size on ``∂Ω`` and upper bound everywhere.
    extra : dict, optional
        Further named inclusion sets whose interfaces are also fitted; each
        gets its own entry in ``masks``.
    sizing : callable, optional
        Local size function ``x -> h(x)``, clipped to ``target_h``.
    n_boundary : int, optional
        Exact number of ``∂Ω`` vertices, overriding the count implied by
        ``target_h``.
    collar : float, optional
        Width of a boundary layer meshed on its own, without reference to
        the inclusions. Meshes of different inclusions then agree exactly
        near ``∂Ω``, so their DtN matrices differ only through the interior.

    Raises
    ------
    ResolutionError
        If ``target_h > δ̃/3`` or Triangle fails.
    """
    if check_h and target_h > dom.apriori.delta_tilde / 3 * (1 + 1e-12):
        raise ResolutionError(
            f"target_h = {target_h} exceeds δ̃/3 = {dom.apriori.delta_tilde / 3:.6g}"
        )
    extra = dict(extra or {})

    def size_fn(x):
        s = np.full(len(x), float(target_h))
        if sizing is not None:
            s = np.minimum(s, sizing(x))
        return s

    outer = uniform_boundary(dom.outer, target_h, n=n_boundary)
    nb = len(outer)
    sets = {"D": inc, **extra}
    rings = []
    for s in sets.values():
        for part in s.parts:
            rings.append(_curve(part, size_fn))
    ipts, isegs = _node_interfaces(rings)
    if collar:
        return _mesh_with_collar(dom, outer, ipts, isegs, sets, size_fn, target_h, collar)
    verts = np.vstack([outer, ipts])
    segs = np.vstack([_ring_segments(0, nb), isegs + nb]) if len(isegs) else _ring_segments(0, nb)
    tri = _triangulate({"vertices": verts, "segments": segs}, size_fn, target_h)
    v = np.asarray(tri["vertices"], dtype=float)
    t = np.asarray(tri["triangles"], dtype=int)
    if not np.allclose(v[:nb], outer):
        raise ResolutionError("boundary vertices were not preserved by the mesher")
    return _finish(v, t, sets, np.arange(nb), target_h)


def _inner_ring(b: StarBoundary, width, h):
    """Closed curve obtained by moving ``∂Ω`` inward radially by ``width``."""
    th = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    r = b.radius(th) - width
    if np.any(r <= 0):
        raise ResolutionError(f"collar width {width} exceeds the inner radius of Ω")
    c = np.asarray(b.center)
    dense = c + r[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    return resample_closed(dense, lambda x: np.full(len(x), h))


def _mesh_with_collar(dom, outer, ipts, isegs, sets, size_fn, target_h, width):
    c = np.asarray(dom.outer.center)
    nb = len(outer)
    ring = _inner_ring(dom.outer, width, target_h)
    if len(ipts) and not np.all(dom.outer.radius(np.arctan2(*(ipts - c).T[::-1])) - width
                                 > np.linalg.norm(ipts - c, axis=1)):
        raise ResolutionError("inclusion interfaces enter the boundary collar")
    nr = len(ring)
    # the boundary layer sees only ∂Ω and the inner ring, so it is identical
    # for every inclusion
    layer = _triangulate({
        "vertices": np.vstack([outer, ring]),
        "segments": np.vstack([_ring_segments(0, nb), _ring_segments(nb, nr)]),
        "holes": c[None],
    }, size_fn, target_h)
    vl = np.asarray(layer["vertices"], dtype=float)
    tl = np.asarray(layer["triangles"], dtype=int)
    segs = _ring_segments(0, nr)
    if len(isegs):
        segs = np.vstack([segs, isegs + nr])
    core = _triangulate({"vertices": np.vstack([ring, ipts]), "segments": segs}, size_fn, target_h)
    vc = np.asarray(core["vertices"], dtype=float)
    tc = np.asarray(core["triangles"], dtype=int)
    if not (np.allclose(vl[:nb + nr], np.vstack([outer, ring])) and np.allclose(vc[:nr], ring)):
        raise ResolutionError("collar rings were not preserved by the mesher")
    remap = np.empty(len(vc), dtype=int)
    remap[:nr] = nb + np.arange(nr)
    remap[nr:] = len(vl) + np.arange(len(vc) - nr)
    v = np.vstack([vl, vc[nr:]])
    t = np.vstack([tl, remap[tc]])
    return _finish(v, t, sets, np.arange(nb), target_h)


def _finish(v, t, sets, bverts, h):
    p = v[t]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flip = det < 0
    t = t.copy()
    t[flip] = t[flip][:, [0, 2, 1]]
    cen = v[t].mean(axis=1)
    masks = {}
    tags = np.zeros(len(t), dtype=int)
    for name, s in sets.items():
        m = np.zeros(len(t), dtype=bool)
        for i, part in enumerate(s.parts):
            # centroids of interface elements sit about h/3 off the polyline,
            # far beyond the polyline-vs-curve sag, so the analytic test is exact
            inside = part.contains(cen)
            m |= inside
            if name == "D":
                tags[inside] = i + 1
        masks[name] = m
    return Mesh(
        vertices=v, triangles=t, tags=tags, masks=masks,
        boundary_vertices=np.asarray(bverts), h=float(h),
    )


def mesh_enlarged(base: Mesh, dom: DomainSpec, trunc_R: float, growth=0.3, hmax=None) -> Mesh:
    """Extend a mesh of Ω to the disk of radius ``trunc_R`` around Ω's center.

    The elements of ``base`` are kept unchanged and the annulus between
    ``∂Ω`` and the truncation circle is meshed with sizes growing linearly
    away from Ω. ``omega_elements`` marks the elements inherited from
    ``base``.
    """
    c = np.asarray(dom.outer.center)
    h = base.h
    hmax = hmax or max(h, 0.1 * trunc_R)
    rmax = dom.outer.r_max

    def size_fn(x):
        d = np.maximum(np.linalg.norm(x - c, axis=1) - rmax, 0.0)
        return np.minimum(h + growth * d, hmax)

    inner = base.vertices[base.boundary_vertices]
    ncirc = max(32, int(math.ceil(2 * math.pi * trunc_R / size_fn(np.array([[c[0] + trunc_R, c[1]]]))[0])))
    ang = np.linspace(0, 2 * np.pi, ncirc, endpoint=False)
    circ = c + trunc_R * np.column_stack([np.cos(ang), np.sin(ang)])
    nb = len(inner)
    verts = np.vstack([inner, circ])
    segs = np.vstack([_ring_segments(0, nb), _ring_segments(nb, ncirc)])
    pslg = {"vertices": verts, "segments": segs, "holes": np.array([c])}
    tri = _triangulate(pslg, size_fn, hmax)
    va = np.asarray(tri["vertices"], dtype=float)
    ta = np.asarray(tri["triangles"], dtype=int)
    if not np.allclose(va[:nb], inner):
        raise ResolutionError("inner ring of the annulus was not preserved")
    # annulus vertex j < nb is base boundary vertex j
    nv = base.n_vertices
    remap = np.empty(len(va), dtype=int)
    remap[:nb] = base.boundary_vertices
    remap[nb:] = nv + np.arange(len(va) - nb)
    v = np.vstack([base.vertices, va[nb:]])
    t = np.vstack([base.triangles, remap[ta]])
    n_base = len(base.triangles)
    omega = np.zeros(len(t), dtype=bool)
    omega[:n_base] = True
    outer_ring = remap[nb:nb + ncirc]
    tags = np.concatenate([base.tags, np.zeros(len(ta), dtype=int)])
    masks = {k: np.concatenate([m, np.zeros(len(ta), dtype=bool)]) for k, m in base.masks.items()}
    p = v[t]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    flip = det < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    return Mesh(
        vertices=v, triangles=t, tags=tags, masks=masks,
        boundary_vertices=outer_ring, h=h, omega_elements=omega,
    )


def graded_sizing(center, s_min, growth):
    """Size function ``s_min + growth·|x - center|``."""
    center = np.asarray(center, dtype=float)

    def fn(x):
        return s_min + growth * np.linalg.norm(np.atleast_2d(x) - center, axis=1)

    return fn


class Locator:
    """Element lookup and barycentric coordinates for arbitrary points."""

    def __init__(self, mesh: Mesh, n_candidates=12):
        self.mesh = mesh
        self.n_candidates = min(n_candidates, len(mesh.triangles))
        self._tree = cKDTree(mesh.centroids())
        p = mesh.vertices[mesh.triangles]
        self._origin = p[:, 0]
        T = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self._inv = np.linalg.inv(T)

    def _bary(self, pts, elems):
        lam12 = np.einsum("nij,nj->ni", self._inv[elems], pts - self._origin[elems])
        return np.column_stack([1 - lam12.sum(axis=1), lam12])

    def locate(self, pts):
        """Element index (or -1 when outside) and barycentric coordinates."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        _, cand = self._tree.query(pts, k=self.n_candidates)
        cand = cand.reshape(len(pts), -1)
        elem = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        best = np.full(len(pts), -np.inf)
        for c in cand.T:
            b = self._bary(pts, c)
            score = b.min(axis=1)
            better = score > best
            elem[better] = c[better]
            bary[better] = b[better]
            best[better] = score[better]
        lost = best < -1e-10
        for i in np.flatnonzero(lost):
            b = self._bary(np.repeat(pts[i:i + 1], len(self.mesh.triangles), axis=0), np.arange(len(self.mesh.triangles)))
            j = int(np.argmax(b.min(axis=1)))
            if b[j].min() >= -1e-10:
                elem[i], bary[i] = j, b[j]
            else:
                elem[i] = -1
        return elem, bary

    def interpolate(self, values, pts):
        elem, bary = self.locate(pts)
        if np.any(elem < 0):
            raise DomainError("points outside the mesh")
        return np.sum(np.asarray(values)[self.mesh.triangles[elem]] * bary, axis=1)
