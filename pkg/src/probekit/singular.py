"""Inclusion fundamental solutions and the energy indicators built on them.

``Γ_D(·, y)`` is written as a closed-form background kernel plus a
piecewise-linear corrector. For a source outside the inclusion

    Γ_D = Γ + R,    ∫ σ∇R·∇v = -(k-1) ∫_D ∇Γ·∇v,    R = 0 on |x - c| = T,

and for a source inside the inclusion

    Γ_D = Γ/k + R,  ∫ σ∇R·∇v = (1 - 1/k) ∫_{B_T∖D} ∇Γ·∇v,  R = (1 - 1/k)Γ on |x - c| = T.

Element integrals of ∇Γ are exact: ``∫_T ∇Γ = Σ_e n_e ∫_e Γ ds`` with a
closed-form antiderivative of the logarithm along each edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ArgumentError, DomainError, InternalError, RangeError, SingularityError
from .forward import DtnMap, assemble_dtn, conductivity, p1_gradients, stiffness
from .fundsol import gamma
from .geometry import DomainSpec, InclusionSet, ProbeFrame
from .mesh import Locator, Mesh, graded_sizing, mesh_domain, mesh_enlarged

# 7-point degree-5 rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
QUAD_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)

# Elements closer than this many diameters to a source are subdivided.
NEAR_FACTOR = 3.0
MAX_DEPTH = 24


def _log_antiderivative(s, d):
    """``∫ log(s² + d²) ds``, continuous at ``d = 0``."""
    s2 = s * s + d * d
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(s2 > 0, s * np.log(np.where(s2 > 0, s2, 1.0)), 0.0)
        at = np.where(d > 0, 2 * d * np.arctan2(s, np.where(d > 0, d, 1.0)), 0.0)
    return lg - 2 * s + at


def edge_gamma_integrals(a, b, y):
    """``∫_{[a,b]} Γ(x, y) ds`` for the 2-D kernel, vectorized over edges."""
    t = b - a
    ell = np.linalg.norm(t, axis=-1)
    u = t / ell[..., None]
    r = a - y
    s0 = np.sum(r * u, axis=-1)
    d = np.abs(r[..., 0] * u[..., 1] - r[..., 1] * u[..., 0])
    return -(_log_antiderivative(s0 + ell, d) - _log_antiderivative(s0, d)) / (4 * np.pi)


def element_grad_gamma(tri_pts, y):
    """Exact ``∫_T ∇_x Γ(x, y) dx`` for counter-clockwise triangles ``(m, 3, 2)``."""
    out = np.zeros((len(tri_pts), 2))
    for i in range(3):
        a = tri_pts[:, i]
        b = tri_pts[:, (i + 1) % 3]
        t = b - a
        n = np.column_stack([t[:, 1], -t[:, 0]])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        out += n * edge_gamma_integrals(a, b, y)[:, None]
    return out


class CorrectorSolver:
    """Factorized corrector problem for one inclusion on one enlarged mesh.

    Parameters
    ----------
    mesh : Mesh
        Enlarged mesh whose ``boundary_vertices`` lie on the truncation circle.
    k : float
        Contrast.
    region : str
        Key of the inclusion mask in ``mesh.masks``.
    inclusion : InclusionSet
        Geometry of that mask, used to classify sources.
    trunc_R : float
    """

    def __init__(self, mesh: Mesh, k: float, region: str, inclusion: InclusionSet, trunc_R: float):
        self.mesh = mesh
        self.k = float(k)
        self.region = region
        self.inclusion = inclusion
        self.trunc_R = float(trunc_R)
        self.mask = mesh.mask(region)
        self.sigma = conductivity(mesh, k, region)
        self.grads, self.areas = p1_gradients(mesh.vertices, mesh.triangles)
        self._pts = mesh.vertices[mesh.triangles]
        b = np.asarray(mesh.boundary_vertices)
        self.outer = b
        self.interior = np.setdiff1d(np.arange(mesh.n_vertices), b)
        K = stiffness(mesh, self.sigma).tocsr()
        self._K_ib = K[self.interior][:, b]
        self._lu = None if self.k == 1 else splu(K[self.interior][:, self.interior].tocsc())
        self._locator = None

    @property
    def locator(self) -> Locator:
        if self._locator is None:
            self._locator = Locator(self.mesh)
        return self._locator

    def classify(self, y) -> bool:
        """True when ``y`` is inside the inclusion; raises on its boundary."""
        if self.inclusion.empty:
            return False
        y = np.asarray(y, dtype=float)
        for part in self.inclusion.parts:
            d = y - np.asarray(part.center)
            rho = math.hypot(*d)
            r = float(part.radius(math.atan2(d[1], d[0])))
            if abs(rho - r) <= 1e-12 * max(1.0, r):
                raise SingularityError(f"source {tuple(y)} lies on the inclusion boundary")
        return bool(self.inclusion.contains(y[None])[0])

    def field(self, y) -> "FundamentalField":
        y = np.asarray(y, dtype=float)
        inside = self.classify(y)
        n = self.mesh.n_vertices
        R = np.zeros(n)
        if self.k == 1:
            return FundamentalField(y, self.k, 1.0, R, self)
        if inside:
            scale = 1.0 / self.k
            sel = ~self.mask
            coef = 1.0 - 1.0 / self.k
            bvals = coef * gamma(self.mesh.vertices[self.outer], y).value
        else:
            scale = 1.0
            sel = self.mask
            coef = -(self.k - 1.0)
            bvals = np.zeros(len(self.outer))
        idx = np.flatnonzero(sel)
        ig = element_grad_gamma(self._pts[idx], y)
        local = coef * np.einsum("tid,td->ti", self.grads[idx], ig)
        load = np.zeros(n)
        np.add.at(load, self.mesh.triangles[idx].ravel(), local.ravel())
        rhs = load[self.interior] - self._K_ib @ bvals
        R[self.outer] = bvals
        R[self.interior] = self._lu.solve(rhs)
        return FundamentalField(y, self.k, scale, R, self)


@dataclass(eq=False)
class FundamentalField:
    """``Γ_D(·, y) = scale·Γ(·, y) + R`` with a P1 corrector ``R``."""

    source: np.ndarray
    k: float
    scale: float
    R: np.ndarray
    solver: CorrectorSolver

    @property
    def mesh(self) -> Mesh:
        return self.solver.mesh

    @property
    def truncation_radius(self) -> float:
        return self.solver.trunc_R

    def grad_R(self) -> np.ndarray:
        """Element-wise constant gradient of the corrector."""
        g = self.__dict__.get("_gR")
        if g is None:
            g = np.einsum("tid,ti->td", self.solver.grads, self.R[self.mesh.triangles])
            self._gR = g
        return g

    def value(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.scale * gamma(x, self.source).value + self.solver.locator.interpolate(self.R, x)

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        elem, _ = self.solver.locator.locate(x)
        if np.any(elem < 0):
            raise DomainError("points outside the truncated domain")
        return self.scale * gamma(x, self.source).gradient_x + self.grad_R()[elem]

    def vertex_values(self, idx) -> np.ndarray:
        v = self.mesh.vertices[idx]
        return self.scale * gamma(v, self.source).value + self.R[idx]

    def decay_ratio(self) -> float:
        """``max|R - R_far|`` on the circle of radius T/2 over ``max_Ω|R|``.

        ``R_far`` is 0 for exterior sources and ``(1-1/k)Γ`` for interior
        ones, the far-field behaviour of the corrector.
        """
        m = self.mesh
        c = m.vertices[m.boundary_vertices].mean(axis=0)
        T = self.truncation_radius
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        ring = c + 0.5 * T * np.column_stack([np.cos(ang), np.sin(ang)])
        far = self.solver.locator.interpolate(self.R, ring)
        if self.scale != 1.0:
            far = far - (1 - 1 / self.k) * gamma(ring, self.source).value
        om = m.omega_elements if m.omega_elements is not None else np.ones(len(m.triangles), bool)
        rmax = np.abs(self.R[np.unique(m.triangles[om])]).max()
        return float(np.abs(far).max() / rmax) if rmax > 0 else 0.0


def _subdivide(t):
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
    ])


def gamma_gradient_product(tri_pts, y, w):
    """``Σ_T ∫_T ∇Γ(x,y)·∇Γ(x,w) dx`` by adaptive 7-point quadrature.

    Triangles within ``NEAR_FACTOR`` diameters of ``y`` or ``w`` are split
    into four until they are far enough or ``MAX_DEPTH`` is reached.
    """
    total = 0.0
    t = np.asarray(tri_pts, dtype=float)
    srcs = np.stack([y, w])
    for depth in range(MAX_DEPTH + 1):
        if len(t) == 0:
            break
        cen = t.mean(axis=1)
        diam = np.max(np.linalg.norm(t - np.roll(t, 1, axis=1), axis=2), axis=1)
        dist = np.min(np.linalg.norm(cen[:, None, :] - srcs[None], axis=2), axis=1)
        near = dist < NEAR_FACTOR * diam
        if depth == MAX_DEPTH:
            near[:] = False
        far = t[~near]
        if len(far):
            e1 = far[:, 1] - far[:, 0]
            e2 = far[:, 2] - far[:, 0]
            area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            q = np.einsum("qk,tkd->tqd", QUAD_BARY, far)
            gy = gamma(q, y).gradient_x
            gw = gamma(q, w).gradient_x
            total += float(np.sum(area[:, None] * QUAD_W[None] * np.sum(gy * gw, axis=2)))
        t = _subdivide(t[near]) if np.any(near) else t[:0]
    return total


def s_integral(target: str, field1: FundamentalField, field2: FundamentalField) -> float:
    """``(k-1)∫_{D_target} ∇Γ_{D₁}(·,y)·∇Γ_{D₂}(·,w)``.

    Both fields must live on the same mesh; ``target`` names the element
    mask of the integration region.
    """
    if field1.mesh is not field2.mesh:
        raise InternalError("fields were computed on different meshes")
    k = field1.k
    if k == 1:
        return 0.0
    mesh = field1.mesh
    idx = np.flatnonzero(mesh.mask(target))
    if len(idx) == 0:
        return 0.0
    y, w = field1.source, field2.source
    pts = mesh.vertices[mesh.triangles[idx]]
    if np.allclose(y, w):
        hit = Locator(mesh).locate(y[None])[0][0]
        if hit in set(idx.tolist()):
            raise SingularityError("coincident sources inside the integration region")
    s1, s2 = field1.scale, field2.scale
    gR1 = field1.grad_R()[idx]
    gR2 = field2.grad_R()[idx]
    area = field1.solver.areas[idx]
    term = s1 * s2 * gamma_gradient_product(pts, y, w)
    term += s1 * float(np.sum(gR2 * element_grad_gamma(pts, y)))
    term += s2 * float(np.sum(gR1 * element_grad_gamma(pts, w)))
    term += float(np.sum(area * np.sum(gR1 * gR2, axis=1)))
    return (k - 1.0) * term


@dataclass
class IndicatorSample:
    """Energy indicators at a source pair; ``f_boundary`` is None inside Ω̄."""

    y: tuple
    w: tuple
    s_d1: float
    s_d2: float
    f_direct: float
    f_boundary: float = None
    h: float = None


def f_direct(sample_or_s1, s2=None) -> float:
    """``f = S_{D₁} - S_{D₂}``."""
    if isinstance(sample_or_s1, IndicatorSample):
        return sample_or_s1.s_d1 - sample_or_s1.s_d2
    return float(sample_or_s1) - float(s2)


def f_boundary(dtn1: DtnMap, dtn2: DtnMap, y, w, trace1, trace2, dom: DomainSpec = None) -> float:
    """Boundary pairing ``g₁ᵀ(N₁ - N₂)g₂`` of the two source traces.

    ``trace1`` holds ``Γ_{D₁}(·,y)`` and ``trace2`` holds ``Γ_{D₂}(·,w)`` on
    the boundary vertices.

    Raises
    ------
    DomainError
        If ``y`` or ``w`` lies in Ω̄ (checked when ``dom`` is given).
    """
    if dtn1.n_boundary != dtn2.n_boundary or dtn1.fingerprint != dtn2.fingerprint:
        raise ArgumentError("DtN maps live on different boundary meshes")
    if dom is not None:
        pts = np.array([y, w], dtype=float)
        if np.any(dom.contains(pts)):
            raise DomainError("the boundary identity needs y and w outside Ω̄")
    g1 = np.asarray(trace1, dtype=float)
    g2 = np.asarray(trace2, dtype=float)
    return float(g1 @ (dtn1.matrix - dtn2.matrix) @ g2)


class PairSetup:
    """Meshes, DtN maps and corrector solvers shared by a pair (D₁, D₂).

    The Ω mesh is fitted to both inclusions so every quantity of the pair
    lives on one triangulation; the enlarged mesh adds an annulus out to
    ``trunc_R``.
    """

    def __init__(self, dom: DomainSpec, d1: InclusionSet, d2: InclusionSet, k: float, h: float,
                 trunc_R: float = None, sizing=None, check_h=True):
        self.dom, self.d1, self.d2 = dom, d1, d2
        self.k = float(k)
        self.h = float(h)
        diam = dom.diameter()
        self.trunc_R = float(trunc_R or 4 * diam)
        if self.trunc_R < 4 * diam * (1 - 1e-9):
            raise ArgumentError(f"trunc_R must be at least 4·diam(Ω) = {4 * diam:.6g}")
        self.base = mesh_domain(dom, InclusionSet(), h, extra={"D1": d1, "D2": d2},
                                sizing=sizing, check_h=check_h)
        self.mesh = mesh_enlarged(self.base, dom, self.trunc_R)
        self._solvers = {}
        self._dtn = {}

    def solver(self, which: int) -> CorrectorSolver:
        if which not in self._solvers:
            inc = self.d1 if which == 1 else self.d2
            self._solvers[which] = CorrectorSolver(self.mesh, self.k, f"D{which}", inc, self.trunc_R)
        return self._solvers[which]

    def dtn(self, which: int) -> DtnMap:
        if which not in self._dtn:
            self._dtn[which] = assemble_dtn(self.base, self.k, region=f"D{which}")
        return self._dtn[which]

    def field(self, which: int, y) -> FundamentalField:
        return self.solver(which).field(y)

    def boundary_trace(self, field: FundamentalField) -> np.ndarray:
        return field.vertex_values(self.base.boundary_vertices)

    def sample(self, y, w, with_boundary=None) -> IndicatorSample:
        """Indicator triple at ``(y, w)``, plus the boundary form outside Ω̄."""
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        f1 = self.field(1, y)
        f2 = self.field(2, w)
        s1 = s_integral("D1", f1, f2)
        s2 = s_integral("D2", f1, f2)
        fb = None
        outside = not np.any(self.dom.contains(np.array([y, w])))
        if with_boundary is None:
            with_boundary = outside
        if with_boundary:
            fb = f_boundary(self.dtn(1), self.dtn(2), y, w, self.boundary_trace(f1),
                            self.boundary_trace(f2), self.dom)
        return IndicatorSample(tuple(y), tuple(w), s1, s2, s1 - s2, fb)


def gamma_d(inc: InclusionSet, k: float, y, trunc_R: float, dom: DomainSpec, h: float,
            sizing=None, check_h=True) -> FundamentalField:
    """Inclusion fundamental solution with source ``y``.

    Builds a mesh of Ω fitted to ``inc``, extends it to the disk of radius
    ``trunc_R`` and solves for the corrector.
    """
    diam = dom.diameter()
    if trunc_R < 4 * diam * (1 - 1e-9):
        raise ArgumentError(f"trunc_R must be at least 4·diam(Ω) = {4 * diam:.6g}")
    base = mesh_domain(dom, InclusionSet(), h, extra={"D1": inc}, sizing=sizing, check_h=check_h)
    mesh = mesh_enlarged(base, dom, trunc_R)
    return CorrectorSolver(mesh, k, "D1", inc, trunc_R).field(y)


def probe_sizing(origin, h_min, growth=0.25):
    """Mesh grading that resolves probes down to depth ``h_min`` at ``origin``."""
    return graded_sizing(origin, 0.25 * h_min, growth)


def probe_sweep(frame: ProbeFrame, setup: PairSetup, h_values=None, h_max=None) -> list:
    """Indicator samples along ``y = w = O + hν`` by decreasing depth.

    Raises
    ------
    RangeError
        If a depth exceeds ``h_max`` (default ``frame.h_limit``) or a probe
        leaves Ω.
    """
    hs = sorted((float(h) for h in (frame.h_values if h_values is None else h_values)), reverse=True)
    limit = frame.h_limit if h_max is None else h_max
    if limit and hs and hs[0] > limit * (1 + 1e-12):
        raise RangeError(f"probe depth {hs[0]:.4g} exceeds the admissible limit {limit:.4g}")
    if frame.side == 2:
        raise RangeError("frame origin lies on ∂D₂; swap the inclusions first")
    out = []
    O = np.asarray(frame.origin)
    nu = np.asarray(frame.normal)
    for h in hs:
        y = O + h * nu
        if not setup.dom.contains(y[None])[0]:
            raise RangeError(f"probe at depth {h} leaves Ω")
        s = setup.sample(y, y, with_boundary=False)
        s.h = h
        out.append(s)
    return out


def disk_gamma_d(x, y, center, radius, k):
    """Exact ``Γ_D`` for a disk inclusion and an exterior source (2-D).

    Outside the disk ``Γ(x,y) - μΓ(x,y*) + μΓ(x,c)`` and inside
    ``(1-μ)Γ(x,y) - (μ/2π)log|y-c|``, with ``y*`` the inversion of ``y`` in
    the circle. Normalized so that ``Γ_D - Γ → 0`` at infinity.
    """
    c = np.asarray(center, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float)) - c
    y = np.asarray(y, dtype=float) - c
    ry = float(np.linalg.norm(y))
    if ry <= radius:
        raise DomainError("the closed form covers sources outside the disk")
    mu = (k - 1.0) / (k + 1.0)
    ystar = radius**2 * y / ry**2
    g = gamma(x, y)
    rx = np.linalg.norm(x, axis=1)
    inside = rx < radius
    val = np.empty(len(x))
    grad = np.empty((len(x), 2))
    o = ~inside
    if np.any(o):
        g0 = gamma(x[o], np.zeros(2))
        gs = gamma(x[o], ystar)
        val[o] = g.value[o] - mu * gs.value + mu * g0.value
        grad[o] = g.gradient_x[o] - mu * gs.gradient_x + mu * g0.gradient_x
    if np.any(inside):
        val[inside] = (1 - mu) * g.value[inside] - mu * math.log(ry) / (2 * np.pi)
        grad[inside] = (1 - mu) * g.gradient_x[inside]
    return val, grad
