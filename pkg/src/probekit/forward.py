"""Forward conductivity solves and discrete Dirichlet-to-Neumann maps.

The conductivity is 1 in the background and ``k`` on the inclusion. The
DtN matrix is the Schur complement of the P1 stiffness matrix onto the
boundary vertices, so ``N[i, j] = a(u_i, u_j)`` where ``u_i`` is the
discrete solution with hat-function boundary data.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ArgumentError, AssemblyError
from .mesh import Mesh

# Boundary hat loads solved per block when eliminating interior unknowns.
RHS_BLOCK = 256


def p1_gradients(vertices, triangles):
    """Constant gradients of the three hat functions on every element.

    Returns
    -------
    grads : ndarray (nt, 3, 2)
    areas : ndarray (nt,)
    """
    p = vertices[triangles]
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * det
    g = np.empty((len(triangles), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / det
        g[:, i, 1] = (x[:, k] - x[:, j]) / det
    return g, area


def conductivity(mesh: Mesh, k: float, region=None) -> np.ndarray:
    """Element-wise conductivity ``1 + (k-1)χ_D``."""
    return np.where(mesh.mask(region), float(k), 1.0)


def stiffness(mesh: Mesh, sigma) -> sp.csr_matrix:
    g, area = p1_gradients(mesh.vertices, mesh.triangles)
    if np.any(area <= 0):
        raise AssemblyError("mesh has inverted or degenerate elements")
    local = np.einsum("tid,tjd->tij", g, g) * (np.asarray(sigma) * area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _split(mesh: Mesh):
    b = np.asarray(mesh.boundary_vertices)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), b)
    return b, interior


def _factor(K_ii):
    try:
        lu = splu(K_ii.tocsc())
    except RuntimeError as exc:
        raise AssemblyError(f"singular interior stiffness: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    if d.min() <= 1e-14 * d.max():
        raise AssemblyError("singular interior stiffness (disconnected mesh?)")
    return lu


def solve_dirichlet(mesh: Mesh, k: float, f, region=None) -> np.ndarray:
    """Discrete solution of the conductivity equation with boundary data ``f``.

    Parameters
    ----------
    f : array_like
        Values on ``mesh.boundary_vertices``, or a callable of the boundary
        points.
    """
    b, interior = _split(mesh)
    if callable(f):
        f = f(mesh.vertices[b])
    f = np.asarray(f, dtype=float)
    if f.shape != (len(b),):
        raise ArgumentError(f"boundary data must have {len(b)} values, got {f.shape}")
    K = stiffness(mesh, conductivity(mesh, k, region))
    u = np.zeros(mesh.n_vertices)
    u[b] = f
    if len(interior):
        K_ii = K[interior][:, interior]
        rhs = -K[interior][:, b] @ f
        u[interior] = _factor(K_ii).solve(rhs)
    return u


def energy(mesh: Mesh, k: float, u, region=None) -> float:
    """``∫ σ|∇u|²`` by element-wise exact integration of P1 gradients."""
    g, area = p1_gradients(mesh.vertices, mesh.triangles)
    grad = np.einsum("tid,ti->td", g, np.asarray(u)[mesh.triangles])
    return float(np.sum(conductivity(mesh, k, region) * area * np.sum(grad * grad, axis=1)))


def boundary_pencil(points):
    """Mass and Laplace-Beltrami stiffness of P1 functions on a closed polyline.

    Returns
    -------
    mass, stiff : ndarray (n, n)
    weights : ndarray (n,)
        Lumped arc-length weights (half the adjacent edge lengths).
    """
    p = np.asarray(points, dtype=float)
    n = len(p)
    ell = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    i = np.arange(n)
    j = (i + 1) % n
    mass = np.zeros((n, n))
    stiff = np.zeros((n, n))
    np.add.at(mass, (i, i), ell / 3)
    np.add.at(mass, (j, j), ell / 3)
    np.add.at(mass, (i, j), ell / 6)
    np.add.at(mass, (j, i), ell / 6)
    np.add.at(stiff, (i, i), 1 / ell)
    np.add.at(stiff, (j, j), 1 / ell)
    np.add.at(stiff, (i, j), -1 / ell)
    np.add.at(stiff, (j, i), -1 / ell)
    weights = 0.5 * (ell + np.roll(ell, 1))
    return mass, stiff, weights


def boundary_fingerprint(points) -> str:
    return hashlib.sha256(np.ascontiguousarray(points, dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DtnMap:
    """Discrete DtN operator on the boundary vertices of a mesh.

    ``matrix`` maps nodal boundary values to the boundary flux tested
    against the hat functions; ``mass`` and ``stiffness`` form the
    boundary pencil that defines the fractional trace norms.
    """

    matrix: np.ndarray
    boundary_points: np.ndarray
    arc_weights: np.ndarray
    mass: np.ndarray = None
    stiffness: np.ndarray = None
    mesh_h: float = 0.0
    n_total: int = 0

    def __post_init__(self):
        if self.mass is None or self.stiffness is None:
            m, s, _ = boundary_pencil(self.boundary_points)
            object.__setattr__(self, "mass", m)
            object.__setattr__(self, "stiffness", s)

    @property
    def n_boundary(self) -> int:
        return len(self.matrix)

    @property
    def fingerprint(self) -> str:
        return boundary_fingerprint(self.boundary_points)

    def with_matrix(self, matrix) -> "DtnMap":
        return DtnMap(
            matrix=np.asarray(matrix), boundary_points=self.boundary_points,
            arc_weights=self.arc_weights, mass=self.mass, stiffness=self.stiffness,
            mesh_h=self.mesh_h, n_total=self.n_total,
        )


def assemble_dtn(mesh: Mesh, k: float, region=None) -> DtnMap:
    """Boundary Schur complement ``K_BB - K_BI K_II⁻¹ K_IB``."""
    b, interior = _split(mesh)
    K = stiffness(mesh, conductivity(mesh, k, region)).tocsr()
    K_bb = K[b][:, b].toarray()
    if len(interior):
        K_ii = K[interior][:, interior]
        K_ib = K[interior][:, b].tocsc()
        K_bi = K[b][:, interior].tocsr()
        lu = _factor(K_ii)
        corr = np.empty((len(b), len(b)))
        for s in range(0, len(b), RHS_BLOCK):
            cols = slice(s, min(s + RHS_BLOCK, len(b)))
            X = lu.solve(K_ib[:, cols].toarray())
            corr[:, cols] = K_bi @ X
        N = K_bb - corr
    else:
        N = K_bb
    N = 0.5 * (N + N.T)
    pts = mesh.vertices[b]
    mass, stiff, w = boundary_pencil(pts)
    return DtnMap(
        matrix=N, boundary_points=pts, arc_weights=w, mass=mass, stiffness=stiff,
        mesh_h=mesh.h, n_total=mesh.n_vertices,
    )


def sobolev_basis(dtn: DtnMap):
    """Pencil eigenvectors ``V`` and weights ``(1 + λ)^{1/4}``, cached per map."""
    hit = dtn.__dict__.get("_basis")
    if hit is None:
        lam, V = sla.eigh(dtn.stiffness, dtn.mass)
        hit = (V, (1.0 + np.maximum(lam, 0.0)) ** 0.25)
        object.__setattr__(dtn, "_basis", hit)
    return hit


def opnorm_h12(a: DtnMap, b: DtnMap | None = None) -> float:
    """Discrete ``H^{1/2} → H^{-1/2}`` operator norm of ``a - b``.

    With the pencil eigenvectors ``V`` (``VᵀMV = I``, ``VᵀKV = Λ``) and
    weights ``W = (1 + Λ)^{1/4}`` this is ``‖W⁻¹ Vᵀ(A - B)V W⁻¹‖₂``.
    """
    if b is not None and (a.n_boundary != b.n_boundary or a.fingerprint != b.fingerprint):
        raise ArgumentError("DtN maps live on different boundary meshes")
    diff = a.matrix if b is None else a.matrix - b.matrix
    V, w = sobolev_basis(a)
    B = (V.T @ diff @ V) / np.outer(w, w)
    return float(np.linalg.norm(B, 2))


def rayleigh_modes(dtn: DtnMap, center, m_max: int) -> np.ndarray:
    """Fourier-projected eigenvalues ``⟨N c_m, c_m⟩ / ⟨M c_m, c_m⟩``.

    ``c_m`` are the nodal values of ``cos mθ`` and ``sin mθ`` around
    ``center``; the two quotients are averaged. Entry 0 is the constant
    mode.
    """
    d = dtn.boundary_points - np.asarray(center, dtype=float)
    th = np.arctan2(d[:, 1], d[:, 0])
    out = np.zeros(m_max + 1)
    for m in range(m_max + 1):
        vals = []
        for c in (np.cos(m * th), np.sin(m * th)):
            if m == 0 and not c.any():
                continue
            vals.append(c @ dtn.matrix @ c / (c @ dtn.mass @ c))
        out[m] = np.mean(vals)
    return out


@dataclass(frozen=True)
class SpectralDtn:
    """Exact DtN eigenvalues of a concentric two-phase disk."""

    radius_R: float
    inclusion_radius: float
    k: float
    eigenvalues: np.ndarray

    def as_dtn(self, n: int) -> DtnMap:
        """Matrix of this operator on ``n`` equispaced circle nodes.

        The mass matrix is ``wI`` with ``w = 2πR/n`` and the stiffness is
        the exact tangential Laplacian on trigonometric modes, so the
        pencil norm reduces to the Fourier multipliers ``(1+m²/R²)^{±1/4}``.
        Modes above ``m_max`` are dropped, so ``n`` must not exceed
        ``2·m_max + 1``.
        """
        R = self.radius_R
        m_max = len(self.eigenvalues) - 1
        if n > 2 * m_max + 1:
            raise ArgumentError(f"n = {n} needs eigenvalues up to m = {n // 2}")
        th = 2 * np.pi * np.arange(n) / n
        w = 2 * np.pi * R / n
        cols, lam, lap = [np.full(n, 1 / math.sqrt(n))], [self.eigenvalues[0]], [0.0]
        for m in range(1, n // 2 + 1):
            trig = [np.cos(m * th)] if 2 * m == n else [np.cos(m * th), np.sin(m * th)]
            for c in trig:
                cols.append(c / np.linalg.norm(c))
                lam.append(self.eigenvalues[m])
                lap.append(m * m / (R * R))
        Phi = np.column_stack(cols)
        N = w * Phi @ np.diag(lam) @ Phi.T
        K = w * Phi @ np.diag(lap) @ Phi.T
        pts = R * np.column_stack([np.cos(th), np.sin(th)])
        return DtnMap(
            matrix=N, boundary_points=pts, arc_weights=np.full(n, w),
            mass=w * np.eye(n), stiffness=K, mesh_h=w, n_total=n,
        )


def transmission_system(R, rho, k, m) -> np.ndarray:
    """Coefficients ``(A, B, C)`` of mode ``m`` with unit data ``cos mθ`` on ``r = R``.

    ``u = A r^m`` for ``r < ρ`` (conductivity k) and ``B r^m + C r^{-m}``
    for ``ρ < r < R``, with value and flux continuous at ``r = ρ``.
    """
    M = np.array([
        [rho**m, -(rho**m), -(rho ** (-m))],
        [k * m * rho ** (m - 1), -m * rho ** (m - 1), m * rho ** (-m - 1)],
        [0.0, R**m, R ** (-m)],
    ])
    return np.linalg.solve(M, np.array([0.0, 0.0, 1.0]))


def spectral_dtn_disk(R: float, rho: float, k: float, m_max: int) -> SpectralDtn:
    """DtN eigenvalues ``λ_m = (m/R)(1 + μq^{2m})/(1 - μq^{2m})`` on concentric disks.

    ``μ = (k-1)/(k+1)`` and ``q = ρ/R``.
    """
    if not 0 < rho < R:
        raise ArgumentError(f"need 0 < rho < R, got rho={rho}, R={R}")
    mu = (k - 1.0) / (k + 1.0)
    m = np.arange(m_max + 1, dtype=float)
    t = mu * (rho / R) ** (2 * m)
    lam = (m / R) * (1 + t) / (1 - t)
    lam[0] = 0.0
    return SpectralDtn(float(R), float(rho), float(k), lam)


def noise_operator(template: DtnMap, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric perturbation with zero row sums and ``opnorm_h12 = eps``."""
    n = template.n_boundary
    G = rng.standard_normal((n, n))
    G = 0.5 * (G + G.T)
    Q = np.eye(n) - np.full((n, n), 1.0 / n)
    G = Q @ G @ Q
    G = 0.5 * (G + G.T)
    norm = opnorm_h12(template.with_matrix(G))
    if eps == 0 or norm == 0:
        return np.zeros((n, n))
    return G * (eps / norm)
