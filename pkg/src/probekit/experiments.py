"""Experiment drivers.

Stability curves (ε against the Hausdorff distance), decay of the probe
indicator with the operator distance, blow-up of the singular energies,
domination of the Hausdorff distance by the modified distance and a
probe-line reconstruction. Every driver is deterministic for a fixed
configuration and seed.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .continuation import (
    SourceCurve,
    ThreeSpheresParams,
    estimate_tau,
    random_harmonic,
    runge_approximate,
    three_spheres_check,
    wedge_eval_set,
)
from .errors import AdmissibilityError, ArgumentError, InternalError, RangeError
from .forward import DtnMap, assemble_dtn, noise_operator, opnorm_h12, sobolev_basis
from .geometry import (
    DomainSpec,
    InclusionSet,
    admissibility_violations,
    hausdorff_distance,
    modified_distance,
    probe_frame_at,
    region_decomposition,
)
from .mesh import mesh_domain
from .singular import PairSetup, f_boundary, probe_sizing, probe_sweep

log = logging.getLogger(__name__)

# ε rows below this multiple of the mesh-halving discrepancy are not trusted
FLOOR_FACTOR = 10.0
DEFAULT_OFFSETS = (0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2)
DEFAULT_PROBE_H = tuple(float(h) for h in np.logspace(-3, -1, 10))


# ---------------------------------------------------------------- config types


@dataclass(frozen=True)
class FamilySpec:
    """One-parameter family of disk pairs ``D₂ = D₁ + δe``.

    ``n_random`` random admissible disk pairs are added for the
    domination check.
    """

    radius: float = 0.25
    center: tuple = (0.0, 0.0)
    direction: tuple = (1.0, 0.0)
    offsets: tuple = DEFAULT_OFFSETS
    n_random: int = 12

    def __post_init__(self):
        if not self.radius > 0:
            raise ArgumentError("family radius must be positive")
        e = np.asarray(self.direction, dtype=float)
        if not np.linalg.norm(e) > 0:
            raise ArgumentError("family direction must be nonzero")
        if any(d < 0 for d in self.offsets):
            raise ArgumentError("family offsets must be nonnegative")

    @property
    def unit(self) -> np.ndarray:
        e = np.asarray(self.direction, dtype=float)
        return e / np.linalg.norm(e)

    def base(self) -> InclusionSet:
        return InclusionSet.disk(self.center, self.radius)

    def pair(self, delta, direction=None):
        e = self.unit if direction is None else np.asarray(direction, dtype=float)
        c2 = np.asarray(self.center, dtype=float) + float(delta) * e
        return self.base(), InclusionSet.disk(tuple(c2), self.radius)


@dataclass(frozen=True)
class ProbeSpec:
    """Probe depths for blow-up sweeps and probe-line layout for reconstruction.

    Attributes
    ----------
    h_values : tuple
        Probe depths, sorted decreasing on use.
    cone_angle : float, optional
        Overrides the cone half-angle ``arctan(1/L)``.
    n_lines, n_depths, max_depth : int, int, float
        Reconstruction lines run from ``∂Ω`` toward the center of Ω; depths
        are fractions of the local radius up to ``max_depth``.
    margin, n_sources, reg, half_angle, rho :
        Source-fit settings, see :func:`probe_lines`.
    gain, quantile, far :
        Threshold calibration, see :func:`calibrate_threshold`.
    band_factor : float
        Boundary modes are kept while the measured response exceeds
        ``band_factor`` times the noise level, see :func:`mode_cutoff`.
    """

    h_values: tuple = DEFAULT_PROBE_H
    cone_angle: float = None
    n_lines: int = 12
    n_depths: int = 30
    max_depth: float = 0.9
    margin: float = 0.2
    n_sources: int = 256
    reg: float = 1e-7
    half_angle: float = math.pi / 3
    rho: float = 0.03
    gain: float = 5.0
    quantile: float = 0.95
    far: float = 0.3
    band_factor: float = 0.5

    def __post_init__(self):
        if any(h <= 0 for h in self.h_values):
            raise ArgumentError("probe depths must be positive")
        if self.n_lines < 1 or self.n_depths < 2:
            raise ArgumentError("need at least one probe line and two depths")
        if not 0 < self.max_depth < 1:
            raise ArgumentError("max_depth is a fraction of the radius in (0, 1)")
        if not 0 < self.quantile <= 1:
            raise ArgumentError("quantile must lie in (0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; checked for admissibility on construction.

    ``inclusions`` maps names to inclusion sets in file order. The first
    two are the pair used by the blow-up sweep; the first alone is the
    target of the reconstruction and ``"reference"``, when present, is
    the calibration inclusion.
    """

    domain: DomainSpec
    inclusions: dict = field(default_factory=dict)
    k: float = 2.0
    mesh_h: float = 0.02
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    noise_eps: tuple = ()
    seed: int = 0
    family: FamilySpec = field(default_factory=FamilySpec)
    outputs: dict = field(default_factory=lambda: {"results": "results.csv", "fit": "fit.json"})

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ArgumentError(f"contrast k must be positive, got {self.k}")
        if not self.mesh_h > 0:
            raise ArgumentError("mesh_h must be positive")
        if any(e < 0 for e in self.noise_eps):
            raise ArgumentError("noise levels must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ArgumentError("seed must be an unsigned 64-bit integer")
        problems = list(self.domain.violations())
        for name, inc in self.inclusions.items():
            problems += [f"[{name}] {v}" for v in admissibility_violations(self.domain, inc)]
        fam = self.family
        for delta in sorted({0.0, *fam.offsets}):
            for i, inc in enumerate(fam.pair(delta)):
                problems += [f"[family δ={delta:g}, D{i + 1}] {v}"
                             for v in admissibility_violations(self.domain, inc)]
        if problems:
            raise AdmissibilityError(sorted(set(problems), key=problems.index))

    @property
    def collar(self) -> float:
        """Width of the boundary layer shared by all meshes."""
        return 0.5 * self.domain.apriori.delta_tilde

    @property
    def grid_h(self) -> float:
        """Grid spacing for region decompositions."""
        return min(self.domain.apriori.delta_tilde / 4, 0.02)

    def named(self, index: int) -> InclusionSet:
        incs = list(self.inclusions.values())
        if index >= len(incs):
            raise ArgumentError(f"configuration defines {len(incs)} inclusions, need {index + 1}")
        return incs[index]

    def with_mesh_h(self, h) -> "ExperimentConfig":
        return _replace(self, mesh_h=float(h))

    def with_seed(self, seed) -> "ExperimentConfig":
        return _replace(self, seed=int(seed))


def _replace(cfg, **kw):
    data = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    data.update(kw)
    return ExperimentConfig(**data)


# ---------------------------------------------------------------------- fitters


@dataclass(frozen=True)
class ModelFit:
    """``log d = log C + slope · x`` fitted by least squares.

    ``residual`` is the root-mean-square misfit of ``log d``.
    """

    C: float
    exponent: float
    residual: float


def _loglinear(x, d):
    x = np.asarray(x, dtype=float)
    y = np.log(np.asarray(d, dtype=float))
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return coef, float(np.sqrt(np.mean(r * r)))


def _check_rows(eps, d):
    eps = np.asarray(eps, dtype=float)
    d = np.asarray(d, dtype=float)
    if len(eps) != len(d) or len(eps) < 2:
        raise ArgumentError("need at least two (ε, d) rows of equal length")
    if np.any(eps <= 0) or np.any(eps >= 1) or np.any(d <= 0):
        raise ArgumentError("fits need 0 < ε < 1 and d > 0")
    return eps, d


def fit_log_modulus(eps, d) -> ModelFit:
    """Fit ``d = C |log ε|^(-η)``; ``exponent`` holds η."""
    eps, d = _check_rows(eps, d)
    coef, res = _loglinear(np.log(np.abs(np.log(eps))), d)
    return ModelFit(float(math.exp(coef[0])), float(-coef[1]), res)


def fit_power_law(eps, d) -> ModelFit:
    """Fit ``d = C ε^p``; ``exponent`` holds p."""
    eps, d = _check_rows(eps, d)
    coef, res = _loglinear(np.log(eps), d)
    return ModelFit(float(math.exp(coef[0])), float(coef[1]), res)


# -------------------------------------------------------------------- stability


@dataclass(frozen=True)
class StabilityRow:
    offset: float
    eps: float
    d_mu: float
    d_hausdorff: float
    reliable: bool


@dataclass
class StabilityFit:
    """Rows of a stability run with the log-modulus and power-law fits."""

    rows: list
    modulus: ModelFit
    power: ModelFit
    floor: float
    excluded: list

    @property
    def C(self) -> float:
        return self.modulus.C

    @property
    def eta(self) -> float:
        return self.modulus.exponent

    @property
    def residual(self) -> float:
        return self.modulus.residual

    @property
    def monotone(self) -> bool:
        """Both ε and d_H weakly increase along the family."""
        rows = sorted(self.rows, key=lambda r: r.offset)
        e = [r.eps for r in rows]
        d = [r.d_hausdorff for r in rows]
        return all(b >= a for a, b in zip(e, e[1:])) and all(b >= a for a, b in zip(d, d[1:]))

    @property
    def log_modulus_preferred(self) -> bool:
        return self.modulus.residual < self.power.residual

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["offset", "eps", "d_mu", "d_hausdorff", "reliable"])
        for r in self.rows:
            w.writerow([_num(r.offset), _num(r.eps), _num(r.d_mu), _num(r.d_hausdorff), int(r.reliable)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "log_modulus": {"C": self.modulus.C, "eta": self.modulus.exponent,
                            "residual": self.modulus.residual},
            "power_law": {"C": self.power.C, "p": self.power.exponent, "residual": self.power.residual},
            "eps_floor": self.floor,
            "excluded_rows": self.excluded,
            "monotone": self.monotone,
            "log_modulus_preferred": self.log_modulus_preferred,
        }


def _num(x) -> str:
    return format(float(x), ".17g")


def prolongation(n: int) -> sp.csr_matrix:
    """Piecewise-linear prolongation from ``n`` to ``2n`` boundary vertices."""
    i = np.arange(n)
    rows = np.concatenate([2 * i, 2 * i + 1, 2 * i + 1])
    cols = np.concatenate([i, i, (i + 1) % n])
    vals = np.concatenate([np.ones(n), np.full(n, 0.5), np.full(n, 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, n))


def dtn_floor(dom: DomainSpec, inc: InclusionSet, k: float, h: float, collar=None) -> float:
    """Trust floor for operator distances at mesh size ``h``.

    The inclusion part ``N_D - N_∅`` of the DtN matrix is computed at ``h``
    and at ``h/2`` with exactly twice the boundary vertices; the fine
    matrix is restricted to coarse boundary functions by piecewise-linear
    prolongation. The floor is ``FLOOR_FACTOR`` times the fractional
    operator norm of the discrepancy.
    """
    coarse = [assemble_dtn(mesh_domain(dom, s, h, collar=collar), k) for s in (inc, InclusionSet())]
    n = coarse[0].n_boundary
    fine = [assemble_dtn(mesh_domain(dom, s, h / 2, n_boundary=2 * n, collar=collar, check_h=False), k)
            for s in (inc, InclusionSet())]
    P = prolongation(n)
    dc = coarse[0].matrix - coarse[1].matrix
    df = P.T @ (fine[0].matrix - fine[1].matrix) @ P
    return FLOOR_FACTOR * opnorm_h12(coarse[0].with_matrix(dc - df))


def _family_dtn(args):
    dom, inc, k, h, collar = args
    return assemble_dtn(mesh_domain(dom, inc, h, collar=collar), k).matrix


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def pair_distances(dom: DomainSpec, d1: InclusionSet, d2: InclusionSet, grid_h: float):
    """``(d_μ, d_H)`` of a pair; zero for identical sets."""
    if d1 == d2:
        return 0.0, 0.0
    rep = modified_distance(d1, d2, region_decomposition(dom, d1, d2, grid_h))
    return rep.d_mu, rep.d_hausdorff


def stability_experiment(cfg: ExperimentConfig, jobs=1, floor=None) -> StabilityFit:
    """Operator distance against inclusion distance on the offset family.

    Each configuration is meshed on its own, sharing only the boundary
    collar. Rows with ε below the floor are kept in the table but left
    out of both fits.

    Raises
    ------
    ArgumentError
        If the positive offsets do not span a decade of d_μ or fewer than
        two rows are reliable.
    """
    fam, dom = cfg.family, cfg.domain
    offsets = sorted({float(d) for d in fam.offsets})
    base = fam.base()
    if floor is None:
        floor = dtn_floor(dom, base, cfg.k, cfg.mesh_h, cfg.collar)
    items = [(dom, fam.pair(d)[1], cfg.k, cfg.mesh_h, cfg.collar) for d in offsets if d > 0]
    mats = _map(_family_dtn, [(dom, base, cfg.k, cfg.mesh_h, cfg.collar)] + items, jobs)
    ref = assemble_dtn(mesh_domain(dom, base, cfg.mesh_h, collar=cfg.collar), cfg.k)
    n1 = ref.with_matrix(mats[0])
    it = iter(mats[1:])
    rows = []
    for d in offsets:
        d1, d2 = fam.pair(d)
        if d == 0:
            eps = 0.0
        else:
            eps = opnorm_h12(n1, ref.with_matrix(next(it)))
        d_mu, d_h = pair_distances(dom, d1, d2, cfg.grid_h)
        rows.append(StabilityRow(d, eps, d_mu, d_h, bool(eps >= floor)))
    rows.sort(key=lambda r: (r.eps, r.offset))
    mus = [r.d_mu for r in rows if r.d_mu > 0]
    if not mus or max(mus) < 10 * min(mus) * (1 - 1e-9):
        raise ArgumentError("family must produce d_μ values spanning at least one decade")
    good = [r for r in rows if r.reliable and r.d_hausdorff > 0]
    excluded = [r.offset for r in rows if r not in good]
    if len(good) < 2:
        raise ArgumentError(f"only {len(good)} rows lie above the ε floor {floor:.3g}")
    eps = [r.eps for r in good]
    dh = [r.d_hausdorff for r in good]
    return StabilityFit(rows, fit_log_modulus(eps, dh), fit_power_law(eps, dh), float(floor), excluded)


# ------------------------------------------------------------------ decay of f


@dataclass(frozen=True)
class DecayRow:
    trial: int
    offset: float
    h: float
    eps: float
    f: float


@dataclass
class DecayTable:
    rows: list

    def trials(self):
        return sorted({r.trial for r in self.rows})

    def _select(self, **kw):
        return [r for r in self.rows if all(math.isclose(getattr(r, k), v) if isinstance(v, float)
                                            else getattr(r, k) == v for k, v in kw.items())]

    def decreasing_in_eps(self, h) -> bool:
        """``|f|`` strictly decreases with ε along every trial at depth ``h``."""
        for t in self.trials():
            rows = sorted((r for r in self._select(trial=t, h=float(h)) if r.eps > 0), key=lambda r: r.eps)
            vals = [abs(r.f) for r in rows]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                return False
        return True

    def eps_exponent(self, h) -> float:
        """Smallest slope of ``log|f|`` against ``log ε`` over trials."""
        slopes = []
        for t in self.trials():
            rows = [r for r in self._select(trial=t, h=float(h)) if r.eps > 0 and r.f != 0]
            if len(rows) >= 2:
                x = np.log([r.eps for r in rows])
                y = np.log([abs(r.f) for r in rows])
                slopes.append(float(np.polyfit(x, y, 1)[0]))
        if not slopes:
            raise ArgumentError("no trial has two rows with ε > 0")
        return min(slopes)

    def envelope(self, offset) -> list:
        """``(h, max over trials |f|)`` for a fixed offset, by decreasing h."""
        hs = sorted({r.h for r in self._select(offset=float(offset))}, reverse=True)
        return [(h, max(abs(r.f) for r in self._select(offset=float(offset), h=h))) for h in hs]

    def envelope_nondecreasing(self, offset) -> bool:
        env = [v for _, v in self.envelope(offset)]
        return all(b >= a * (1 - 1e-12) for a, b in zip(env, env[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "offset", "h", "eps", "f"])
        for r in self.rows:
            w.writerow([r.trial, _num(r.offset), _num(r.h), _num(r.eps), _num(r.f)])
        return buf.getvalue()


def decay_directions(seed, n) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def f_decay_experiment(cfg: ExperimentConfig, n_trials=3, offsets=None, h_values=None) -> DecayTable:
    """Indicator ``f(y, y)`` over translated pairs and probe depths.

    Trial ``j`` translates the family disk along a random direction
    ``e_j``. The probe sits at ``O + hν`` with ``O`` the point of ``∂D₁``
    opposite to ``e_j`` and ``ν = -e_j``, so it stays outside both
    inclusions and the boundary pairing gives ``f`` exactly. Offsets act
    as the perturbation size; ε is measured as the operator distance.

    Raises
    ------
    RangeError
        If a depth exceeds the height of the probe cone or leaves Ω.
    """
    fam, dom = cfg.family, cfg.domain
    offsets = sorted({float(d) for d in (offsets if offsets is not None else
                                         [0.16 / 2**i for i in range(6)] + [0.0])}, reverse=True)
    hs = sorted((float(h) for h in (h_values if h_values is not None else
                                    [0.2 * dom.apriori.rbar / 2**i for i in range(5)])), reverse=True)
    if hs[0] > dom.apriori.rbar:
        raise RangeError(f"probe depth {hs[0]:.4g} exceeds r̄ = {dom.apriori.rbar:.4g}")
    rows = []
    for t, e in enumerate(decay_directions(cfg.seed, n_trials)):
        O = np.asarray(fam.center) - fam.radius * e
        ys = O[None] - np.asarray(hs)[:, None] * e
        if not np.all(dom.contains(ys)) or np.any(dom.boundary_distance(ys) < dom.apriori.delta_tilde / 2):
            raise RangeError("probe points must stay inside Ω away from its boundary")
        for d in offsets:
            d1, d2 = fam.pair(d, e)
            if d == 0:
                rows += [DecayRow(t, d, h, 0.0, 0.0) for h in hs]
                continue
            setup = PairSetup(dom, d1, d2, cfg.k, cfg.mesh_h,
                              sizing=probe_sizing(tuple(O), hs[-1]))
            n1, n2 = setup.dtn(1), setup.dtn(2)
            eps = opnorm_h12(n1, n2)
            for h, y in zip(hs, ys):
                g1 = setup.boundary_trace(setup.field(1, y))
                g2 = setup.boundary_trace(setup.field(2, y))
                rows.append(DecayRow(t, d, h, eps, f_boundary(n1, n2, y, y, g1, g2)))
    return DecayTable(rows)


# ---------------------------------------------------------------------- blow-up


@dataclass(frozen=True)
class BlowupFit:
    """``|S_{D₁}(y,y)| ≈ slope · log(1/h) + offset``."""

    slope: float
    offset: float
    r2: float
    n: int


def blowup_fit(samples, h_max=None, min_points=8, min_decades=1.5) -> BlowupFit:
    """Least-squares fit of the singular energy against ``log(1/h)``.

    ``samples`` holds :class:`IndicatorSample` objects with ``h`` set, or
    ``(h, S)`` pairs.

    Raises
    ------
    RangeError
        If there are fewer than ``min_points`` distinct depths, they span
        less than ``min_decades`` decades, or a depth exceeds ``h_max``.
    """
    hs, vals = [], []
    for s in samples:
        if isinstance(s, tuple):
            h, v = s
        else:
            h, v = s.h, s.s_d1
        hs.append(float(h))
        vals.append(abs(float(v)))
    hs = np.asarray(hs)
    vals = np.asarray(vals)
    if np.any(hs <= 0):
        raise RangeError("probe depths must be positive")
    if h_max is not None and np.any(hs > h_max * (1 + 1e-12)):
        raise RangeError(f"probe depth {hs.max():.4g} exceeds the admissible limit {h_max:.4g}")
    if len(np.unique(hs)) < min_points:
        raise RangeError(f"blow-up fit needs at least {min_points} distinct depths, got {len(np.unique(hs))}")
    if math.log10(hs.max() / hs.min()) < min_decades - 1e-9:
        raise RangeError(f"probe depths must span at least {min_decades} decades")
    x = np.log(1.0 / hs)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    r = vals - A @ coef
    ss = float(np.sum((vals - vals.mean()) ** 2))
    r2 = 1.0 - float(r @ r) / ss if ss > 0 else 1.0
    return BlowupFit(float(coef[0]), float(coef[1]), r2, len(hs))


@dataclass
class BlowupRun:
    frame: object
    samples: list
    fit: BlowupFit

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "s_d1", "s_d2", "f"])
        for s in self.samples:
            w.writerow([_num(s.h), _num(s.s_d1), _num(s.s_d2), _num(s.f_direct)])
        return buf.getvalue()


def blowup_experiment(cfg: ExperimentConfig, h_values=None) -> BlowupRun:
    """Probe sweep toward ``∂D₁`` at the witness of the modified distance.

    The pair is the first two configured inclusions, swapped when the
    witness lies on the second one.
    """
    d1, d2 = cfg.named(0), cfg.named(1)
    hs = tuple(h_values if h_values is not None else cfg.probe.h_values)
    dec = region_decomposition(cfg.domain, d1, d2, cfg.grid_h)
    frame = probe_frame_at(d1, d2, dec, cfg.domain, hs, cone_angle=cfg.probe.cone_angle)
    if frame.side == 2:
        d1, d2 = d2, d1
        dec = region_decomposition(cfg.domain, d1, d2, cfg.grid_h)
        frame = probe_frame_at(d1, d2, dec, cfg.domain, hs, cone_angle=cfg.probe.cone_angle)
    setup = PairSetup(cfg.domain, d1, d2, cfg.k, cfg.mesh_h,
                      sizing=probe_sizing(frame.origin, min(frame.h_values)))
    samples = probe_sweep(frame, setup)
    return BlowupRun(frame, samples, blowup_fit(samples, h_max=frame.h_limit))


# ------------------------------------------------------------------- domination


@dataclass
class DominationResult:
    """Per-pair ratios ``d_H / d_μ``; pairs with both distances zero are skipped."""

    ratios: list
    skipped: int

    @property
    def max_ratio(self) -> float:
        return max((r for _, _, r in self.ratios), default=float("nan"))

    @property
    def finite(self) -> bool:
        return all(math.isfinite(r) for _, _, r in self.ratios)


def random_disk_pairs(dom: DomainSpec, rng: np.random.Generator, n, r_range=(0.15, 0.3), max_tries=10000):
    """Random pairs of admissible disks inside Ω."""
    c = np.asarray(dom.outer.center)
    pairs = []
    tries = 0
    while len(pairs) < n:
        tries += 1
        if tries > max_tries:
            raise InternalError("could not draw enough admissible disk pairs")
        pair = []
        for _ in range(2):
            r = rng.uniform(*r_range)
            reach = dom.outer.r_min - dom.apriori.delta_tilde - r
            if reach <= 0:
                break
            rho = reach * math.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * math.pi)
            inc = InclusionSet.disk(tuple(c + rho * np.array([math.cos(a), math.sin(a)])), r)
            if admissibility_violations(dom, inc):
                break
            pair.append(inc)
        if len(pair) == 2:
            pairs.append(tuple(pair))
    return pairs


def domination_check(dom: DomainSpec, pairs, grid_h) -> DominationResult:
    ratios = []
    skipped = 0
    for i, (d1, d2) in enumerate(pairs):
        d_mu, d_h = pair_distances(dom, d1, d2, grid_h)
        if d_mu == 0 and d_h == 0:
            skipped += 1
            continue
        ratios.append((i, d_mu, d_h / d_mu if d_mu > 0 else math.inf))
    return DominationResult(ratios, skipped)


def domination_experiment(cfg: ExperimentConfig) -> DominationResult:
    """Offset family plus ``family.n_random`` random disk pairs from the seed."""
    fam = cfg.family
    pairs = [fam.pair(d) for d in sorted({float(x) for x in fam.offsets})]
    pairs += random_disk_pairs(cfg.domain, np.random.default_rng(cfg.seed), fam.n_random)
    return domination_check(cfg.domain, pairs, cfg.grid_h)


# --------------------------------------------------------------- reconstruction


@dataclass
class ProbeLines:
    """Probe points along straight lines and the source-fit traces.

    ``traces[l, j]`` holds the fitted approximation of ``Γ(·, y)`` on the
    ``∂Ω`` vertices for the ``j``-th point of line ``l``.
    """

    entries: np.ndarray
    points: np.ndarray
    traces: np.ndarray
    residuals: np.ndarray
    n_modes: int = None

    def truncated(self, dtn: DtnMap, n_modes: int) -> "ProbeLines":
        """Traces projected onto the first ``n_modes`` boundary modes of ``dtn``."""
        V, _ = sobolev_basis(dtn)
        if n_modes >= V.shape[1]:
            return dataclasses.replace(self, n_modes=None)
        Vk = V[:, :n_modes]
        coef = np.einsum("ik,ldi->ldk", dtn.mass @ Vk, self.traces)
        return dataclasses.replace(self, traces=np.einsum("ik,ldk->ldi", Vk, coef), n_modes=n_modes)


def _line_traces(args):
    dom, entry, pts, bpts, probe = args
    curve = SourceCurve.around(dom, probe.margin, probe.n_sources, probe.reg)
    tr, res = [], []
    for y in pts:
        fit = runge_approximate(y, curve, wedge_eval_set(dom, entry, y, probe.half_angle, probe.rho),
                                warn=False)
        tr.append(fit.evaluate(bpts))
        res.append(fit.residual)
    return np.asarray(tr), np.asarray(res)


def probe_lines(dom: DomainSpec, boundary_points, probe: ProbeSpec = None, jobs=1) -> ProbeLines:
    """Straight probe lines from ``∂Ω`` to the center of Ω with fitted traces.

    Each probe point ``y`` gets a combination of point sources outside Ω
    fitted to ``Γ(·, y)`` away from a wedge that contains the part of the
    line already travelled; see :func:`wedge_eval_set`.
    """
    probe = probe or ProbeSpec()
    c = np.asarray(dom.outer.center)
    th = 2 * np.pi * np.arange(probe.n_lines) / probe.n_lines
    entries = dom.outer.point(th)
    frac = probe.max_depth * np.arange(1, probe.n_depths + 1) / probe.n_depths
    points = entries[:, None, :] + frac[None, :, None] * (c - entries)[:, None, :]
    bpts = np.asarray(boundary_points, dtype=float)
    out = _map(_line_traces, [(dom, entries[l], points[l], bpts, probe) for l in range(probe.n_lines)], jobs)
    traces = np.stack([t for t, _ in out])
    residuals = np.stack([r for _, r in out])
    if residuals.max() > 0.1:
        log.warning("source fits reach relative residual %.3g on the deepest probes", residuals.max())
    return ProbeLines(entries, points, traces, residuals)


def mode_cutoff(diff, dtn: DtnMap, noise_eps: float, factor=0.5) -> int:
    """Number of leading boundary modes that carry signal above the noise.

    In the weighted mode basis of ``dtn`` the diagonal of ``diff`` is
    summed over frequency groups (the constant mode, then cos/sin pairs).
    Groups are kept in order until one falls below ``factor · noise_eps``;
    the noise itself spreads roughly evenly over the modes while the
    response of an inclusion decays geometrically with frequency.
    """
    V, w = sobolev_basis(dtn)
    n = V.shape[1]
    if noise_eps <= 0:
        return n
    d = np.abs(np.einsum("ik,ij,jk->k", V, np.asarray(diff), V)) / w**2
    groups = [[0]] + [[j, j + 1] for j in range(1, n - 1, 2)]
    kept = 1
    for g in groups[1:]:
        if d[g].sum() < factor * noise_eps:
            break
        kept = g[-1] + 1
    return kept


def indicator(lines: ProbeLines, diff) -> np.ndarray:
    """``I(y) = gᵀ (N - N₀) g`` for every probe point."""
    return np.einsum("ldi,ij,ldj->ld", lines.traces, np.asarray(diff), lines.traces)


def calibrate_threshold(values, points, reference: InclusionSet, far=0.3, quantile=0.95, gain=5.0) -> float:
    """Detection threshold ``gain · q`` from a calibration run.

    ``q`` is the ``quantile`` of the indicator over probe points at least
    ``far`` away from the reference inclusion.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float).ravel()
    sel = reference.distance(pts) >= far
    if not np.any(sel):
        raise ArgumentError(f"no calibration probe lies {far} or farther from the reference inclusion")
    return float(gain * np.quantile(vals[sel], quantile))


@dataclass
class Reconstruction:
    """Boundary estimate from probe lines.

    ``crossings[l]`` is the first point where the indicator exceeds the
    threshold on line ``l``, or None when the line reports no crossing.
    """

    crossings: list
    threshold: float
    values: np.ndarray
    d_hausdorff: float = None

    @property
    def detected(self) -> bool:
        return any(c is not None for c in self.crossings)

    @property
    def status(self) -> str:
        return "ok" if self.detected else "no inclusion detected"

    @property
    def polyline(self) -> np.ndarray:
        pts = [c for c in self.crossings if c is not None]
        return np.asarray(pts, dtype=float).reshape(-1, 2)

    def line_status(self) -> list:
        return ["crossing" if c is not None else "no crossing" for c in self.crossings]


def _densify(poly, step=0.005):
    if len(poly) < 2:
        return poly
    closed = len(poly) >= 3
    pts = np.vstack([poly, poly[:1]]) if closed else poly
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        t = np.arange(m)[:, None] / m
        out.append(a + t * (b - a))
    if not closed:
        out.append(pts[-1:])
    return np.vstack(out)


def probe_reconstruct(dtn_measured: DtnMap, dtn_background: DtnMap, lines: ProbeLines, threshold: float,
                      truth: InclusionSet = None) -> Reconstruction:
    """Locate ``∂D`` where the probe indicator first exceeds ``threshold``.

    The crossing is interpolated linearly in depth between the last probe
    below and the first probe above the threshold. With ``truth`` the
    Hausdorff distance between the closed crossing polygon and ``∂D`` is
    reported.
    """
    if dtn_measured.fingerprint != dtn_background.fingerprint:
        raise ArgumentError("measured and background DtN maps live on different boundary meshes")
    vals = indicator(lines, dtn_measured.matrix - dtn_background.matrix)
    crossings = []
    for l in range(len(vals)):
        above = np.nonzero(vals[l] > threshold)[0]
        if len(above) == 0:
            crossings.append(None)
            continue
        j = int(above[0])
        if j == 0:
            crossings.append(lines.points[l, 0])
            continue
        a, b = vals[l, j - 1], vals[l, j]
        t = (threshold - a) / (b - a)
        crossings.append(lines.points[l, j - 1] + t * (lines.points[l, j] - lines.points[l, j - 1]))
    rec = Reconstruction(crossings, float(threshold), vals)
    if truth is not None and rec.detected:
        pts, _, _ = truth.boundary_samples(2048)
        rec.d_hausdorff = hausdorff_distance(_densify(rec.polyline), pts)
    return rec


def shared_mesh_dtns(dom: DomainSpec, incs, k, h):
    """DtN maps of several inclusions on one triangulation of Ω.

    Inclusions enter only through element coefficients, so the maps differ
    exactly by the effect of the inclusions; returns the background map
    first.
    """
    mesh = mesh_domain(dom, InclusionSet(), h)
    out = [assemble_dtn(mesh, k, region=None)]
    for inc in incs:
        out.append(assemble_dtn(mesh.with_region("D", inc), k, region="D"))
    return out


def default_reference(cfg: ExperimentConfig) -> InclusionSet:
    if "reference" in cfg.inclusions:
        return cfg.inclusions["reference"]
    c = np.asarray(cfg.domain.outer.center) + np.array([0.15, -0.1])
    return InclusionSet.disk(tuple(c), 0.25)


@dataclass
class ReconstructionRun:
    reconstruction: Reconstruction
    noisy: dict
    lines: ProbeLines

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["noise", "line", "x", "y"])
        for eps, rec in [(0.0, self.reconstruction), *sorted(self.noisy.items())]:
            for l, c in enumerate(rec.crossings):
                if c is not None:
                    w.writerow([_num(eps), l, _num(c[0]), _num(c[1])])
        return buf.getvalue()


def reconstruct_experiment(cfg: ExperimentConfig, jobs=1, noise_eps=None) -> ReconstructionRun:
    """Reconstruct the first configured inclusion from synthetic data.

    The threshold comes from a calibration run on the reference
    inclusion; noisy repetitions add a symmetric perturbation of the
    given operator norm to the measured map.
    """
    truth = cfg.named(0)
    ref = default_reference(cfg)
    bg, meas, cal = shared_mesh_dtns(cfg.domain, [truth, ref], cfg.k, cfg.mesh_h)
    lines = probe_lines(cfg.domain, bg.boundary_points, cfg.probe, jobs)
    p = cfg.probe

    def run(measured, eps):
        k = mode_cutoff(measured.matrix - bg.matrix, bg, eps, p.band_factor)
        cut = lines.truncated(bg, k)
        thr = calibrate_threshold(indicator(cut, cal.matrix - bg.matrix), cut.points, ref,
                                  p.far, p.quantile, p.gain)
        return probe_reconstruct(measured, bg, cut, thr, truth)

    rec = run(meas, 0.0)
    noisy = {}
    rng = np.random.default_rng(cfg.seed)
    for eps in (cfg.noise_eps if noise_eps is None else noise_eps):
        if eps == 0:
            continue
        E = noise_operator(meas, eps, rng)
        noisy[float(eps)] = run(meas.with_matrix(meas.matrix + E), float(eps))
    return ReconstructionRun(rec, noisy, lines)


def write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_json(path, data):
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------- boundary identity, ensembles


@dataclass(frozen=True)
class IdentityRow:
    y: tuple
    w: tuple
    f_direct: float
    f_boundary: float
    rel_err: float


def identity_check(cfg: ExperimentConfig, n_pairs=20, radii=(1.3, 2.0), floor_frac=1e-2) -> list:
    """Energy form against boundary pairing for random exterior source pairs.

    Sources are drawn around Ω at ``radii`` times its largest radius. The
    relative error uses ``max(|f_direct|, floor)`` with ``floor`` a fixed
    fraction of the largest ``|f_direct|`` over the pairs.
    """
    d1, d2 = cfg.named(0), cfg.named(1)
    setup = PairSetup(cfg.domain, d1, d2, cfg.k, cfg.mesh_h)
    rng = np.random.default_rng(cfg.seed)
    c = np.asarray(cfg.domain.outer.center)
    R = cfg.domain.outer.r_max
    samples = []
    for _ in range(n_pairs):
        r = R * rng.uniform(*radii, size=2)
        a = rng.uniform(0, 2 * np.pi, size=2)
        y = c + r[0] * np.array([math.cos(a[0]), math.sin(a[0])])
        w = c + r[1] * np.array([math.cos(a[1]), math.sin(a[1])])
        samples.append(setup.sample(y, w, with_boundary=True))
    floor = floor_frac * max(abs(s.f_direct) for s in samples)
    return [IdentityRow(s.y, s.w, s.f_direct, s.f_boundary,
                        abs(s.f_direct - s.f_boundary) / max(abs(s.f_direct), floor, 1e-300))
            for s in samples]


def identity_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y_x", "y_y", "w_x", "w_y", "f_direct", "f_boundary", "rel_err"])
    for r in rows:
        w.writerow([*map(_num, r.y), *map(_num, r.w), _num(r.f_direct), _num(r.f_boundary), _num(r.rel_err)])
    return buf.getvalue()


def three_spheres_ensemble(seed, n_trials=100, l1=1.5, l2=2.0, degree=10, r=1.0):
    """Random harmonic polynomials with their fitted τ and per-trial norms.

    Returns ``(tau, rows)`` with rows ``(trial, l1, l2, lhs, rhs)`` where
    ``rhs`` is evaluated at the fitted τ.
    """
    rng = np.random.default_rng(seed)
    ens = [random_harmonic(rng, degree) for _ in range(n_trials)]
    x = np.zeros(2)
    tau = estimate_tau(ens, x, r, l1, l2)
    params = ThreeSpheresParams(l1, l2, tau)
    rows = []
    for i, v in enumerate(ens):
        res = three_spheres_check(v, x, r, params)
        rows.append((i, l1, l2, res.lhs, res.rhs))
    return tau, rows


def three_spheres_csv(tau, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "l1", "l2", "lhs", "rhs", "tau"])
    for i, l1, l2, lhs, rhs in rows:
        w.writerow([i, _num(l1), _num(l2), _num(lhs), _num(rhs), _num(tau)])
    return buf.getvalue()
