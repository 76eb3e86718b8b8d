"""TOML run configurations.

A configuration has the sections ``[domain]`` (with ``[domain.apriori]``),
``[inclusions.NAME]`` holding ``[[inclusions.NAME.parts]]`` arrays,
``[material]``, ``[mesh]``, ``[probe]``, ``[noise]``, ``[family]`` and
``[run]``. Boundaries are given by their center and Fourier coefficients
``a`` (cosine, starting with the mean radius) and ``b`` (sine).
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigError
from .experiments import ExperimentConfig, FamilySpec, ProbeSpec
from .geometry import AprioriData, DomainSpec, InclusionSet, StarBoundary

_APRIORI_KEYS = {"rbar": "rbar", "M": "bigM", "delta_tilde": "delta_tilde", "L": "lipL",
                 "alpha": "alpha", "dim": "dim"}
_PROBE_KEYS = {"h": "h_values", "cone_angle": "cone_angle", "n_lines": "n_lines", "n_depths": "n_depths",
               "max_depth": "max_depth", "margin": "margin", "n_sources": "n_sources", "reg": "reg",
               "half_angle": "half_angle", "rho": "rho", "gain": "gain", "quantile": "quantile",
               "far": "far", "band_factor": "band_factor"}
_FAMILY_KEYS = ("radius", "center", "direction", "offsets", "n_random")
_SECTIONS = {"domain", "inclusions", "material", "mesh", "probe", "noise", "family", "run"}


def _locate(text, key):
    """1-based line and column of the first ``key =`` assignment, if any."""
    if text is None:
        return None, None
    pat = re.compile(rf"^(\s*){re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    if not m:
        return None, None
    line = text.count("\n", 0, m.start()) + 1
    return line, len(m.group(1)) + 1


class _Reader:
    def __init__(self, text, path):
        self.text = text
        self.path = path

    def fail(self, message, key=None):
        line, col = _locate(self.text, key) if key else (None, None)
        raise ConfigError(message, line, col, self.path)

    def table(self, data, name, required=True):
        if name not in data:
            if required:
                self.fail(f"missing section [{name}]")
            return {}
        v = data[name]
        if not isinstance(v, dict):
            self.fail(f"[{name}] must be a table", name)
        return v

    def number(self, tbl, key, where, default=None, kind=float):
        if key not in tbl:
            if default is None:
                self.fail(f"missing key '{key}' in [{where}]")
            return default
        v = tbl[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
            self.fail(f"'{where}.{key}' must be {'an integer' if kind is int else 'a number'}", key)
        return kind(v)

    def numbers(self, tbl, key, where, default=None, length=None):
        if key not in tbl:
            if default is None:
                self.fail(f"missing key '{key}' in [{where}]")
            return tuple(default)
        v = tbl[key]
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            self.fail(f"'{where}.{key}' must be an array of numbers", key)
        if length is not None and len(v) != length:
            self.fail(f"'{where}.{key}' must have {length} entries", key)
        return tuple(float(x) for x in v)

    def boundary(self, tbl, where):
        return StarBoundary(
            center=self.numbers(tbl, "center", where, length=2),
            a=self.numbers(tbl, "a", where),
            b=self.numbers(tbl, "b", where, default=()),
        )

    def unknown(self, tbl, allowed, where):
        extra = sorted(set(tbl) - set(allowed))
        if extra:
            self.fail(f"unknown key '{extra[0]}' in [{where}]", extra[0])


def parse_config(text: str, path=None) -> ExperimentConfig:
    """Parse configuration text; admissibility is checked on the result.

    Raises
    ------
    ConfigError
        On TOML syntax errors and on missing or mistyped keys.
    AdmissibilityError
        If the geometry violates the a-priori hypotheses.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(f"TOML syntax error: {msg}", getattr(exc, "lineno", None),
                          getattr(exc, "colno", None), path) from exc
    r = _Reader(text, path)
    r.unknown(data, _SECTIONS, "top level")

    dom_t = r.table(data, "domain")
    ap_t = r.table(dom_t, "apriori")
    r.unknown(dom_t, ("center", "a", "b", "apriori"), "domain")
    r.unknown(ap_t, _APRIORI_KEYS, "domain.apriori")
    ap_kw = {}
    for key, field in _APRIORI_KEYS.items():
        if key == "dim":
            ap_kw[field] = r.number(ap_t, key, "domain.apriori", default=2, kind=int)
        else:
            ap_kw[field] = r.number(ap_t, key, "domain.apriori")
    dom = DomainSpec(r.boundary(dom_t, "domain"), AprioriData(**ap_kw))

    incs = {}
    for name, inc_t in r.table(data, "inclusions", required=False).items():
        if not isinstance(inc_t, dict):
            r.fail(f"[inclusions.{name}] must be a table", name)
        r.unknown(inc_t, ("parts",), f"inclusions.{name}")
        parts = inc_t.get("parts", [])
        if not isinstance(parts, list):
            r.fail(f"'inclusions.{name}.parts' must be an array of tables", "parts")
        incs[name] = InclusionSet(tuple(r.boundary(p, f"inclusions.{name}.parts") for p in parts))

    mat = r.table(data, "material")
    r.unknown(mat, ("k",), "material")
    mesh = r.table(data, "mesh")
    r.unknown(mesh, ("h",), "mesh")

    probe_t = r.table(data, "probe", required=False)
    r.unknown(probe_t, _PROBE_KEYS, "probe")
    probe_kw = {}
    for key, field in _PROBE_KEYS.items():
        if key not in probe_t:
            continue
        if key == "h":
            probe_kw[field] = r.numbers(probe_t, key, "probe")
        elif key in ("n_lines", "n_depths", "n_sources"):
            probe_kw[field] = r.number(probe_t, key, "probe", kind=int)
        else:
            probe_kw[field] = r.number(probe_t, key, "probe")

    noise = r.table(data, "noise", required=False)
    r.unknown(noise, ("eps",), "noise")

    fam_t = r.table(data, "family", required=False)
    r.unknown(fam_t, _FAMILY_KEYS, "family")
    fam_kw = {}
    for key in _FAMILY_KEYS:
        if key not in fam_t:
            continue
        if key in ("center", "direction"):
            fam_kw[key] = r.numbers(fam_t, key, "family", length=2)
        elif key == "offsets":
            fam_kw[key] = r.numbers(fam_t, key, "family")
        elif key == "n_random":
            fam_kw[key] = r.number(fam_t, key, "family", kind=int)
        else:
            fam_kw[key] = r.number(fam_t, key, "family")

    run = r.table(data, "run", required=False)
    outputs = {k: v for k, v in run.items() if k != "seed"}
    for k, v in outputs.items():
        if not isinstance(v, str):
            r.fail(f"'run.{k}' must be a file name", k)
    seed = r.number(run, "seed", "run", default=0, kind=int)
    if seed < 0 or seed >= 2**64:
        r.fail("'run.seed' must be an unsigned 64-bit integer", "seed")

    return ExperimentConfig(
        domain=dom,
        inclusions=incs,
        k=r.number(mat, "k", "material"),
        mesh_h=r.number(mesh, "h", "mesh"),
        probe=ProbeSpec(**probe_kw),
        noise_eps=r.numbers(noise, "eps", "noise", default=()),
        seed=seed,
        family=FamilySpec(**fam_kw),
        outputs={"results": "results.csv", "fit": "fit.json", **outputs},
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path=str(path)) from exc
    return parse_config(text, str(path))


def _boundary_dict(b: StarBoundary) -> dict:
    return {"center": list(b.center), "a": list(b.a), "b": list(b.b)}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    ap = cfg.domain.apriori
    probe = {}
    defaults = ProbeSpec()
    for key, field in _PROBE_KEYS.items():
        v = getattr(cfg.probe, field)
        if v is None:
            continue
        if key == "h" or v != getattr(defaults, field):
            probe[key] = list(v) if isinstance(v, tuple) else v
    fam = cfg.family
    return {
        "domain": {
            **_boundary_dict(cfg.domain.outer),
            "apriori": {key: getattr(ap, field) for key, field in _APRIORI_KEYS.items()},
        },
        "inclusions": {name: {"parts": [_boundary_dict(p) for p in inc.parts]}
                       for name, inc in cfg.inclusions.items()},
        "material": {"k": cfg.k},
        "mesh": {"h": cfg.mesh_h},
        "probe": probe,
        "noise": {"eps": list(cfg.noise_eps)},
        "family": {"radius": fam.radius, "center": list(fam.center), "direction": list(fam.direction),
                   "offsets": list(fam.offsets), "n_random": fam.n_random},
        "run": {"seed": cfg.seed, **cfg.outputs},
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical serialization."""
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()
