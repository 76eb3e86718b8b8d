"""Command line entry point.

Every subcommand reads one TOML configuration, writes its outputs into
``--out`` and records them in ``manifest.json``. Exit codes: 0 on
success, 1 on a runtime failure, 2 on usage errors, 3 when the
configuration cannot be parsed or violates the a-priori hypotheses.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .config import config_hash, config_to_dict, dump_config, load_config
from .dtnio import cache_dir, read_raw, write_dtn, write_eigenvalues_csv
from .errors import AdmissibilityError, ArgumentError, ConfigError, ProbekitError
from .experiments import (
    blowup_experiment,
    domination_experiment,
    f_decay_experiment,
    identity_check,
    identity_csv,
    reconstruct_experiment,
    stability_experiment,
    three_spheres_csv,
    three_spheres_ensemble,
    write_json,
    write_text,
)
from .forward import DtnMap, assemble_dtn, rayleigh_modes
from .geometry import InclusionSet
from .manifest import MANIFEST_NAME, RunManifest, read_manifest, timestamp
from .mesh import mesh_domain
from .report import emit_report

log = logging.getLogger("probekit")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
EIGEN_MODES = 16


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=_u64, help="override [run] seed")
    common.add_argument("--mesh-h", type=_positive, help="override [mesh] h")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="probekit", description="Probe-method stability experiments.")
    p.add_argument("--version", action="version", version=f"probekit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("mesh", parents=[common], help="mesh Ω with each configured inclusion")
    sub.add_parser("dtn", parents=[common], help="DtN maps as DTN1 files plus eigenvalue tables")
    ind = sub.add_parser("indicator", parents=[common], help="energy form against boundary pairing")
    ind.add_argument("--pairs", type=int, default=20)
    pr = sub.add_parser("probe", parents=[common], help="blow-up sweep of the singular energy")
    pr.add_argument("--decay", action="store_true", help="also tabulate the indicator against ε")
    sub.add_parser("stability", parents=[common], help="offset family stability curve")
    ts = sub.add_parser("three-spheres", parents=[common], help="three-spheres ensemble")
    ts.add_argument("--trials", type=int, default=100)
    sub.add_parser("reconstruct", parents=[common], help="probe-line reconstruction")
    sub.add_parser("report", parents=[common], help="summarize a run directory")
    return p


def _error(kind, message, **extra):
    payload = {"error": kind, "message": message}
    payload.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


def _load(args):
    if args.config is None:
        raise _UsageError(f"{args.command} requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.mesh_h is not None:
        cfg = cfg.with_mesh_h(args.mesh_h)
    return cfg


def _targets(cfg):
    return [("background", InclusionSet())] + list(cfg.inclusions.items())


def cmd_mesh(cfg, out, args):
    written = []
    summary = {}
    for name, inc in _targets(cfg):
        m = mesh_domain(cfg.domain, inc, cfg.mesh_h)
        path = out / f"mesh_{name}.json"
        write_json(path, {
            "vertices": m.vertices.tolist(),
            "triangles": m.triangles.tolist(),
            "tags": m.tags.tolist(),
            "boundary_vertices": m.boundary_vertices.tolist(),
            "h": m.h,
        })
        summary[name] = {"n_vertices": m.n_vertices, "n_triangles": len(m.triangles),
                         "n_boundary": m.n_boundary}
        written.append(path)
    path = out / "mesh.json"
    write_json(path, summary)
    return [path] + written


def _cache_key(cfg, inc):
    d = config_to_dict(cfg)
    key = {"domain": d["domain"], "inclusion": [list(map(list, (p.center, p.a, p.b))) for p in inc.parts],
           "k": cfg.k, "h": cfg.mesh_h, "version": __version__}
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:24]


def cmd_dtn(cfg, out, args):
    cache = cache_dir()
    written = []
    for name, inc in _targets(cfg):
        path = out / f"{name}.dtn"
        hit = cache / f"{_cache_key(cfg, inc)}.dtn" if cache else None
        m = mesh_domain(cfg.domain, inc, cfg.mesh_h)
        if hit is not None and hit.exists():
            shutil.copyfile(hit, path)
            log.info("dtn %s: cache hit %s", name, hit.name)
            raw = read_raw(path)
            dtn = DtnMap(matrix=raw["matrix"], boundary_points=m.vertices[m.boundary_vertices],
                         arc_weights=raw["arc_weights"], mesh_h=raw["mesh_h"], n_total=raw["n_total"])
        else:
            dtn = assemble_dtn(m, cfg.k)
            write_dtn(path, dtn)
            if hit is not None:
                shutil.copyfile(path, hit)
        eig = rayleigh_modes(dtn, cfg.domain.outer.center, EIGEN_MODES)
        written += [path, write_eigenvalues_csv(out / f"eigenvalues_{name}.csv", eig)]
    return written


def cmd_indicator(cfg, out, args):
    rows = identity_check(cfg, n_pairs=args.pairs)
    path = out / "indicator.csv"
    write_text(path, identity_csv(rows))
    return [path]


def cmd_probe(cfg, out, args):
    run = blowup_experiment(cfg)
    csv_path, fit_path = out / "blowup.csv", out / "blowup.json"
    write_text(csv_path, run.to_csv())
    f = run.fit
    write_json(fit_path, {"slope": f.slope, "offset": f.offset, "r2": f.r2, "n": f.n,
                          "origin": list(map(float, run.frame.origin)), "h_limit": run.frame.h_limit})
    written = [csv_path, fit_path]
    if args.decay:
        path = out / "decay.csv"
        write_text(path, f_decay_experiment(cfg).to_csv())
        written.append(path)
    return written


def cmd_stability(cfg, out, args):
    fit = stability_experiment(cfg, jobs=args.jobs)
    res, fj = out / cfg.outputs["results"], out / cfg.outputs["fit"]
    write_text(res, fit.to_csv())
    write_json(fj, fit.to_json())
    dom = domination_experiment(cfg)
    dp = out / "domination.json"
    write_json(dp, {"max_ratio": dom.max_ratio, "finite": dom.finite, "skipped": dom.skipped,
                    "ratios": [{"pair": i, "d_mu": d, "ratio": r} for i, d, r in dom.ratios]})
    return [res, fj, dp]


def cmd_three_spheres(cfg, out, args):
    tau, rows = three_spheres_ensemble(cfg.seed, n_trials=args.trials)
    path = out / "three_spheres.csv"
    write_text(path, three_spheres_csv(tau, rows))
    return [path]


def _rec_json(rec):
    return {"status": rec.status, "d_hausdorff": rec.d_hausdorff, "threshold": rec.threshold,
            "lines": rec.line_status()}


def cmd_reconstruct(cfg, out, args):
    run = reconstruct_experiment(cfg, jobs=args.jobs)
    csv_path, js = out / "reconstruct.csv", out / "reconstruct.json"
    write_text(csv_path, run.to_csv())
    data = _rec_json(run.reconstruction)
    data["noisy"] = {repr(e): _rec_json(r) for e, r in sorted(run.noisy.items())}
    write_json(js, data)
    for rec in [run.reconstruction, *run.noisy.values()]:
        if not rec.detected:
            log.warning("reconstruction: no inclusion detected")
    return [csv_path, js]


def cmd_report(cfg, out, args):
    kw = {} if cfg is None else {"results": cfg.outputs["results"], "fit": cfg.outputs["fit"]}
    rep = emit_report(out, **kw)
    if rep.partial:
        log.warning("partial report, missing: %s", "; ".join(rep.gaps))
    return [out / f for f in rep.files]


COMMANDS = {
    "mesh": cmd_mesh,
    "dtn": cmd_dtn,
    "indicator": cmd_indicator,
    "probe": cmd_probe,
    "stability": cmd_stability,
    "three-spheres": cmd_three_spheres,
    "reconstruct": cmd_reconstruct,
    "report": cmd_report,
}


def _run(args) -> int:
    cfg = None
    if args.command != "report" or args.config is not None:
        try:
            cfg = _load(args)
        except ConfigError as exc:
            _error("ConfigError", str(exc), line=exc.line, column=exc.column, path=exc.path)
            return EXIT_CONFIG
        except AdmissibilityError as exc:
            _error("AdmissibilityError", str(exc), violations=exc.violations)
            return EXIT_CONFIG
        except ArgumentError as exc:
            _error("ConfigError", str(exc))
            return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    started = timestamp()
    written = COMMANDS[args.command](cfg, out, args)
    manifest = RunManifest(config_hash(cfg) if cfg else "", cfg.seed if cfg else 0,
                           " ".join(["probekit", *args.argv]), started=started)
    if (out / MANIFEST_NAME).exists():
        # several subcommands may share one run directory
        try:
            prev = read_manifest(out)
        except (ValueError, TypeError):
            prev = None
        if prev is not None:
            manifest.inputs.update(prev.inputs)
            manifest.outputs.update({k: v for k, v in prev.outputs.items() if (out / k).exists()})
    if cfg is not None:
        snapshot = out / "config.toml"
        snapshot.write_text(dump_config(cfg), encoding="utf-8")
        manifest.register(args.config, args.config.parent, "inputs")
        manifest.register(snapshot, out)
    for p in written:
        if Path(p).exists():
            manifest.register(Path(p), out)
    manifest.finished = timestamp()
    manifest.write(out)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_USAGE
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except _UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_USAGE
    except ProbekitError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _error("OSError", str(exc))
        return EXIT_RUNTIME


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
