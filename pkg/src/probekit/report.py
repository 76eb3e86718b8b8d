"""Human-readable summary of a run directory.

Known result files are aggregated into ``report.txt`` with one verdict
line per property check, plus SVG plots. Missing inputs leave flagged
gaps instead of failing.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .dtnio import read_raw
from .svg import line_plot

REPORT_NAME = "report.txt"


@dataclass
class Report:
    lines: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.gaps)

    def verdict(self, name, ok, detail=""):
        self.lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    def text(self) -> str:
        out = ["probekit run report", "=" * 19, ""] + self.lines
        if self.gaps:
            out += ["", "Gaps (inputs not found):"] + [f"  - {g}" for g in self.gaps]
        return "\n".join(out) + "\n"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _stability(run, rep, results, fit):
    if not (results.exists() and fit.exists()):
        rep.gaps.append(f"stability ({results.name}, {fit.name})")
        return
    rows = _rows(results)
    f = _json(fit)
    lm, pl = f["log_modulus"], f["power_law"]
    rep.lines.append(f"stability: {len(rows)} rows, {len(f['excluded_rows'])} below the ε floor "
                     f"{f['eps_floor']:.3g}")
    rep.lines.append(f"  log modulus  d_H = {lm['C']:.4g} |log ε|^-{lm['eta']:.4g}  (rms {lm['residual']:.3g})")
    rep.lines.append(f"  power law    d_H = {pl['C']:.4g} ε^{pl['p']:.4g}  (rms {pl['residual']:.3g})")
    rep.verdict("eta > 0", lm["eta"] > 0, f"eta = {lm['eta']:.4g}")
    rep.verdict("rows weakly monotone", bool(f["monotone"]))
    rep.verdict("log modulus fits better than power law", bool(f["log_modulus_preferred"]),
                f"{lm['residual']:.3g} vs {pl['residual']:.3g}")
    xs, ys = [], []
    for r in rows:
        e, d = float(r["eps"]), float(r["d_hausdorff"])
        if 0 < e < 1 and int(r["reliable"]):
            xs.append(1.0 / abs(math.log(e)))
            ys.append(d)
    svg = run / "stability.svg"
    svg.write_text(line_plot([("rows", xs, ys)], "stability", "|log eps|^-1", "d_H"), encoding="utf-8")
    rep.files.append(svg.name)
    dom = run / "domination.json"
    if dom.exists():
        d = _json(dom)
        rep.verdict("d_H / d_mu bounded on the family", bool(d["finite"]), f"max ratio {d['max_ratio']:.4g}")


def _blowup(run, rep):
    path, fit = run / "blowup.csv", run / "blowup.json"
    if not (path.exists() and fit.exists()):
        rep.gaps.append("blow-up sweep (blowup.csv, blowup.json)")
        return
    f = _json(fit)
    rep.verdict("blow-up fit R² ≥ 0.95 with positive slope", f["r2"] >= 0.95 and f["slope"] > 0,
                f"slope {f['slope']:.4g}, R² {f['r2']:.4f}")
    rows = _rows(path)
    xs = [math.log(1 / float(r["h"])) for r in rows]
    ys = [abs(float(r["s_d1"])) for r in rows]
    svg = run / "blowup.svg"
    svg.write_text(line_plot([("|S_D1(y,y)|", xs, ys)], "blow-up", "log(1/h)", "|S|"), encoding="utf-8")
    rep.files.append(svg.name)


def _three_spheres(run, rep):
    path = run / "three_spheres.csv"
    if not path.exists():
        rep.gaps.append("three-spheres ensemble (three_spheres.csv)")
        return
    rows = _rows(path)
    ok = all(float(r["lhs"]) <= float(r["rhs"]) * (1 + 1e-12) for r in rows)
    tau = min((float(r["tau"]) for r in rows), default=float("nan"))
    rep.verdict("three-spheres inequality on the ensemble", ok, f"{len(rows)} trials at tau = {tau:.4g}")


def _reconstruct(run, rep):
    path = run / "reconstruct.json"
    if not path.exists():
        rep.gaps.append("reconstruction (reconstruct.json)")
        return
    r = _json(path)
    err = r.get("d_hausdorff")
    rep.lines.append(f"reconstruction: {r['status']}, d_H error "
                     f"{'n/a' if err is None else format(err, '.4g')}")


def _indicator(run, rep):
    path = run / "indicator.csv"
    if not path.exists():
        rep.gaps.append("boundary identity samples (indicator.csv)")
        return
    rows = _rows(path)
    worst = max((float(r["rel_err"]) for r in rows), default=float("nan"))
    rep.verdict("boundary identity within 5e-2", worst < 5e-2, f"{len(rows)} pairs, worst {worst:.3g}")


def emit_report(run_dir, results="results.csv", fit="fit.json") -> Report:
    """Write ``report.txt`` and plots into ``run_dir``.

    Raises
    ------
    FormatError
        If a ``.dtn`` file in the directory is corrupt.
    """
    run = Path(run_dir)
    run.mkdir(parents=True, exist_ok=True)
    rep = Report()
    dtns = sorted(run.glob("*.dtn"))
    for p in dtns:
        raw = read_raw(p)
        rep.lines.append(f"dtn {p.name}: {raw['n_boundary']} boundary vertices, h = {raw['mesh_h']:.4g}")
    _stability(run, rep, run / results, run / fit)
    _blowup(run, rep)
    _indicator(run, rep)
    _three_spheres(run, rep)
    _reconstruct(run, rep)
    (run / REPORT_NAME).write_text(rep.text(), encoding="utf-8")
    rep.files.insert(0, REPORT_NAME)
    return rep
