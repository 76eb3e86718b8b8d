"""Acceptance suite: one test per criterion, each printing one verdict line."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from probekit.cli import main
from probekit.config import load_config
from probekit.continuation import ThreeSpheresParams, estimate_tau, homogeneous_harmonic
from probekit.dtnio import read_dtn, write_dtn
from probekit.experiments import blowup_experiment, identity_check, three_spheres_ensemble
from probekit.forward import assemble_dtn, rayleigh_modes, spectral_dtn_disk
from probekit.geometry import InclusionSet
from probekit.mesh import mesh_domain
from probekit.fundsol import gamma_plus
from probekit.singular import PairSetup
from test_fundsol import transmission_residuals

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def verdict(capsys, tag, ok, detail):
    with capsys.disabled():
        print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{tag}: {detail}"


@pytest.fixture(scope="module")
def stability_runs(tmp_path_factory):
    """Two CLI stability runs of the offset family with the same seed."""
    cfg = str(CONFIGS / "family.toml")
    dirs, times = [], []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(name)
        t = time.perf_counter()
        assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
        times.append(time.perf_counter() - t)
        dirs.append(out)
    return dirs, times


def test_ac1_spectral_oracle(capsys, unit_disk):
    exact = spectral_dtn_disk(1.0, 0.5, 2.0, 8).eigenvalues[1:9]
    assert exact[0] == pytest.approx(13 / 11, rel=1e-14)
    errs, t0 = [], time.perf_counter()
    for h in (0.02, 0.01):
        dtn = assemble_dtn(mesh_domain(unit_disk, InclusionSet.disk((0, 0), 0.5), h), 2.0)
        lam = rayleigh_modes(dtn, (0, 0), 8)[1:]
        errs.append(float(np.max(np.abs(lam - exact) / exact)))
    elapsed = time.perf_counter() - t0
    ok = errs[0] < 1e-2 and errs[1] < errs[0] and elapsed < 60
    verdict(capsys, "AC1", ok, f"max rel err m<=8: {errs[0]:.3g} (h=0.02), {errs[1]:.3g} (h=0.01), "
                               f"{elapsed:.1f} s")


def test_ac2_transmission_and_symmetry(capsys):
    rng = np.random.default_rng(2024)
    res = {dim: transmission_residuals(dim, 3.0, rng) for dim in (2, 3)}
    worst_sym = 0.0
    for dim in (2, 3):
        for sx, sy in ((1, 1), (-1, -1), (1, -1)):
            for _ in range(50):
                x = np.append(rng.uniform(-1, 1, dim - 1), sx * rng.uniform(0.05, 1))
                y = np.append(rng.uniform(-1, 1, dim - 1), sy * rng.uniform(0.05, 1))
                a, b = gamma_plus(x, y, 3.0).value, gamma_plus(y, x, 3.0).value
                worst_sym = max(worst_sym, abs(a - b) / max(1.0, abs(a)))
    worst_cont = max(c for c, _ in res.values())
    worst_flux = max(f for _, f in res.values())
    ok = worst_cont < 1e-6 and worst_flux < 1e-6 and worst_sym < 1e-12
    verdict(capsys, "AC2", ok, f"continuity {worst_cont:.2g}, flux {worst_flux:.2g}, symmetry {worst_sym:.2g}")


@pytest.mark.slow
def test_ac3_boundary_identity(capsys):
    cfg = load_config(CONFIGS / "two_disks.toml")
    t0 = time.perf_counter()
    rows = identity_check(cfg, n_pairs=20)
    elapsed = time.perf_counter() - t0
    worst = max(r.rel_err for r in rows)
    ok = len(rows) >= 20 and worst < 5e-2 and elapsed < 600
    verdict(capsys, "AC3", ok, f"{len(rows)} pairs, worst relative error {worst:.3g}, {elapsed:.1f} s")


@pytest.mark.slow
def test_ac4_gradient_bound(capsys, unit_disk, two_disks):
    y = np.array([0.12, 0.0])
    seps = np.geomspace(1e-3, 1.0, 25)
    ang = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    xs = (y + seps[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], -1)[None]).reshape(-1, 2)
    xs = xs[unit_disk.contains(xs)]
    sups = []
    for h in (0.02, 0.01):
        fld = PairSetup(unit_disk, *two_disks, 2.0, h).field(1, y)
        prod = np.linalg.norm(fld.gradient(xs), axis=1) * np.linalg.norm(xs - y, axis=1)
        sups.append(float(prod.max()))
    drift = abs(sups[1] - sups[0]) / sups[0]
    ok = all(math.isfinite(s) for s in sups) and drift < 0.1
    verdict(capsys, "AC4", ok, f"sup |grad|·|x-y| = {sups[0]:.4g} (h=0.02), {sups[1]:.4g} (h=0.01), "
                               f"drift {drift:.2%}")


@pytest.mark.slow
def test_ac5_blowup(capsys):
    cfg = load_config(CONFIGS / "two_disks.toml")
    run = blowup_experiment(cfg)
    hs, fit = [s.h for s in run.samples], run.fit
    ok = fit.r2 >= 0.95 and fit.slope > 0 and min(hs) <= 1e-3 * (1 + 1e-9) and max(hs) >= 0.1 * (1 - 1e-9)
    verdict(capsys, "AC5", ok, f"slope {fit.slope:.4g}, R² {fit.r2:.4f} over h in [{min(hs):.3g}, {max(hs):.3g}]")


def test_ac6_three_spheres(capsys):
    tau, rows = three_spheres_ensemble(0, n_trials=100, l1=1.5, l2=2.0, degree=10)
    held = all(lhs <= rhs * (1 + 1e-12) for *_, lhs, rhs in rows)
    hom = estimate_tau([homogeneous_harmonic(m, 0.1 * m) for m in range(1, 11)], (0, 0), 1.0, 1.5, 2.0)
    target = ThreeSpheresParams(1.5, 2.0).homogeneous_tau
    ok = held and len(rows) == 100 and abs(hom - target) < 1e-2
    verdict(capsys, "AC6", ok, f"100 trials hold at tau {tau:.4g}; homogeneous tau {hom:.4f} vs {target:.4f}")


@pytest.mark.slow
def test_ac7_stability_curve(capsys, stability_runs):
    dirs, times = stability_runs
    fit = json.loads((dirs[0] / "fit.json").read_text())
    lm, pl = fit["log_modulus"], fit["power_law"]
    ok = (fit["monotone"] and lm["eta"] > 0 and lm["residual"] < pl["residual"] and times[0] < 1800)
    verdict(capsys, "AC7", ok, f"monotone {fit['monotone']}, eta {lm['eta']:.4g}, log-modulus rms "
                               f"{lm['residual']:.3g} vs power-law rms {pl['residual']:.3g} (p {pl['p']:.4g}), "
                               f"{times[0]:.0f} s")


@pytest.mark.slow
def test_ac8_domination(capsys, stability_runs):
    dirs, _ = stability_runs
    doms = [json.loads((d / "domination.json").read_text()) for d in dirs]
    a, b = (format(d["max_ratio"], ".3g") for d in doms)
    ok = all(d["finite"] for d in doms) and a == b
    verdict(capsys, "AC8", ok, f"max d_H/d_mu {a} and {b} over {len(doms[0]['ratios'])} pairs")


@pytest.mark.slow
def test_ac9_determinism_and_format(capsys, stability_runs, tmp_path, unit_disk, two_disks):
    dirs, _ = stability_runs
    same_csv = (dirs[0] / "results.csv").read_bytes() == (dirs[1] / "results.csv").read_bytes()
    dtn = assemble_dtn(mesh_domain(unit_disk, two_disks[0], 0.05), 2.0)
    path = write_dtn(tmp_path / "a.dtn", dtn)
    back = read_dtn(path, dtn.boundary_points)
    write_dtn(tmp_path / "b.dtn", back)
    bit_exact = (np.array_equal(back.matrix, dtn.matrix) and np.array_equal(back.arc_weights, dtn.arc_weights)
                 and back.mesh_h == dtn.mesh_h and path.read_bytes() == (tmp_path / "b.dtn").read_bytes())
    verdict(capsys, "AC9", same_csv and bit_exact, f"results.csv identical: {same_csv}, DTN1 round trip "
                                                   f"bit-exact: {bit_exact}")
