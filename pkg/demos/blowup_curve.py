"""Singular energy of a probe approaching an inclusion boundary."""

from __future__ import annotations

import sys
from pathlib import Path

from probekit.config import load_config
from probekit.experiments import blowup_experiment


def main(path=None):
    path = Path(path or Path(__file__).parent / "configs" / "two_disks.toml")
    run = blowup_experiment(load_config(path))
    print(f"probe origin {run.frame.origin}, normal {run.frame.normal}, depth limit {run.frame.h_limit:.3g}")
    for s in run.samples:
        print(f"h = {s.h:.3e}   S_D1 = {s.s_d1: .6e}   f = {s.f_direct: .6e}")
    f = run.fit
    print(f"|S_D1| ≈ {f.slope:.4g} log(1/h) {f.offset:+.4g}   (R² = {f.r2:.4f})")


if __name__ == "__main__":
    main(*sys.argv[1:])
