"""FEM DtN eigenvalues of a concentric disk against the closed form."""

from __future__ import annotations

import numpy as np

from probekit.forward import assemble_dtn, rayleigh_modes, spectral_dtn_disk
from probekit.geometry import AprioriData, DomainSpec, InclusionSet, StarBoundary
from probekit.mesh import mesh_domain


def main():
    dom = DomainSpec(StarBoundary.circle((0.0, 0.0), 1.0),
                     AprioriData(rbar=0.3, bigM=40.0, delta_tilde=0.2, lipL=1.0, alpha=0.5))
    exact = spectral_dtn_disk(1.0, 0.5, 2.0, 8).eigenvalues
    print(" m   exact        h=0.04       h=0.02")
    cols = []
    for h in (0.04, 0.02):
        dtn = assemble_dtn(mesh_domain(dom, InclusionSet.disk((0, 0), 0.5), h), 2.0)
        cols.append(rayleigh_modes(dtn, (0, 0), 8))
    for m in range(1, 9):
        print(f"{m:2d}  {exact[m]:.8f}  " + "  ".join(f"{c[m]:.8f}" for c in cols))
    err = [np.max(np.abs(c[1:9] - exact[1:9]) / exact[1:9]) for c in cols]
    print(f"max relative error: {err[0]:.2e} (h=0.04), {err[1]:.2e} (h=0.02)")


if __name__ == "__main__":
    main()
