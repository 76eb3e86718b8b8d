from __future__ import annotations

import numpy as np
import pytest

from probekit.geometry import AprioriData, DomainSpec, InclusionSet, StarBoundary


@pytest.fixture(scope="session")
def apriori():
    return AprioriData(rbar=0.3, bigM=40.0, delta_tilde=0.2, lipL=1.0, alpha=0.5)


@pytest.fixture(scope="session")
def unit_disk(apriori):
    return DomainSpec(StarBoundary.circle((0.0, 0.0), 1.0), apriori)


@pytest.fixture(scope="session")
def two_disks():
    return InclusionSet.disk((-0.2, 0.0), 0.3), InclusionSet.disk((0.35, 0.0), 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
