"""Finite element tools for the inverse conductivity problem with inclusions.

Forward DtN maps, two-phase fundamental solutions, probe indicators,
three-spheres and source-fit checks, and reproducible experiment runs.
"""

__version__ = "0.1.0"
