"""Python bindings for the kinetic Fokker-Planck library.

Most functions take the same keyword arguments as the ``kfp`` command-line
configuration (``domain``, ``length``, ``n_x``, ``cutoff``, ``drift`` ...);
unknown keys raise ``ValueError``.
"""

from ._core import (
    config_keys,
    gauss_hermite,
    hermite_value,
    solve,
    evolve,
    spectral_gap,
    poincare_constant,
    hormander_ratio,
    caccioppoli,
    sample_solution,
    equilibrium_check,
    run,
)

__all__ = [
    "config_keys",
    "gauss_hermite",
    "hermite_value",
    "solve",
    "evolve",
    "spectral_gap",
    "poincare_constant",
    "hormander_ratio",
    "caccioppoli",
    "sample_solution",
    "equilibrium_check",
    "run",
]
