"""Clamped and free biharmonic eigenvalues on rectilinear domains.

C1 Bogner-Fox-Schmit finite elements give conforming upper bounds for both
spectra on one shared mesh; :mod:`biharm.verify` compares them and replays
the trial-subspace constructions behind the inequalities.
"""

from .domain import (
    QuadratureRule,
    RectilinearDomain,
    ReflectionMap,
    build_domain,
    detect_symmetry_frame,
    integrate,
    is_symmetric,
    load_domain,
    parse_domain,
)
from .eigensolve import SpectrumResult, kernel_basis, solve_lowest
from .fem import DIRICHLET, NEUMANN, MeshDofSystem, assemble_hessian, assemble_mass, build_mesh
from .trial import TrialFamily, borsuk_family, symmetric_family
from .verify import (
    InequalityReport,
    check_inequality,
    compute_spectrum,
    convergence_study,
    kernel_check,
)

__version__ = "0.1.0"

__all__ = [
    "QuadratureRule",
    "RectilinearDomain",
    "ReflectionMap",
    "build_domain",
    "detect_symmetry_frame",
    "integrate",
    "is_symmetric",
    "load_domain",
    "parse_domain",
    "SpectrumResult",
    "kernel_basis",
    "solve_lowest",
    "DIRICHLET",
    "NEUMANN",
    "MeshDofSystem",
    "assemble_hessian",
    "assemble_mass",
    "build_mesh",
    "TrialFamily",
    "borsuk_family",
    "symmetric_family",
    "InequalityReport",
    "check_inequality",
    "compute_spectrum",
    "convergence_study",
    "kernel_check",
]
