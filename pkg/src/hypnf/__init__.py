"""Constructive Birkhoff normal forms near hyperbolic fixed points.

Subpackages follow the pipeline: linear symplectic algebra (`linalg`),
jet algebra and normalization (`jets`), Hamiltonian evaluation
(`hamiltonians`), flow diagnostics (`flow`), the quadrature homological
solver (`homological`), and the deformation loop (`deformation`).
The `hypnf` console script fronts the whole pipeline.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .jets import (  # noqa: F401
    ActionPolynomial,
    Jet,
    NormalFormResult,
    ResonanceReport,
    action_form,
    birkhoff_normalize,
    hyperbolic_action_angle,
    lie_transform,
    poisson,
    resonance_scan,
)
