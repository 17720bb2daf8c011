"""Exception hierarchy.

Every failure mode of the library raises a subclass of :class:`HypnfError`,
so callers (and the CLI) can map error families to exit codes without
string matching.
"""


class HypnfError(Exception):
    """Base class for all hypnf errors."""


# ---------------------------------------------------------------- spectrum
class NotCriticalPoint(HypnfError):
    """Gradient at the candidate fixed point exceeds the tolerance."""


class DegenerateHessian(HypnfError):
    """Hessian at the fixed point is singular or badly conditioned."""


class PurelyImaginarySpectrum(HypnfError):
    """An eigenvalue of the linearization sits on the imaginary axis."""


class ZeroEigenvalue(HypnfError):
    """The linearization has a (numerically) vanishing eigenvalue."""


class NonDiagonalizable(HypnfError):
    """Geometric multiplicity deficit detected in the linearization."""


class ResonantOrMultipleSpectrum(HypnfError):
    """Coinciding eigenvalues; the simple normal form does not apply."""


class NormalizationFailed(HypnfError):
    """Symplectic orthonormalization of the eigenframe lost rank or accuracy."""


class NoComplexBlocks(HypnfError):
    """Complexification requested for a frame without loxodromic blocks."""


class UnstableA0(HypnfError):
    """Matrix has an eigenvalue with nonpositive real part."""


class DimensionMismatch(HypnfError):
    """Operands live in phase spaces of different dimension."""


# ------------------------------------------------------------ jets / forms
class GeneratorTooLowDegree(HypnfError):
    """Lie-series generator has nonzero terms below degree 3."""


class ResonanceObstruction(HypnfError):
    """A small divisor blocks a normalization step."""

    def __init__(self, message, k=None, value=None):
        super().__init__(message)
        self.k = tuple(k) if k is not None else None
        self.value = value


class NotWilliamson(HypnfError):
    """Quadratic part is not in saddle / loxodromic block form."""


class NonActionMonomial(HypnfError):
    """A monomial with unequal x and xi exponents where actions are required."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = tuple(offenders)


class NegativeAction(HypnfError):
    """Action variables must be nonnegative."""


# ----------------------------------------------------------------- flow
class FlowError(HypnfError):
    """Base class for trajectory integration failures."""


class StepSizeCollapse(FlowError):
    """Integrator could not meet the local tolerance."""


class LeftDomain(FlowError):
    """State exited the configured chart during integration."""


class EnergyDriftExceeded(FlowError):
    """Energy conservation defect exceeded the trajectory invariant."""


class OriginUndefined(HypnfError):
    """Requested quantity is undefined at the fixed point itself."""


class NoCrossingWithinHorizon(FlowError):
    """No event crossing found within the search horizon."""

    def __init__(self, message, horizon=None):
        super().__init__(message)
        self.horizon = horizon


class InsufficientSamples(HypnfError):
    """Sampler could not produce enough admissible points."""


# ------------------------------------------------- homological / deformation
class DecayMarginTooSmall(HypnfError):
    """Flatness order times the contraction rate does not beat the slack."""


class HomologicalFailure(HypnfError):
    """Homological solve failed at a deformation node."""


class ResidualDiverging(HypnfError):
    """Conjugacy residual grows monotonically over consecutive nodes."""
