"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class so
that batch drivers can branch on the type instead of parsing messages.
"""


class CritEdgeError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(CritEdgeError):
    """Eigenvalue/multiplicity arrays disagree, or multiplicities do not sum to n."""


class ZeroEigenvalue(CritEdgeError):
    """An operation requiring an invertible deformation met a zero eigenvalue."""


class DegenerateHessian(CritEdgeError):
    """Hessian has no positive eigenvalue; shape/scaling parameters undefined."""


class InvalidEta(CritEdgeError):
    """Spectral parameter eta must be strictly positive."""


class NoConvergence(CritEdgeError):
    """An iterative solver exhausted its budget without meeting tolerance."""


class SingularIterate(CritEdgeError):
    """A matrix iterate became singular during a full Dyson solve."""


class ConditionViolated(CritEdgeError):
    """Admissibility conditions for the two-point trace map failed.

    Carries the list of human-readable condition failures in ``failures``.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class SingularJacobian(CritEdgeError):
    """Jacobian of the two-point trace map is numerically singular."""


class ContractionFailed(CritEdgeError):
    """Implicit-function solve: the sampled contraction bound exceeded 1/2."""


class RadiusExceeded(CritEdgeError):
    """Implicit-function solve: requested input lies outside the certified radius."""


class MeshTooCoarse(CritEdgeError):
    """No mesh width in the calibration ladder yielded a contractive solve."""


class ResidualExceeded(CritEdgeError):
    """A path violates its per-grid-point residual or norm invariants."""


class SizePreconditionFailed(CritEdgeError):
    """Partition matching size precondition violated; message names the inequality."""


class PairingInfeasible(CritEdgeError):
    """Matched boxes violate the admissible-region constraints for the trace map."""


class DeltaTvExceeded(CritEdgeError):
    """Endpoint spectra are farther apart than the allowed perturbation budget."""


class NoValidConstant(CritEdgeError):
    """No dyadic half-plane mass constant satisfies the two-sided count bound."""


class NotReal(CritEdgeError):
    """Hermitian-only flow called on a spectrum with non-real eigenvalues."""


class UnknownModel(CritEdgeError):
    """Requested matrix ensemble name is not recognised."""


class QuadratureUnstable(CritEdgeError):
    """Quadrature nodes could not be separated from log singularities."""


class ConfigError(CritEdgeError):
    """Run configuration is malformed (unknown keys, bad types, bad values)."""
