class FeecError(ValueError):
    """Base class for invalid inputs and violated preconditions."""


class VerificationFailure(FeecError):
    """A structural verdict (compatibility, faithfulness, ...) failed."""


# Complexes
class DegenerateSimplex(FeecError):
    pass


class NonComplex(FeecError):
    pass


class UnknownCell(FeecError, KeyError):
    pass


class ZeroCell(FeecError):
    pass


class NotSimplicial(FeecError):
    pass


class NotManifoldLike(FeecError):
    pass


class NotRefinement(FeecError):
    pass


# Polynomial forms
class DimensionMismatch(FeecError):
    pass


class ZeroDegree(FeecError):
    pass


class DegreeMismatch(FeecError):
    pass


class NotASubsimplex(FeecError):
    pass


class QuadratureUnavailable(FeecError):
    pass


# Element systems
class OrderNotMonotone(FeecError):
    pass


class ConditionViolated(FeecError):
    pass


class NotASubcell(FeecError):
    pass


class NotInSpace(FeecError):
    pass


class NotCompatible(VerificationFailure):
    pass


# Mirrors
class ExtensionsUnverified(VerificationFailure):
    pass


class NotFaithful(VerificationFailure):
    pass


class InconsistentInput(FeecError):
    pass


class HostSpaceTooSmall(FeecError):
    pass


class NotExtendable(VerificationFailure):
    pass


class PreconditionFailed(VerificationFailure):
    def __init__(self, message, slot=None):
        """
        Parameters
        ----------
        message : str
                  Human readable description of the failure.
        slot : str
               Name of the failing diagram slot, e.g. ``"E^1"`` or ``"P d"``.
        """
        super().__init__(message)
        self.slot = slot


class NotFaithfulInputs(VerificationFailure):
    pass


# Harmonic forms
class NotInParentSpace(FeecError):
    pass


class SequenceInexact(VerificationFailure):
    pass


class ParentNotCompatible(VerificationFailure):
    pass


class QuadratureFailure(FeecError):
    pass


# Assembly / smoothing
class SolverBreakdown(VerificationFailure):
    pass


class IllConditionedMoments(FeecError):
    pass


class DomainExceeded(FeecError):
    pass


# Input plumbing
class MeshFormatError(FeecError):
    pass


class ConfigurationError(FeecError):
    pass
