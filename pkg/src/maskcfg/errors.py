"""Exception types raised across the package."""


class MaskCFGError(Exception):
    """Base class for all package errors."""


class UnnormalizableTilt(MaskCFGError):
    """The tilted mass p^{-w} p(.|z)^{1+w} sums to zero."""


class SupportViolation(MaskCFGError):
    """A distribution puts mass where a reference distribution has none."""


class ZeroMarginal(MaskCFGError):
    """A reverse rate was requested out of a state with zero partial marginal."""


class IncompatibleSupports(MaskCFGError):
    """The conditional rate is positive where the unguided rate vanishes."""


class DimensionMismatch(MaskCFGError):
    """An operation was called on a state space of unsupported dimension."""


class SpaceMismatch(MaskCFGError):
    """Two distributions live on different state spaces."""


class NormalizationDrift(MaskCFGError):
    """A closed-form distribution failed to sum to one."""


class DegenerateInput(MaskCFGError):
    """Too few usable points for a fit."""


class EmptyClassSupport(MaskCFGError):
    """The guided class has no support above threshold."""


class DegenerateLimit(MaskCFGError):
    """Every limiting region weight is zero."""


class EmptyRestriction(MaskCFGError):
    """A restriction set carries no probability mass."""


class StepTooCoarse(MaskCFGError):
    """A fixed-step integrator produced a clearly negative probability."""


class EventOverflow(MaskCFGError):
    """A simulated particle made more jumps than masking dynamics allows."""
