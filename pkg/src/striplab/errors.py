"""Exception taxonomy shared by all striplab modules.

Two families matter to callers: violations of an expected analytic bound
(``BoundViolationError`` subclasses, CLI exit code 4) and plain numerical
failures (everything else, CLI exit code 3).
"""


class StripLabError(Exception):
    """Base class for all striplab errors."""


class ConfigError(StripLabError):
    """Invalid experiment configuration; carries the failing stage name."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


class OutOfStrip(StripLabError):
    """Coordinate outside the model strip |x| <= X."""


class Unsupported(StripLabError):
    """Operation not defined for this profile/model combination."""


class OrderMismatch(StripLabError):
    """Vanishing-order certificate failed: the supplied order is wrong."""


class StepFailure(StripLabError):
    """Adaptive integrator could not meet the requested tolerance."""


class NoConvergence(StripLabError):
    """Iterative solver (shooting, backward limit) did not converge."""


class NotConverged(NoConvergence):
    """Backward-limit Riccati construction did not stabilize."""


class StripTooWide(StripLabError):
    """Shadowing angle bound |phi| < pi/4 failed; R exceeds the admissible range."""


class Inconclusive(StripLabError):
    """Vector classification hit the horizon without a decisive signature."""


class DomainTooWide(StripLabError):
    """Comparison-Riccati domain exceeds R0(C, m)."""


class BlowUp(StripLabError):
    """Riccati solution left the nonnegative cone (integrator defect)."""


class InvalidCase(StripLabError):
    """Unknown case selector for a comparison bound."""


class DegenerateSample(StripLabError):
    """Sample too close to the singular set for a ratio to be formed."""


class InsufficientData(StripLabError):
    """Not enough points in the requested window."""


class RegimeMismatch(StripLabError):
    """Model type does not match the requested decay regime."""


class HypothesisViolated(StripLabError):
    """Input data fails the hypothesis of the comparison lemma."""


class EscapeNotObserved(StripLabError):
    """An orbit never descended below the escape threshold."""


class BoundViolationError(StripLabError):
    """A numerically certified analytic inequality failed (exit code 4)."""


class SandwichViolated(BoundViolationError):
    """Comparison-Riccati solution left its two-sided envelope."""


class BoundViolated(BoundViolationError):
    """A decay sandwich failed or was unstable under doubling the horizon."""

    def __init__(self, message, witness=None):
        self.witness = witness
        super().__init__(message)


class SeparationViolated(BoundViolationError):
    """A separated set lost too much separation under the shadowing map."""


class ConclusionViolated(BoundViolationError):
    """The comparison lemma's conclusion failed on hypothesis-satisfying data."""
