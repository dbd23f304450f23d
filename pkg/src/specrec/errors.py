"""Exception hierarchy.

Two families matter for the CLI exit-code contract: ``UsageError`` maps to
exit status 1 (bad invocations, unparseable or incompatible inputs) and
``NumericalError`` maps to exit status 2 (degeneracies, failed consensus,
guard trips). Library code raises the specific subclasses.
"""


class SpecrecError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SpecrecError):
    """Bad invocation or malformed/incompatible input data."""


class NumericalError(SpecrecError):
    """A numerically meaningful failure: degeneracy, no consensus, guard trip."""


# -- usage / data-compatibility -------------------------------------------

class InvalidRangeError(UsageError):
    """Precondition on a numeric range violated (e.g. lambda_min >= lambda_max)."""


class GridMismatchError(UsageError):
    """Operands live on different wavelength grids."""


class ShapeMismatchError(UsageError):
    """Image, depth map, or cube dimensions disagree."""


class PatternShapeError(UsageError):
    """Pattern instance has the wrong pixel count or missing derivative data."""


class TooSmallImageError(UsageError):
    """Image too small in the differencing direction."""


class CoverageGapError(UsageError):
    """Scene regions do not tile the image exactly once."""


class InvalidDepthError(UsageError):
    """A depth model produces non-positive depth somewhere."""


class InvalidSceneError(UsageError):
    """A scene violates one of its declared invariants."""


class MissingDepthError(UsageError):
    """Cube file lacks the depth plane required by the operation."""


class UnknownDemoError(UsageError):
    """Demo name not recognized."""


class ParseError(UsageError):
    """Malformed input file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


# -- numerical failures -----------------------------------------------------

class SingularGramError(NumericalError):
    """Camera sensitivities are linearly dependent (singular Gram matrix)."""


class IllConditionedGramError(NumericalError):
    """Gram matrix condition number exceeds the configured bound."""


class TrivialComplementError(NumericalError):
    """No nonzero spectrum is invisible to the camera at tolerance."""


class OverflowGuardError(NumericalError):
    """c*z exceeds the inversion guard; exp(c*z) would amplify catastrophically."""


class DegenerateDepthsError(NumericalError):
    """Depth arguments too close to equal (or to zero) for the ratio function."""


class OutOfRangeError(NumericalError):
    """Requested ratio lies outside the attainable range of the ratio function."""


class NonPositiveRatioError(NumericalError):
    """A logarithm argument is not strictly positive."""


class NoConsensusError(NumericalError):
    """No line reaches the required support."""


class NonPhysicalError(NumericalError):
    """Fit implies a non-attenuating medium (c <= 0)."""


class TooFewEligibleError(NumericalError):
    """Fewer eligible pixels than the required support."""


class AtypicalSceneError(NumericalError):
    """No equal-depth pixel pair with distinct inherent radiance exists."""


class AllBandsDegenerateError(NumericalError):
    """Every band of an estimate is degenerate."""
