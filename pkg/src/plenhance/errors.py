"""Exception hierarchy shared by the whole package.

Every error raised on purpose derives from PLEError so callers (and the CLI)
can catch one base class and map it to a diagnostic + exit code.
"""


class PLEError(Exception):
    """Base class for all errors raised by plenhance."""


# -- cross-type validation -------------------------------------------------

class DimensionMismatch(PLEError):
    """Paired containers disagree on a size (point/label count, image dims)."""


class NonFinite(PLEError):
    """A coordinate or matrix entry is NaN or infinite."""


class BadLabel(PLEError):
    """A class id is outside [-1, num_classes)."""


class BadShape(PLEError):
    """An array or field has the wrong rank/size."""


# -- file formats ------------------------------------------------------------

class BadMagic(PLEError):
    """File does not start with the expected magic bytes."""


class BadVersion(PLEError):
    """Unsupported format version."""


class TruncatedFile(PLEError):
    """Payload shorter (or longer) than the header promises."""


class MalformedFile(PLEError):
    """Structured-text document is unparseable or missing required fields."""


class RleSumMismatch(PLEError):
    """Run lengths do not sum to height*width."""


class AreaMismatch(PLEError):
    """Stored mask area differs from the decoded bitmap popcount."""


class DuplicateId(PLEError):
    """Two masks in one set share an id."""


class UnknownField(PLEError):
    """Strict parser met a field it does not know."""


class OutOfRange(PLEError):
    """A value is outside its documented domain."""


# -- algorithm preconditions -------------------------------------------------

class EmptySet(PLEError):
    """A set-valued argument that must be nonempty is empty."""


class ZeroDenominator(PLEError):
    """A ratio is requested over an empty population."""


class ZeroBaseline(PLEError):
    """Increment requested against a baseline with zero correct labels."""


class InfeasibleSpec(PLEError):
    """Synthetic scene spec cannot produce a valid scene."""
