"""Exception types shared across the package."""


class RegimeSegError(Exception):
    """Base class for every error raised by this package."""


class EmptySeries(RegimeSegError):
    """A conversation series with no utterances."""


class AlreadyStandardized(RegimeSegError):
    """standardize() applied to a series whose flag is already set."""


class ChannelMismatch(RegimeSegError):
    """Observation channels do not match the model's modality set."""


class NumericalUnderflow(RegimeSegError):
    """A probability recursion produced non-finite values."""


class DegenerateInput(RegimeSegError):
    """Input too short or otherwise unusable for the requested operation."""


class EmptyStateCollapse(RegimeSegError):
    """An EM state lost all responsibility mass and re-seeding did not recover it."""


class LengthMismatch(RegimeSegError):
    """Paired sequences have different lengths."""


class ParseError(RegimeSegError):
    """A file could not be parsed in the expected format."""


class NonContiguousIndex(ParseError):
    """Utterance indices are not 0..T-1 in order."""


class InconsistentChannels(ParseError):
    """A row or entry does not carry the file's channel set."""


class NonFiniteValue(ParseError):
    """NaN or infinity encountered in an input file."""


class VersionMismatch(RegimeSegError):
    """A serialized model carries an unsupported format version."""
