"""Exception hierarchy shared by every stage of the toolkit.

Each exception carries a stable ``code`` (its class name) so the command line
can print a machine-parsable error class on failure.
"""


class HarError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ZeroQuaternion(HarError, ValueError):
    pass


class SpecMismatch(HarError, ValueError):
    pass


class ShapeMismatch(HarError, ValueError):
    pass


class MissingCache(HarError, RuntimeError):
    pass


class DegenerateBatch(HarError, ValueError):
    pass


class BadConfig(HarError, ValueError):
    pass


class CorruptCheckpoint(HarError, ValueError):
    pass


class CorruptFeatureFile(HarError, ValueError):
    pass


class RaggedMatrix(HarError, ValueError):
    pass


class UnknownLabel(HarError, ValueError):
    pass


class ChannelCountMismatch(HarError, ValueError):
    pass


class BadSpec(HarError, ValueError):
    pass


class ClassTooSmall(HarError, ValueError):
    pass
