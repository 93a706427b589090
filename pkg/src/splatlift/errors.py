"""Exception hierarchy. The class name doubles as the machine-readable error kind."""


class SplatLiftError(Exception):
    @property
    def kind(self) -> str:
        return type(self).__name__


# geometry
class DegenerateDepth(SplatLiftError, ValueError):
    """Point at or behind the camera plane; callers cull these."""


class SingularCovariance(SplatLiftError, ArithmeticError):
    pass


class InvalidCamera(SplatLiftError, ValueError):
    pass


class InvalidSplat(SplatLiftError, ValueError):
    pass


# file formats
class IoFailure(SplatLiftError, OSError):
    pass


class MissingFile(IoFailure):
    pass


class MalformedHeader(SplatLiftError, ValueError):
    pass


class TruncatedBody(SplatLiftError, ValueError):
    pass


class UnsupportedEncoding(SplatLiftError, ValueError):
    pass


class UnsupportedCameraModel(SplatLiftError, ValueError):
    pass


class MalformedRecord(SplatLiftError, ValueError):
    pass


class ViewNotFound(SplatLiftError, LookupError):
    pass


class AmbiguousName(SplatLiftError, LookupError):
    pass


# masks, hulls, metrics
class DegeneratePolygon(SplatLiftError, ValueError):
    pass


class DegenerateInput(SplatLiftError, ValueError):
    pass


class DimensionMismatch(SplatLiftError, ValueError):
    pass


class InvalidSpec(SplatLiftError, ValueError):
    pass


# cli
class InvalidConfig(SplatLiftError, ValueError):
    pass


class UsageError(SplatLiftError, ValueError):
    pass
