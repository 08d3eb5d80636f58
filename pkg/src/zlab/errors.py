"""Exception hierarchy shared by all zlab modules."""


class ZlabError(Exception):
    """Base class for every error raised by zlab."""


class QuadratureFailure(ZlabError):
    pass


class NonPositiveValue(ZlabError):
    pass


class ParameterOutOfRange(ZlabError):
    pass


class InvalidPolygon(ZlabError):
    pass


class NotLipschitz(ZlabError):
    pass


class DepthExhausted(ZlabError):
    def __init__(self, message, uncovered=None):
        super().__init__(message)
        self.uncovered = uncovered


class NoReflectiveCube(ZlabError):
    pass


class DegenerateCube(ZlabError):
    pass


class NotNested(ZlabError):
    pass


class EmptyFamily(ZlabError):
    pass


class ThresholdTooSmall(ZlabError):
    pass


class CoverageGap(ZlabError):
    pass


class UnknownKernel(ZlabError):
    pass


class PointTooCloseToBoundary(ZlabError):
    pass


class RatioViolated(ZlabError):
    pass


class GammaOutOfRange(ZlabError):
    pass


class ConfigError(ZlabError):
    pass


class MissingArtifact(ZlabError):
    pass
