"""Exception hierarchy shared by every stage of the toolkit."""


class StereoTwinError(ValueError):
    """Base class for all processing errors raised by the toolkit."""


class PointBehindCameraError(StereoTwinError):
    pass


class DegenerateConfigurationError(StereoTwinError):
    pass


class InsufficientPointsError(DegenerateConfigurationError):
    pass


class InsufficientViewsError(StereoTwinError):
    pass


class SingularTransformError(StereoTwinError):
    """A homography or warp matrix could not be inverted."""


class ZeroBaselineError(StereoTwinError):
    pass


class NonPositiveDisparityError(StereoTwinError):
    pass


class DimensionMismatchError(StereoTwinError):
    pass


class InvalidRangeError(StereoTwinError):
    pass


class EmptyInputError(StereoTwinError):
    pass


class UndefinedPercentError(StereoTwinError):
    """Percent error requested against a zero reference with a non-zero measurement."""
