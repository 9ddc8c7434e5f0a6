"""Exception hierarchy shared by all geokit modules."""


class GeoKitError(Exception):
    """Base class for geokit errors."""


class DimensionError(GeoKitError, ValueError):
    pass


class LeftChartError(GeoKitError):
    """A point left the chart domain or the metric stopped being positive definite."""


class PropernessError(GeoKitError):
    """Force field too strong for the self-propulsion speed (Randers metric not proper)."""


class SingularBlockError(GeoKitError):
    pass


class DivergedError(GeoKitError):
    pass


class NotConvergedError(GeoKitError):
    pass


class QuadratureError(GeoKitError):
    def __init__(self, message, abserr=None):
        super().__init__(message)
        self.abserr = abserr


class UnknownFamily(GeoKitError, KeyError):
    pass
