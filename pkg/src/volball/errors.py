"""Exception types raised across the package."""


class VolballError(Exception):
    """Base class for all package errors."""


class MalformedFile(VolballError):
    pass


class DegenerateTet(VolballError):
    pass


class NonManifoldBoundary(VolballError):
    pass


class DisconnectedBoundary(VolballError):
    pass


class DegenerateImageTet(VolballError):
    """An image tetrahedron collapsed to zero volume."""


class ZeroImageVolume(VolballError):
    pass


class RankDeficientCloud(VolballError):
    pass


class InitFailure(VolballError):
    """Spherical boundary initialization produced flipped triangles."""

    def __init__(self, message, flipped=0):
        super().__init__(message)
        self.flipped = flipped


class SingularSystem(VolballError):
    pass


class NotPositiveDefinite(VolballError):
    pass


class LineSearchFailure(VolballError):
    pass


class RankDeficient(VolballError):
    pass


class LocationFailure(VolballError):
    def __init__(self, message, vertices=()):
        super().__init__(message)
        self.vertices = list(vertices)


class NondecreasingDiagnostic(UserWarning):
    """Fixed-point warm start failed to decrease the energy (warning only)."""
