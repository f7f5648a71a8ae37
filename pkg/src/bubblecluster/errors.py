"""Exception hierarchy shared by the geometry, catalogue, variation and flow code."""


class BubbleError(Exception):
    """Base class for every error raised by this package."""


class MeshError(BubbleError):
    """Invalid mesh topology or geometry."""


class OpenSurface(MeshError):
    """A region boundary has boundary edges, so it does not enclose a volume."""


class OrientationError(MeshError):
    """Face orientations of a region boundary are inconsistent."""


class InvalidValence(MeshError):
    """An edge is incident to a number of faces that a cluster cannot produce."""


class DegenerateTriangle(MeshError):
    def __init__(self, face: int, message: str | None = None):
        self.face = int(face)
        super().__init__(message or f"face {face} has zero area")


class MeshingError(MeshError):
    """Patch triangulation failed to reproduce its prescribed boundary."""


class MeshDegeneracy(MeshError):
    """The flow produced a mesh that remeshing could not repair."""


class SpecError(BubbleError):
    """A configuration file is malformed or inconsistent."""


class NonPositiveVolume(SpecError):
    pass


class NonEqualVolumes(SpecError):
    pass


class ResolutionTooCoarse(SpecError):
    pass


class OverlapError(BubbleError):
    """Requested placement makes region interiors overlap."""


class TangencyOnInterface(BubbleError):
    """Requested tangency point lies on an interface plane."""


class VolumeOutOfRange(BubbleError):
    def __init__(self, message: str, feasible: dict[str, tuple[float, float]] | None = None):
        self.feasible = dict(feasible or {})
        super().__init__(message)


class BranchAmbiguity(BubbleError):
    def __init__(self, message: str, branches: list[str] | None = None):
        self.branches = list(branches or [])
        super().__init__(message)


class IntegrationFailure(BubbleError):
    pass


class PinchOff(IntegrationFailure):
    """Profile radius reached zero inside the requested arclength span."""


class RankDeficient(BubbleError):
    pass


class NonConvergence(BubbleError):
    pass


class NonConvexInput(BubbleError):
    pass


class CurvatureUnavailable(BubbleError):
    pass


class ConvexityViolation(NonConvexInput):
    pass


class UnsupportedK(BubbleError):
    pass
