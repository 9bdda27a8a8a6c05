"""Exception hierarchy shared by all replan_kit modules."""


class ReplanKitError(Exception):
    """Base class for every error raised by this package."""


class MapFormatError(ReplanKitError, ValueError):
    """A map file or JSON costmap could not be parsed."""


class DimensionMismatchError(ReplanKitError, ValueError):
    """Two costmaps were compared but differ in size or resolution."""


class PlanningError(ReplanKitError):
    """Base class for failures of a planning query."""


class InvalidEndpointError(PlanningError, ValueError):
    """Start or goal is out of bounds or lethal."""


class UnreachableGoalError(PlanningError):
    """No traversable path connects start and goal."""


class InternalInconsistencyError(ReplanKitError, RuntimeError):
    """Search state violated an internal invariant. Indicates a bug."""


class ScenarioError(ReplanKitError):
    """A scenario file is invalid or a scripted event cannot be applied."""
