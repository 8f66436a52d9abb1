"""Exception hierarchy shared across the package."""


class SGraphError(Exception):
    """Base class for every error raised by msgraph."""


class ValidationError(SGraphError):
    """Bad user input (files, configs, arguments)."""


class GeometryError(SGraphError):
    pass


class DegenerateFit(GeometryError):
    pass


class PoleSingularity(GeometryError):
    pass


class NotParallel(GeometryError):
    pass


class NotPerpendicular(GeometryError):
    pass


class DegenerateGap(GeometryError):
    pass


class GraphError(SGraphError):
    pass


class KindMismatch(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class BadInformationMatrix(GraphError):
    pass


class NoGaugeFixed(GraphError):
    pass


class LinearSolveFailed(GraphError):
    pass


class UnknownKeyframe(GraphError):
    pass


class ParseError(ValidationError):
    pass


class InvalidTopology(ValidationError):
    pass


class InvalidScene(ValidationError):
    pass


class UnknownTemplate(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DegenerateAlignment(SGraphError):
    pass


class EmptyAssociation(SGraphError):
    pass
