"""Exception hierarchy. The CLI maps ConfigError to exit 2 and DataError to exit 3."""


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


class IngestError(DataError):
    pass


class SchemaError(DataError):
    pass


class MetaGraphError(DataError):
    """Malformed or out-of-space meta graph."""


class CardinalityError(ValueError):
    """Refusal to enumerate a space larger than the caller's cap."""

    def __init__(self, cardinality, cap):
        self.cardinality = cardinality
        self.cap = cap
        super().__init__(f"{cardinality} meta graphs (cap exceeded: cap={cap})")


class StaleTraceError(RuntimeError):
    pass
