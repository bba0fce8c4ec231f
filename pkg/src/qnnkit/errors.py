"""Exception types shared across the kernel library."""


class ContractError(ValueError):
    """A caller broke an operation's precondition (shape, length, ordering)."""


class GeometryError(ContractError):
    """Layer geometry rejected, e.g. the accumulator cannot hold the dot product."""


class ThresholdRangeError(ContractError):
    """A staircase threshold does not fit the INT-16 accumulator domain."""


class UnsupportedParameterError(ContractError):
    """Parameters outside the supported envelope (e.g. non-positive BN gamma)."""


class LayerExecutionError(RuntimeError):
    """A parallel worker failed while executing a layer."""


class ModelFormatError(ValueError):
    """A model blob failed to parse or validate."""

    def __init__(self, message, offset=None, layer=None):
        where = []
        if layer is not None:
            where.append(f"layer {layer}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.layer = layer
