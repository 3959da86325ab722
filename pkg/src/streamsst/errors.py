"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class StreamSSTError(Exception):
    code = "error"


class ConfigError(StreamSSTError, ValueError):
    code = "config_error"


class CapacityError(StreamSSTError, ValueError):
    code = "capacity_error"


class ShapeError(StreamSSTError, ValueError):
    code = "shape_error"


class MaskError(StreamSSTError, ValueError):
    code = "mask_error"


class StreamDiscontinuityError(StreamSSTError):
    code = "stream_discontinuity"


class ProtocolError(StreamSSTError):
    code = "protocol_error"


class AlignmentError(StreamSSTError, ValueError):
    code = "alignment_error"


class SegmentationError(StreamSSTError, ValueError):
    code = "segmentation_error"


class InvariantViolation(StreamSSTError):
    code = "invariant_violation"
