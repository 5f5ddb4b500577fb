"""Engine error hierarchy.  Every structured failure raises one of these."""


class MotionEditError(Exception):
    """Base class for all engine errors."""

    code = "engine_error"


class SkeletonError(MotionEditError):
    code = "skeleton_invalid"


class MotionValidationError(MotionEditError):
    code = "motion_invalid"


class DimensionMismatchError(MotionEditError):
    code = "dimension_mismatch"


class MaskError(MotionEditError):
    code = "mask_invalid"


class DegenerateGeometryError(MotionEditError):
    code = "degenerate_geometry"


class DatasetError(MotionEditError):
    code = "dataset_invalid"


class ScheduleError(MotionEditError):
    code = "schedule_invalid"


class SamplingError(MotionEditError):
    code = "sampling_failed"


class TrainingError(MotionEditError):
    code = "training_failed"


class FileFormatError(MotionEditError):
    """Raised on malformed, truncated, or foreign motion files."""

    code = "file_malformed"

    def __init__(self, message: str, code: str = "file_malformed"):
        super().__init__(message)
        self.code = code
