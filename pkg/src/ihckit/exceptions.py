"""Domain exceptions shared across ihckit modules."""


class IHCKitError(Exception):
    """Base class for all ihckit domain errors."""


class UnknownLabel(IHCKitError):
    def __init__(self, task, raw):
        self.task = task
        self.raw = raw
        super().__init__(f"unknown label {raw!r} for task {task}")


class UnknownTissue(IHCKitError):
    def __init__(self, raw):
        self.raw = raw
        super().__init__(f"tissue name {raw!r} is not mappable by rule or table")


class MissingField(IHCKitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"required field {name!r} is missing or empty")


class LabelLeakage(IHCKitError):
    """A generated caption would expose a target-label vocabulary word."""


class ConflictingLabels(IHCKitError):
    def __init__(self, md5, detail=""):
        self.md5 = md5
        super().__init__(f"duplicate records for {md5} disagree on task labels {detail}".rstrip())


class EmptyForeground(IHCKitError):
    """No pixel exceeded the foreground threshold."""


class ShardIO(IHCKitError):
    """Filesystem failure while reading or writing shards."""


class SchemaError(IHCKitError):
    """Malformed or missing metadata encountered while reading shards."""


class StratumTooSmall(IHCKitError):
    def __init__(self, stratum):
        self.stratum = stratum
        super().__init__(f"stratum {stratum!r} cannot contribute its test share without emptying its training side")


class DimensionMismatch(IHCKitError):
    pass


class EncoderUnavailable(IHCKitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"no encoder backend registered under {name!r}")


class UnknownCellType(IHCKitError):
    def __init__(self, index, size):
        super().__init__(f"cell-type index {index} out of range for vocabulary of size {size}")


class EmptyInput(IHCKitError):
    pass


class LengthMismatch(IHCKitError):
    pass


class IndexOutOfRange(IHCKitError):
    pass


class NonOrdinalTask(IHCKitError):
    def __init__(self, task):
        self.task = task
        super().__init__(f"task {task} has no ordinal ranks")


class DegenerateInput(IHCKitError):
    """Statistic undefined for this input (e.g. zero-variance differences)."""


class BadLevel(IHCKitError):
    def __init__(self, level):
        self.level = level
        super().__init__(f"perturbation level must be in 1..4, got {level!r}")


class MissingLabel(IHCKitError):
    def __init__(self, task):
        self.task = task
        super().__init__(f"no label supplied for task {task}")


class DataError(IHCKitError):
    """Malformed record encountered in a training/inference stream."""


class VocabularyMismatch(IHCKitError):
    """Checkpoint was trained against different vocabularies."""


class UnknownRater(IHCKitError):
    """No such rater on the roster, or no such session token."""


class StudyComplete(IHCKitError):
    """Every image has been fully annotated by this rater."""


class PhaseOrderViolation(IHCKitError):
    """A review-phase action was attempted before the initial annotation."""


class DuplicateSubmission(IHCKitError):
    """An annotation for this (rater, image, phase) already exists."""


class InsufficientRaters(IHCKitError):
    pass


class UnknownAssignment(IHCKitError):
    """No assignment, study, or image under the requested identifier."""


class UsageError(IHCKitError):
    """Bad command-line arguments or config (exit code 2)."""


class NotFitted(IHCKitError):
    """Estimator method that needs a fitted model was called before fit."""
