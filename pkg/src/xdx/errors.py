"""Exception hierarchy for the package.

Every error carries a short machine-readable ``code`` used by the CLI for
its ``error[<CODE>]:`` prefix.
"""


class XdxError(Exception):
    code = "ERROR"


# --- corpus ---------------------------------------------------------------

class MissingColumnError(XdxError):
    code = "MISSING_COLUMN"

    def __init__(self, column: str):
        super().__init__(f"required column missing: {column!r}")
        self.column = column


class UnparsableLabelError(XdxError):
    code = "UNPARSABLE_LABEL"

    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: cannot parse label {value!r} (expected real/0 or fake/1)")
        self.row = row
        self.value = value


class EmptyCorpusError(XdxError):
    code = "EMPTY_CORPUS"


class InsufficientSamplesError(XdxError):
    code = "INSUFFICIENT_SAMPLES"


class DomainLeakageError(XdxError):
    code = "DOMAIN_LEAKAGE"


# --- classifier -----------------------------------------------------------

class SingleClassTrainSetError(XdxError):
    code = "SINGLE_CLASS_TRAIN_SET"


class NonFiniteLossError(XdxError):
    code = "NON_FINITE_LOSS"

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class TransportError(XdxError):
    code = "TRANSPORT"


class MalformedResponseError(XdxError):
    code = "MALFORMED_RESPONSE"


class InvariantViolationError(XdxError):
    code = "INVARIANT_VIOLATION"


class VersionMismatchError(XdxError):
    code = "VERSION_MISMATCH"


class CorruptFileError(XdxError):
    code = "CORRUPT_FILE"


# --- perturbation / explainers ---------------------------------------------

class NoContentTokensError(XdxError):
    code = "NO_CONTENT_TOKENS"


class MaskLengthMismatchError(XdxError):
    code = "MASK_LENGTH_MISMATCH"


class DegenerateDesignError(XdxError):
    code = "DEGENERATE_DESIGN"


class PredictorFailureError(XdxError):
    code = "PREDICTOR_FAILURE"


class DimensionTooLargeError(XdxError):
    code = "DIMENSION_TOO_LARGE"


class OutOfRangeError(XdxError):
    code = "OUT_OF_RANGE"


# --- metrics ----------------------------------------------------------------

class LengthMismatchError(XdxError):
    code = "LENGTH_MISMATCH"


class EmptyInputError(XdxError):
    code = "EMPTY_INPUT"


class SingleClassError(XdxError):
    code = "SINGLE_CLASS"


class InconsistentCountsError(XdxError):
    code = "INCONSISTENT_COUNTS"
