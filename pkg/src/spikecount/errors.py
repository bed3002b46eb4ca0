"""Exception hierarchy shared by all pipeline stages.

Every error carries the name of the stage that raised it so the CLI can
report where a run broke and map it onto an exit code.
"""


class SpikeCountError(Exception):
    """Base class. ``stage`` names the pipeline step that failed."""

    exit_code = 3
    default_stage = "pipeline"

    def __init__(self, message, stage=None):
        self.stage = stage or self.default_stage
        super().__init__(f"[{self.stage}] {message}")


class SolverError(SpikeCountError):
    """The eigensolver hit its sweep cap before converging."""

    default_stage = "eigensolver"

    def __init__(self, message, residual, stage=None):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})", stage)


class QuadratureError(SpikeCountError):
    default_stage = "quadrature"

    def __init__(self, message, residual, stage=None):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})", stage)


class SpecError(SpikeCountError, ValueError):
    """Invalid model or configuration input."""

    exit_code = 2
    default_stage = "spec"


class DistinctAtomsError(SpecError):
    default_stage = "moment_model"


class NotFoundError(SpikeCountError):
    """A search (e.g. for the smallest admissible order) ran past its cap."""

    default_stage = "search"


class DeconvolutionError(SpikeCountError):
    """Empirical noise characteristic function vanished at some lag."""

    default_stage = "m_hat"

    def __init__(self, message, lag, stage=None):
        self.lag = lag
        super().__init__(message, stage)


class NoAdmissiblePError(SpikeCountError):
    exit_code = 4
    default_stage = "select_p_max"


class DetectionError(SpikeCountError):
    default_stage = "detect"


class ExtractionError(SpikeCountError):
    default_stage = "extract"


class FormatError(SpikeCountError, ValueError):
    """Malformed input file. ``field`` names the offending entry, if known."""

    exit_code = 2
    default_stage = "io"

    def __init__(self, message, field=None, stage=None):
        self.field = field
        if field is not None:
            message = f"{message} (field {field!r})"
        super().__init__(message, stage)
