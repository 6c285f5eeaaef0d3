"""Exception hierarchy and the process exit-code contract.

Exit codes are fixed so the CLI stays scriptable:
0 success, 1 pipeline failure, 2 configuration error, 3 internal error.
"""

EXIT_OK = 0
EXIT_PIPELINE_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_INTERNAL_ERROR = 3


class CblPipeError(Exception):
    """Base class; ``exit_code`` drives the CLI exit status."""

    exit_code = EXIT_INTERNAL_ERROR


class InternalError(CblPipeError):
    """Unexpected fault inside the engine, wrapped for the exit-code contract."""


class SessionClosedError(CblPipeError):
    """Operation attempted on a closed mainframe session (a caller bug)."""


# --- configuration problems (exit 2) ---------------------------------------

class ConfigError(CblPipeError):
    exit_code = EXIT_CONFIG_ERROR


class ParseError(ConfigError):
    """Malformed configuration or recipe input; message carries a location."""


class ValidationError(ConfigError):
    """Structurally valid input violating one or more field constraints."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class MissingImageError(ConfigError):
    """Workflow emission requested without a configured container image."""


class UnpinnedDependencyError(ConfigError):
    """Dependency or base image carries a floating version."""


class UnboundPlaceholderError(ConfigError):
    """Command template names placeholders with no credential binding."""

    def __init__(self, message, names=None):
        super().__init__(message)
        self.names = list(names or [])


class MissingEnvVarError(ConfigError):
    """A bound credential environment variable is absent from the environment."""


class AuthFailureError(ConfigError):
    """Mainframe credential environment variable is not set."""


class StoreMissingError(ConfigError):
    """A configured store root directory does not exist."""


class RecipeParseError(ConfigError):
    """Container recipe text falls outside the supported instruction subset."""


class ZeroBaselineError(ValidationError):
    """Benchmark comparison against a zero-mean baseline."""


# --- pipeline failures (exit 1) ---------------------------------------------

class PipelineFailure(CblPipeError):
    exit_code = EXIT_PIPELINE_FAILURE


class PipelineHalt(PipelineFailure):
    """Raised after an error-level status event; terminates the run."""


class SpawnFailureError(PipelineFailure):
    """Child process could not be started (distinct from a nonzero exit)."""


class TimeoutExceededError(PipelineFailure):
    """Child exceeded its timeout and was killed."""


class MetadataUnavailableError(PipelineFailure):
    """Neither CI environment keys nor a repository can supply build metadata."""


class MalformedCopyError(PipelineFailure):
    """COPY directive without a terminating period or outside the grammar."""


class CopybookNotFoundError(PipelineFailure):
    def __init__(self, book, requester):
        super().__init__(f"copybook {book} not found (referenced by {requester})")
        self.book = book
        self.requester = requester


class CopyCycleError(PipelineFailure):
    def __init__(self, path):
        super().__init__("copybook inclusion cycle: " + " -> ".join(path))
        self.path = list(path)


class DepthExceededError(PipelineFailure):
    """Copybook nesting deeper than the configured limit."""


class MemberNotFoundError(PipelineFailure):
    """Requested dataset member is absent from the store."""


class IoFailureError(PipelineFailure):
    """Dataset member could not be written."""
