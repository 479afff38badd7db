"""Exception hierarchy shared by every module.

Each error has a short ``code`` used for the CLI's machine-readable output.
"""


class ProsthesisError(Exception):
    code = "error"


class ValidationError(ProsthesisError, ValueError):
    code = "validation"


class ConfigurationError(ValidationError):
    code = "configuration"


class FormatError(ValidationError):
    code = "format"


class SchemaError(ValidationError):
    code = "schema"


class WrongPhaseKindError(ValidationError):
    code = "wrong_phase_kind"


class FitError(ValidationError):
    code = "fit"


class UsageError(ValidationError):
    code = "usage"


class IntegrationDivergedError(ProsthesisError, RuntimeError):
    code = "integration_diverged"


class NoEventError(ProsthesisError, RuntimeError):
    code = "no_event"


class NoSolutionError(ProsthesisError, RuntimeError):
    code = "no_solution"


class SingularContactError(ProsthesisError, RuntimeError):
    code = "singular_contact"


class SingularImpactError(SingularContactError):
    code = "singular_impact"


class SingularDecouplingError(ProsthesisError, RuntimeError):
    code = "singular_decoupling"


class EvaluationError(ProsthesisError, RuntimeError):
    code = "evaluation"


class StuckDomainError(ProsthesisError, RuntimeError):
    code = "stuck_domain"


class AdmissibilityError(ProsthesisError, RuntimeError):
    code = "admissibility"


class FallError(ProsthesisError, RuntimeError):
    code = "fall"


class StepError(ProsthesisError, RuntimeError):
    """A hybrid step failed; carries the step index and the partial trace."""

    code = "step"

    def __init__(self, step_index, cause, trace=None):
        super().__init__(f"hybrid step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause
        self.trace = trace
        if isinstance(cause, ProsthesisError):
            self.code = cause.code
