"""Exception hierarchy. Every error carries a short machine-readable code used by the CLI."""


class MitiplanError(Exception):
    code = "ERROR"


class ParseError(MitiplanError):
    code = "PARSE_ERROR"


class ValidationError(MitiplanError):
    code = "VALIDATION_ERROR"


class ConfigError(MitiplanError):
    code = "CONFIG_ERROR"


class DomainError(MitiplanError, ValueError):
    code = "DOMAIN_ERROR"


class UndefinedMaturityError(DomainError):
    code = "UNDEFINED_MATURITY"


class CycleError(MitiplanError):
    code = "CYCLE_ERROR"

    def __init__(self, source: str, target: str):
        super().__init__(f"cycle detected at back-edge {source} -> {target}")
        self.back_edge = (source, target)


class CorpusError(MitiplanError):
    code = "CORPUS_ERROR"


class FeasibilityError(MitiplanError):
    code = "INFEASIBLE"

    def __init__(self, total_cost: float, budget: float):
        super().__init__(
            f"portfolio cost {total_cost:.4f} exceeds budget {budget:.4f} by {total_cost - budget:.4f}"
        )
        self.overflow = total_cost - budget


class StateError(MitiplanError):
    code = "STATE_ERROR"


class RestoreError(MitiplanError):
    code = "RESTORE_ERROR"


class TrainingDivergence(MitiplanError):
    code = "TRAINING_DIVERGED"


class EvaluationError(MitiplanError):
    code = "EVALUATION_ERROR"


class ArtifactError(MitiplanError):
    code = "MISSING_ARTIFACT"
