"""Exception types. Each carries the CLI exit code it maps to."""


class AdvreconError(Exception):
    exit_code = 2
    kind = "error"


class ConfigError(AdvreconError, ValueError):
    exit_code = 1
    kind = "config_error"


class DataError(AdvreconError, ValueError):
    exit_code = 2
    kind = "data_error"


class FormatError(DataError):
    kind = "format_error"


class AggregationError(DataError):
    kind = "aggregation_error"


class NormalizationError(DataError):
    kind = "normalization_error"


class ContractError(AdvreconError, ValueError):
    """Input shape does not match what a network or operation expects."""

    exit_code = 2
    kind = "contract_error"


class ScoringError(DataError):
    kind = "scoring_error"


class CoverageError(ScoringError):
    kind = "coverage_error"


class TrainingError(AdvreconError, RuntimeError):
    exit_code = 3
    kind = "training_error"
