"""Exception types shared across the simulator."""


class FelsimError(Exception):
    """Base class for all felsim-specific errors."""


class InvalidConfigError(FelsimError):
    """A configuration value violates its contract."""


class ShapeMismatchError(FelsimError):
    """An array or parameter vector has the wrong dimensions."""


class NumericError(FelsimError):
    """Non-finite values where finite ones are required."""


class SchemaError(FelsimError):
    """A file or record does not match the declared schema."""


class IncompleteFeatureError(FelsimError):
    """One or more users lack a static feature needed for clustering."""

    def __init__(self, feature_name, user_ids):
        self.feature_name = feature_name
        self.user_ids = list(user_ids)
        shown = ", ".join(str(u) for u in self.user_ids[:10])
        more = "" if len(self.user_ids) <= 10 else f" (+{len(self.user_ids) - 10} more)"
        super().__init__(f"feature {feature_name!r} missing for users: {shown}{more}")


class UndefinedMetricError(FelsimError):
    """The metric is undefined for this input (e.g. single-class AUC)."""


class InvalidLedgerError(FelsimError):
    """A privacy ledger violates its regime invariants."""


class CheckpointError(FelsimError):
    """A checkpoint file is corrupt or has an unsupported format."""


class ConfigError(FelsimError):
    """An experiment config file cannot be parsed."""
