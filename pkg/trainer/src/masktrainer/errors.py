"""Exception hierarchy for the trainer-exporter."""


class TrainerError(Exception):
    """Base class for all trainer errors."""


class ConfigError(TrainerError):
    """A training configuration or manifest value is invalid."""


class ArchiveError(TrainerError):
    """A weight archive cannot be written or read back."""


class ExportError(TrainerError):
    """Exported tensors disagree with the architecture contract."""


class FixtureError(TrainerError):
    """A parity fixture cannot be produced from the given archive and images."""
