"""Exception hierarchy shared by every stage of a benchmark setup."""


class HardnessBenchError(Exception):
    """Base class for all toolkit errors."""


class DatasetError(HardnessBenchError):
    """Invalid dataset construction, loading or splitting."""


class HardnessError(HardnessBenchError):
    """Invalid hardness recipe or perturbation input."""


class TrainingError(HardnessBenchError):
    """Invalid model or training configuration."""


class TrainingDivergedError(TrainingError):
    """A mini-batch produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"Non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


class ScoringError(HardnessBenchError):
    """A hardness scorer could not be computed."""


class EvaluationError(HardnessBenchError):
    """Detection metrics or rank statistics are undefined for the input."""


class NoPositivesError(EvaluationError):
    """The flag vector has no positives or no negatives."""


class ConfigError(HardnessBenchError):
    """Invalid configuration file, manifest or CLI override."""
