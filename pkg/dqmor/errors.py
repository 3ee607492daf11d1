"""
Exception types shared across DQMOR modules.

Every domain failure derives from DqmorError so the CLI can turn it into a
single-line diagnostic and exit code 1.
"""


class DqmorError(Exception):
    pass


class InvalidArgumentError(DqmorError, ValueError):
    pass


class DegenerateEncodingError(DqmorError):
    pass


class OracleTooLargeError(DqmorError):
    pass


class CheckTooLargeError(DqmorError):
    pass


class TrainingDivergedError(DqmorError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class DatasetParseError(DqmorError):
    def __init__(self, message: str, lines=()):
        self.lines = tuple(lines)
        if self.lines:
            where = ", ".join(str(n) for n in self.lines)
            label = "line" if len(self.lines) == 1 else "lines"
            message = f"{label} {where}: {message}"
        super().__init__(message)


class CheckpointError(DqmorError):
    pass


class DegenerateMeasurementWarning(UserWarning):
    """State carries no weight on the model's support; posterior fell back to uniform."""
