"""Named errors with CLI exit codes."""


class AdapterError(Exception):
    exit_code = 1

    @property
    def name(self) -> str:
        return type(self).__name__


class MissingInput(AdapterError):
    """A required file is absent (exit code 2)."""

    exit_code = 2

    def __init__(self, path, what: str = "input"):
        super().__init__(f"missing {what}: {path}")


class BadManifest(AdapterError):
    """The manifest CSV does not have the expected columns."""


class BadCheckpoint(AdapterError):
    """A checkpoint file exists but cannot be interpreted."""


class DimMismatch(AdapterError):
    """A backbone emitted embeddings of the wrong width."""


class InvalidProbs(AdapterError):
    """A backbone emitted probabilities that are not a 2-class softmax."""


class ExportFailures(AdapterError):
    """One or more samples could not be exported."""

    def __init__(self, failures: list):
        self.failures = list(failures)
        shown = "; ".join(f"{sid} ({modality}): {reason}"
                          for sid, modality, reason in self.failures[:5])
        more = len(self.failures) - 5
        if more > 0:
            shown += f" and {more} more"
        super().__init__(f"{len(self.failures)} sample(s) failed: {shown}")
