from typing import Any, Optional


class FACMException(Exception):
    def __init__(self, *args: Any, detail: str = ""):
        """Base `facm` exception.

        Args:
            *args (Any): args are cast to `str` before passing to `Exception.__init__()`
            detail (str, optional): detail of the exception.
        """
        self.detail = detail
        super().__init__(*(str(arg) for arg in args if arg), detail)

    def __repr__(self) -> str:
        if self.detail:
            return f"{self.__class__.__name__} - {self.detail}"
        return self.__class__.__name__

    def __str__(self) -> str:
        return " ".join(self.args).strip()


class MissingDependencyException(FACMException, ImportError):
    """Missing optional dependency."""


class ImproperlyConfiguredException(FACMException, ValueError):
    """A configuration record, architecture or component wiring is invalid."""


class ValidationException(FACMException, ValueError):
    """Input data violates an operation's preconditions (shapes, ranges, indices)."""


class CapabilityException(FACMException, TypeError):
    """A target was asked for something it cannot provide, e.g. gradients from a
    black-box-only wrapper."""


class InternalException(FACMException, RuntimeError):
    """An internal contract was broken, e.g. a frozen module changed during fine-
    tuning."""


class NumericException(FACMException, ArithmeticError):
    """Non-finite values reached a computation that requires finite inputs."""


class CheckpointNotFoundException(FACMException, FileNotFoundError):
    """A checkpoint archive required by a stage does not exist."""


class IntegrityException(FACMException, ValueError):
    """A checkpoint archive is corrupted or its digests do not match."""


class MigrationException(FACMException, ValueError):
    """A checkpoint archive was written with an unsupported format version."""

    def __init__(self, *args: Any, found: Any, expected: Any):
        """Checkpoint format mismatch.

        Args:
            *args (Any): Passed through to `super().__init__()` - should not include `detail`.
            found (Any): format version recorded in the archive.
            expected (Any): format version this release reads.
        """
        self.found = found
        self.expected = expected
        super().__init__(
            *args, detail=f"checkpoint format version {found} cannot be read, expected {expected}; re-export it"
        )


class StageFailedException(FACMException, RuntimeError):
    def __init__(self, *args: Any, stage: str, detail: Optional[str] = None):
        """A pipeline stage aborted.

        Args:
            *args (Any): Passed through to `super().__init__()`.
            stage (str): name of the stage that failed.
            detail (str | None, optional): failure detail, defaults to the stage name.
        """
        self.stage = stage
        super().__init__(*args, detail=detail or f"stage '{stage}' failed")
