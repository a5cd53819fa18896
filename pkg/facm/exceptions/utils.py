import traceback
from typing import Any, Dict, Optional

from pydantic import BaseModel

from .exceptions import FACMException, StageFailedException

__all__ = ["create_exception_record"]


class ExceptionRecordContent(BaseModel):
    detail: Optional[str] = None
    exception: str
    stage: Optional[str] = None
    cause: Optional[str] = None
    traceback: Optional[str] = None


def create_exception_record(exc: Exception, include_traceback: bool = False) -> Dict[str, Any]:
    """Constructs a serializable record from an exception.

    For instances of `facm.exceptions.FACMException` the detail is drawn from the exception, otherwise the `repr` of
    the exception is used. A `StageFailedException` additionally records its stage and the exception it was raised
    from.

    Args:
        exc (Exception): Any exception.
        include_traceback (bool): add the formatted traceback to the record.

    Returns:
        dict: record suitable for `failure.json`.
    """
    if isinstance(exc, FACMException):
        content = ExceptionRecordContent(detail=exc.detail, exception=exc.__class__.__name__)
        if isinstance(exc, StageFailedException):
            content.stage = exc.stage
            if exc.__cause__ is not None:
                content.cause = repr(exc.__cause__)
    else:
        content = ExceptionRecordContent(detail=repr(exc), exception=exc.__class__.__name__)
    if include_traceback:
        content.traceback = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
    return content.dict(exclude_none=True)
