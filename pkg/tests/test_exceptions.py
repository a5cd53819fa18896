from typing import Optional

import orjson
from hypothesis import given
from hypothesis import strategies as st

from facm.exceptions import (
    CapabilityException,
    CheckpointNotFoundException,
    FACMException,
    ImproperlyConfiguredException,
    IntegrityException,
    InternalException,
    MigrationException,
    MissingDependencyException,
    NumericException,
    StageFailedException,
    ValidationException,
    utils,
)


@given(detail=st.one_of(st.none(), st.text()))
def test_facm_exception_repr(detail: Optional[str]) -> None:
    result = FACMException(detail=detail)  # type: ignore
    assert result.detail == detail
    if detail:
        assert result.__repr__() == f"{result.__class__.__name__} - {result.detail}"
    else:
        assert result.__repr__() == result.__class__.__name__


def test_facm_exception_str() -> None:
    result = FACMException("an unknown exception occurred")
    assert str(result) == "an unknown exception occurred"

    result = FACMException(detail="an unknown exception occurred")
    assert str(result) == "an unknown exception occurred"

    result = FACMException(3, detail="an unknown exception occurred")
    assert str(result) == "3 an unknown exception occurred"


def test_builtin_bases() -> None:
    assert isinstance(ImproperlyConfiguredException(), ValueError)
    assert isinstance(ValidationException(), ValueError)
    assert isinstance(CapabilityException(), TypeError)
    assert isinstance(InternalException(), RuntimeError)
    assert isinstance(NumericException(), ArithmeticError)
    assert isinstance(CheckpointNotFoundException(detail="missing"), FileNotFoundError)
    assert isinstance(IntegrityException(), ValueError)
    assert isinstance(MissingDependencyException("matplotlib"), ImportError)
    assert isinstance(StageFailedException(stage="fa"), RuntimeError)


def test_migration_exception() -> None:
    result = MigrationException(found=0, expected=1)
    assert isinstance(result, ValueError)
    assert result.found == 0
    assert result.expected == 1
    assert "version 0" in result.detail


@given(stage=st.sampled_from(["backbone", "fa", "cmpd", "decision"]))
def test_stage_failed_exception_default_detail(stage: str) -> None:
    result = StageFailedException(stage=stage)
    assert result.stage == stage
    assert result.detail == f"stage '{stage}' failed"


def test_create_exception_record_facm_exception() -> None:
    record = utils.create_exception_record(ValidationException(detail="bad shape"))
    assert record == {"detail": "bad shape", "exception": "ValidationException"}


def test_create_exception_record_stage_failure() -> None:
    try:
        try:
            raise ValueError("boom")
        except ValueError as e:
            raise StageFailedException(stage="cmpd", detail="stage 'cmpd' failed: boom") from e
    except StageFailedException as failure:
        record = utils.create_exception_record(failure, include_traceback=True)
    assert record["stage"] == "cmpd"
    assert record["cause"] == "ValueError('boom')"
    assert "Traceback" in record["traceback"]
    assert orjson.loads(orjson.dumps(record)) == record


def test_create_exception_record_other_exception() -> None:
    record = utils.create_exception_record(KeyError("x"))
    assert record == {"detail": "KeyError('x')", "exception": "KeyError"}
