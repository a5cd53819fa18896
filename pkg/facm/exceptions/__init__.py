# flake8: noqa
from .exceptions import (
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
)
from .utils import create_exception_record

__all__ = [
    "CapabilityException",
    "CheckpointNotFoundException",
    "FACMException",
    "ImproperlyConfiguredException",
    "IntegrityException",
    "InternalException",
    "MigrationException",
    "MissingDependencyException",
    "NumericException",
    "StageFailedException",
    "ValidationException",
    "create_exception_record",
    "utils",
]
