import logging
from logging import config
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel
from typing_extensions import Literal

from facm.logging.handlers import QueueListenerHandler


class LoggingConfig(BaseModel):
    """Logging section of an experiment configuration.

    The fields are the keys of a `logging.config.dictConfig` mapping. The defaults route the `facm` logger through a
    queue listener to the console so that epoch and attack loops only enqueue records.
    """

    class Config:
        extra = "forbid"

    version: Literal[1] = 1
    """Schema version of the mapping; `dictConfig` only knows 1."""
    incremental: bool = False
    """Only adjust levels of already configured handlers and loggers."""
    disable_existing_loggers: bool = False
    """Silence loggers created before `configure` runs."""
    filters: Optional[Dict[str, Dict[str, Any]]] = None
    """Filter definitions by id."""
    formatters: Dict[str, Dict[str, Any]] = {
        "standard": {"format": "%(levelname)s - %(asctime)s - %(name)s - %(message)s"}
    }
    """Formatter definitions by id."""
    handlers: Dict[str, Dict[str, Any]] = {
        "console": {
            "class": "logging.StreamHandler",
            "level": "DEBUG",
            "formatter": "standard",
        },
        "queue_listener": {"class": "facm.logging.QueueListenerHandler", "handlers": ["cfg://handlers.console"]},
    }
    """Handler definitions by id. `queue_listener` forwards to the handlers it references."""
    loggers: Dict[str, Dict[str, Any]] = {
        "facm": {
            "level": "INFO",
            "handlers": ["queue_listener"],
            "propagate": False,
        },
    }
    """Logger definitions by name. Every module of the package logs below `facm`."""
    root: Dict[str, Union[Dict[str, Any], List[Any], str]] = {"handlers": ["console"], "level": "WARNING"}
    """Root logger definition, used by third-party libraries such as matplotlib."""

    def configure(self) -> None:
        """Applies the configuration with `logging.config.dictConfig`."""
        config.dictConfig(self.dict(exclude_none=True))

    @staticmethod
    def shutdown() -> None:
        """Stops every queue listener attached to the `facm` logger."""
        for handler in logging.getLogger("facm").handlers:
            if isinstance(handler, QueueListenerHandler):
                handler.stop()


__all__ = ["LoggingConfig", "QueueListenerHandler"]
