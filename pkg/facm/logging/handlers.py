import atexit
from logging.handlers import QueueHandler, QueueListener
from queue import Queue
from typing import Any, List, Optional


class QueueListenerHandler(QueueHandler):
    """Queue handler that owns the listener draining it.

    Training and attack loops emit many records from tight loops; the records are
    enqueued and written by the listener thread so console I/O never stalls a batch.
    """

    def __init__(self, handlers: List[Any], respect_handler_level: bool = False, queue: Optional[Queue] = None):
        """Configures queue listener and handler.

        Args:
            handlers (list): handlers (or `cfg://` references resolved by `dictConfig`) that receive the records.
            respect_handler_level (bool): A handler’s level is respected (compared with the level for the message) when
                deciding whether to pass messages to that handler.
            queue (Queue | None): queue to use, a fresh unbounded queue by default.
        """
        super().__init__(queue if queue is not None else Queue(-1))
        self.handlers = resolve_handlers(handlers)
        self._listener: QueueListener = QueueListener(
            self.queue, *self.handlers, respect_handler_level=respect_handler_level
        )
        self._listener.start()
        atexit.register(self.stop)

    def stop(self) -> None:
        """Flushes pending records and stops the listener thread.

        Safe to call more than once.
        """
        if self._listener._thread is not None:  # pylint: disable=protected-access
            self._listener.stop()

    def close(self) -> None:
        self.stop()
        super().close()


def resolve_handlers(handlers: List[Any]) -> List[Any]:
    """Converts list of string of handlers to the object of respective handler.

    Indexing the list performs the evaluation of the object.
    """
    return [handlers[i] for i in range(len(handlers))]
