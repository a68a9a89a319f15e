"""Package logger.

Call sites log through the shared ``logger`` and attach structured context
with ``extra={...}``; ``setup_logging`` renders that context after the message.
"""

import logging
import sys

logger = logging.getLogger("crossl")

# Attributes every LogRecord carries; anything else arrived through ``extra``.
_RESERVED = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class ContextFormatter(logging.Formatter):
    """Formatter that appends ``extra`` fields as ``key=value`` pairs."""

    def format(self, record: logging.LogRecord) -> str:
        base = super().format(record)
        context = {k: v for k, v in vars(record).items() if k not in _RESERVED}
        if not context:
            return base
        rendered = " ".join(f"{key}={value}" for key, value in sorted(context.items()))
        return f"{base} [{rendered}]"


def setup_logging(level: str = "INFO") -> None:
    """
    Install a single stderr handler on the package logger.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ContextFormatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
