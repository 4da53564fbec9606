"""
Structured JSON logging for virl.

Logs go to stderr: stdout carries command results and, under ``virl serve``,
the stdio transport's JSON-RPC messages.
"""

import json
import logging
import os
import sys

# Attributes every LogRecord has; anything else arrived through ``extra=``
_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


class JsonFormatter(logging.Formatter):
    """Formatter that outputs logs as JSON."""

    def format(self, record: logging.LogRecord) -> str:
        log_obj = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        if record.exc_info:
            log_obj["exception"] = self.formatException(record.exc_info)

        extra = {k: v for k, v in vars(record).items() if k not in _RESERVED}
        if extra:
            log_obj["extra"] = extra

        return json.dumps(log_obj, default=str)


def setup_json_logging(level: str | None = None) -> None:
    """
    Configure structured JSON logging to stderr.

    Log level comes from ``level`` or the VIRL_LOG_LEVEL environment variable,
    INFO if neither is set.
    """
    log_level = (level or os.environ.get("VIRL_LOG_LEVEL", "INFO")).upper()

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())

    root_logger = logging.getLogger()
    root_logger.handlers.clear()
    root_logger.addHandler(handler)
    root_logger.setLevel(getattr(logging, log_level, logging.INFO))
