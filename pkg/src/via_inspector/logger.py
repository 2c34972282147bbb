"""Logger module with colored output on the error stream for CLI diagnostics."""

import inspect
import logging
import sys

from via_inspector.settings import InspectionSettings


COLOR_MAP = {
    "DEBUG": "\033[36m",  # Cyan
    "INFO": "\033[32m",  # Green
    "WARNING": "\033[33m",  # Yellow
    "ERROR": "\033[31m",  # Red
    "CRITICAL": "\033[41m",  # Red background
}
RESET_COLOR = "\033[0m"


class ColoredFormatter(logging.Formatter):
    """Logging formatter adding color and the emitting file, class and function."""

    def __init__(self, use_color: bool = True):
        """
        Initialize the formatter.

        Parameters
        ----------
        use_color : bool
            Emit ANSI color codes. Disabled when the stream is not a terminal.

        """
        super().__init__()
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        """Format log record with color and metadata."""
        color = COLOR_MAP.get(record.levelname, "") if self.use_color else ""
        reset = RESET_COLOR if color else ""
        timestamp = self.formatTime(record, datefmt="%Y-%m-%d %H:%M:%S")
        file_name = record.pathname.split("/")[-1]
        cls_name = None
        try:
            frame = inspect.currentframe()
            while frame:
                if frame.f_code.co_name == record.funcName:
                    if "self" in frame.f_locals:
                        cls_name = frame.f_locals["self"].__class__.__name__
                    break
                frame = frame.f_back
        except Exception:
            cls_name = None
        location = f"{file_name}:{record.lineno}:{cls_name}:{record.funcName}" if cls_name else (
            f"{file_name}:{record.lineno}:{record.funcName}"
        )
        return (
            f"{color}[{timestamp}] [{record.name}] {record.levelname} [{location}]{reset} {record.getMessage()}"
        )


def set_level(level: str | int) -> None:
    """Set the level of the package logger and all its handlers."""
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


# Create global logger instance
logger = logging.getLogger(name="via_inspector")
if not logger.hasHandlers():
    ch = logging.StreamHandler(sys.stderr)
    ch.setFormatter(ColoredFormatter(use_color=sys.stderr.isatty()))
    logger.addHandler(ch)
    set_level(InspectionSettings().log_level)
