"""
Logging setup for PXS.

The library logs under ``pxs.<module>`` and the command line under
``pxstool``. Both stay silent until an application calls
``configure_logging``::

    import logging
    from pxs import configure_logging

    configure_logging(level=logging.DEBUG)   # per-frame stage timings
"""
import logging
from typing import Mapping, Optional, Sequence

LIBRARY_LOGGER = "pxs"
TOOL_LOGGER = "pxstool"
DEFAULT_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

logger = logging.getLogger(LIBRARY_LOGGER)
logger.addHandler(logging.NullHandler())


def configure_logging(
    level: int = logging.INFO,
    format: Optional[str] = None,
    handler: Optional[logging.Handler] = None,
    names: Sequence[str] = (LIBRARY_LOGGER, TOOL_LOGGER),
) -> logging.Handler:
    """
    Route the PXS loggers to one handler.

    Calling it again replaces the handler installed before; the library's
    NullHandler is left in place.

    Args:
        level: Level applied to every logger in ``names``
        format: Format string for the default handler (``DEFAULT_FORMAT``)
        handler: Handler to install instead of a stderr StreamHandler
        names: Loggers to configure

    Returns:
        The installed handler
    """
    if handler is None:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(format or DEFAULT_FORMAT))

    for name in names:
        target = logging.getLogger(name)
        target.setLevel(level)
        for h in target.handlers[:]:
            if not isinstance(h, logging.NullHandler):
                target.removeHandler(h)
        target.addHandler(handler)
    return handler


def get_logger(name: str) -> logging.Logger:
    """Logger for a PXS submodule; ``name`` is prefixed with ``pxs.`` when needed."""
    if name == LIBRARY_LOGGER or name.startswith(LIBRARY_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{LIBRARY_LOGGER}.{name}")


def format_timings(timings: Mapping[str, float]) -> str:
    """``stage=1.2ms, ...`` for a mapping of stage name to seconds."""
    return ", ".join(f"{stage}={seconds * 1000.0:.1f}ms" for stage, seconds in timings.items())
