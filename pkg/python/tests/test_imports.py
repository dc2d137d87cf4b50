"""
Tests for package imports.

These tests verify the public API is correctly exported.
"""
import logging

import pytest


class TestPackageImports:
    """Tests for importing the pxs package."""

    def test_import_package(self):
        """Can import the pxs package."""
        import pxs
        assert hasattr(pxs, "__version__")

    def test_version(self):
        """Package has version string."""
        from pxs import __version__, get_version
        assert isinstance(__version__, str)
        assert get_version() == __version__

    def test_import_exceptions(self):
        """Can import all exception classes."""
        from pxs import (
            PxsConfigError,
            PxsDatasetError,
            PxsDecodeError,
            PxsDomainError,
            PxsError,
            PxsIOError,
            PxsMetricError,
            PxsValidationError,
            PxsVersionError,
        )
        assert issubclass(PxsDecodeError, PxsError)
        assert issubclass(PxsConfigError, PxsError)

    def test_import_engine(self):
        """Can import ProxyEngine."""
        from pxs import ProxyEngine
        assert callable(ProxyEngine)

    def test_all_exports(self):
        """__all__ entries all resolve."""
        import pxs
        for name in pxs.__all__:
            assert hasattr(pxs, name), name

    def test_import_tool(self):
        """The command line package imports."""
        from pxstool import build_parser, main
        assert callable(main)
        assert build_parser().prog == "pxs"


class TestLogging:
    """Tests for logging helpers."""

    def test_null_handler(self):
        """The library logger has a NullHandler."""
        import pxs  # noqa: F401
        handlers = logging.getLogger("pxs").handlers
        assert any(isinstance(h, logging.NullHandler) for h in handlers)

    def test_set_get_log_level(self):
        """set_log_level and get_log_level agree."""
        from pxs import LogLevel, get_log_level, set_log_level
        logger = logging.getLogger("pxs")
        old = logger.level
        try:
            set_log_level(LogLevel.DEBUG)
            assert get_log_level() == LogLevel.DEBUG
            set_log_level(LogLevel.NONE)
            assert get_log_level() == LogLevel.NONE
        finally:
            logger.setLevel(old)

    def test_configure_logging(self):
        """configure_logging installs exactly one stream handler."""
        from pxs import configure_logging
        logger = logging.getLogger("pxs")
        old_level, old_handlers = logger.level, list(logger.handlers)
        try:
            configure_logging(logging.INFO)
            configure_logging(logging.DEBUG)
            streams = [h for h in logger.handlers if not isinstance(h, logging.NullHandler)]
            assert len(streams) == 1
            assert logger.level == logging.DEBUG
        finally:
            logger.handlers = old_handlers
            logger.setLevel(old_level)

    def test_get_logger_prefix(self):
        """get_logger prefixes names with pxs."""
        from pxs._logging import get_logger
        assert get_logger("engine").name == "pxs.engine"
        assert get_logger("pxs.codec").name == "pxs.codec"

    def test_configure_logging_covers_tool(self):
        """The command line logger shares the library handler."""
        from pxs import configure_logging
        loggers = [logging.getLogger("pxs"), logging.getLogger("pxstool")]
        saved = [(lg.level, list(lg.handlers)) for lg in loggers]
        try:
            handler = configure_logging(logging.WARNING)
            for lg in loggers:
                assert handler in lg.handlers
                assert lg.level == logging.WARNING
        finally:
            for lg, (level, handlers) in zip(loggers, saved):
                lg.handlers = handlers
                lg.setLevel(level)

    def test_format_timings(self):
        """Stage timings render in milliseconds."""
        from pxs._logging import format_timings
        assert format_timings({"track": 0.0012, "detect": 0.25}) == "track=1.2ms, detect=250.0ms"
