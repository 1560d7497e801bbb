"""
Tests for the logging utilities.
"""
import os
import json
import logging
import tempfile
import threading
import unittest
from unittest import mock
from io import StringIO

from freshness_mdp.utils import (
    configure_logging, get_logger,
    disable_logging, log_function_call, log_to_json, LogContext, MemoCache
)


class TestLoggingUtils(unittest.TestCase):
    """Test suite for logging utilities."""

    def setUp(self):
        """Set up test environment."""
        root_logger = logging.getLogger("freshness_mdp")
        root_logger.handlers = []
        root_logger.setLevel(logging.INFO)
        root_logger.propagate = False

        self.log_file_fd, self.log_file_path = tempfile.mkstemp(suffix=".log")

    def tearDown(self):
        """Clean up after tests."""
        os.close(self.log_file_fd)
        if os.path.exists(self.log_file_path):
            os.unlink(self.log_file_path)

        disable_logging()

    def test_configure_logging_console_only(self):
        """Test that console logs go to stderr, not stdout."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr, \
                mock.patch('sys.stdout', new=StringIO()) as fake_stdout:
            configure_logging(
                level=logging.INFO,
                add_console_handler=True,
                log_file=None
            )

            logger = get_logger("test")
            logger.info("Test log message")

            self.assertIn("test - INFO - Test log message", fake_stderr.getvalue())
            self.assertEqual("", fake_stdout.getvalue())

    def test_configure_logging_file_only(self):
        """Test configuring logging with file output only."""
        configure_logging(
            level=logging.INFO,
            log_file=self.log_file_path,
            add_console_handler=False
        )

        logger = get_logger("test")
        logger.info("Test file log message")

        with open(self.log_file_path, 'r') as f:
            log_content = f.read()
            self.assertIn("test - INFO - Test file log message", log_content)

    def test_configure_logging_custom_format(self):
        """Test configuring logging with custom format."""
        custom_format = "%(levelname)s [%(name)s]: %(message)s"

        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(
                level=logging.INFO,
                log_format=custom_format,
                add_console_handler=True
            )

            logger = get_logger("test")
            logger.info("Custom format test")

            output = fake_stderr.getvalue()
            self.assertIn("INFO [freshness_mdp.test]: Custom format test", output)

    def test_get_logger(self):
        """Test getting loggers for different components."""
        logger1 = get_logger("mdp")
        logger2 = get_logger("simulation")

        self.assertEqual(logger1.name, "freshness_mdp.mdp")
        self.assertEqual(logger2.name, "freshness_mdp.simulation")
        self.assertNotEqual(logger1, logger2)
        self.assertEqual(get_logger().name, "freshness_mdp")

    def test_disable_logging(self):
        """Test disabling all logging."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.INFO)
            disable_logging()

            logger = get_logger("test")
            logger.error("This should not appear")

            self.assertEqual("", fake_stderr.getvalue())

    def test_log_function_call_decorator(self):
        """Test the log function call decorator."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.DEBUG)

            @log_function_call
            def sweep(a, b, c=None):
                return a + b

            result = sweep(1, 2, c="test")

            output = fake_stderr.getvalue()
            self.assertEqual(result, 3)
            self.assertIn("Calling sweep", output)
            self.assertIn("sweep returned in", output)

    def test_log_function_call_exception(self):
        """Test the log function call decorator with exception."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.DEBUG)

            @log_function_call
            def failing_function():
                raise ValueError("Test error")

            with self.assertRaises(ValueError):
                failing_function()

            output = fake_stderr.getvalue()
            self.assertIn("Calling failing_function", output)
            self.assertIn("failing_function raised ValueError", output)

    def test_log_to_json(self):
        """Test logging in JSON format."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.INFO)

            log_to_json(
                "grid point solved",
                level="info",
                alpha=0.2,
                family="aoii-sweep-alpha"
            )

            json_str = fake_stderr.getvalue().split(" - ")[-1]
            log_data = json.loads(json_str)

            self.assertEqual(log_data["message"], "grid point solved")
            self.assertEqual(log_data["level"], "INFO")
            self.assertEqual(log_data["alpha"], 0.2)
            self.assertEqual(log_data["family"], "aoii-sweep-alpha")

    def test_log_context_manager(self):
        """Test the logging context manager."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.INFO)

            with LogContext("grid point", q=0.2):
                logger = get_logger("test")
                logger.info("Inside context")

            output = fake_stderr.getvalue()
            self.assertIn("Entered context: grid point (q=0.2)", output)
            self.assertIn("Inside context", output)
            self.assertIn("Exited context: grid point (q=0.2)", output)

    def test_log_context_reports_errors(self):
        """Test that LogContext logs an error and lets the exception through."""
        with mock.patch('sys.stderr', new=StringIO()) as fake_stderr:
            configure_logging(level=logging.INFO)

            with self.assertRaises(RuntimeError):
                with LogContext("grid point", alpha=0.3):
                    raise RuntimeError("boom")

            self.assertIn("Error in context grid point (alpha=0.3): boom",
                          fake_stderr.getvalue())

    def test_log_context_marks_its_records(self):
        """Test that records sent through the context logger carry its name."""
        records = []
        handler = logging.Handler()
        handler.emit = records.append
        base = get_logger("experiments")
        base.addHandler(handler)
        base.setLevel(logging.DEBUG)
        try:
            with LogContext("grid point", logger_name="experiments", q=0.2) as ctx:
                ctx.logger.debug("solving")
        finally:
            base.removeHandler(handler)
            base.setLevel(logging.NOTSET)
        self.assertEqual([r.getMessage() for r in records][1], "solving")
        self.assertTrue(all(r.context_name == "grid point" for r in records))

    def test_log_context_is_thread_safe(self):
        """Test concurrent contexts leave the record factory alone and keep their names."""
        factory = logging.getLogRecordFactory()
        records = []
        handler = logging.Handler()
        handler.emit = records.append
        base = get_logger("experiments")
        base.addHandler(handler)
        base.setLevel(logging.DEBUG)
        barrier = threading.Barrier(4)
        factories = []

        def work(name):
            with LogContext(name, logger_name="experiments") as ctx:
                barrier.wait()
                factories.append(logging.getLogRecordFactory())
                ctx.logger.debug(f"inside {name}")

        threads = [threading.Thread(target=work, args=(f"point {i}",)) for i in range(4)]
        try:
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        finally:
            base.removeHandler(handler)
            base.setLevel(logging.NOTSET)

        inside = [r for r in records if r.getMessage().startswith("inside")]
        self.assertEqual(len(inside), 4)
        for record in inside:
            self.assertEqual(record.getMessage(), f"inside {record.context_name}")
        self.assertEqual(len(factories), 4)
        self.assertTrue(all(f is factory for f in factories))
        self.assertIs(logging.getLogRecordFactory(), factory)


class TestMemoCache(unittest.TestCase):
    """Test suite for the memo table."""

    def test_computes_once_per_key(self):
        """Test that a key is computed once and then served from the cache."""
        cache = MemoCache("test")
        calls = []

        def compute():
            calls.append(1)
            return object()

        first = cache.get_or_compute((0.5, 1.0), compute)
        second = cache.get_or_compute((0.5, 1.0), compute)

        self.assertIs(first, second)
        self.assertEqual(len(calls), 1)
        self.assertEqual((cache.hits, cache.misses), (1, 1))
        self.assertIn((0.5, 1.0), cache)
        self.assertEqual(len(cache), 1)

    def test_clear(self):
        """Test that clear drops entries and counters."""
        cache = MemoCache("test")
        cache.get_or_compute("a", lambda: 1)
        cache.clear()
        self.assertEqual(len(cache), 0)
        self.assertEqual((cache.hits, cache.misses), (0, 0))

    def test_concurrent_callers_share_one_computation(self):
        """Test that threads asking for the same key wait for one computation."""
        cache = MemoCache("test")
        calls = []
        barrier = threading.Barrier(4)

        def compute():
            calls.append(1)
            return 42

        def worker():
            barrier.wait()
            self.assertEqual(cache.get_or_compute("key", compute), 42)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        self.assertEqual(len(calls), 1)


if __name__ == "__main__":
    unittest.main()
