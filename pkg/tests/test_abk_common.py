"""Unit tests for abk_common module."""

import io
import logging
from unittest.mock import Mock, patch

from parameterized import parameterized

from mflsi.abk_common import PerformanceTimer, function_trace, setup_logging


class TestFunctionTrace:
    """Test function_trace decorator."""

    @patch("mflsi.abk_common.logging.getLogger")
    def test_function_trace_decorator(self, mock_get_logger):
        """Test entry and exit are logged at debug level."""
        mock_logger = Mock()
        mock_get_logger.return_value = mock_logger

        @function_trace
        def traced(x, y):
            return x + y

        result = traced(1, 2)

        assert result == 3
        assert mock_logger.debug.call_count == 2
        calls = mock_logger.debug.call_args_list
        assert "Entering traced" in str(calls[0])
        assert "Exiting traced" in str(calls[1])
        mock_get_logger.assert_called_with(__name__)

    def test_preserves_metadata(self):
        """Test functools.wraps keeps the name and docstring."""

        @function_trace
        def documented():
            """Docstring."""

        assert documented.__name__ == "documented"
        assert documented.__doc__ == "Docstring."


class TestPerformanceTimer:
    """Test PerformanceTimer context manager."""

    def test_performance_timer_with_default_logger(self):
        """Test PerformanceTimer with default logger."""
        with patch("mflsi.abk_common.logging.getLogger") as mock_get_logger:
            mock_logger = Mock()
            mock_get_logger.return_value = mock_logger

            timer = PerformanceTimer("constants")
            assert timer._timer_name == "constants"
            assert timer._logger == mock_logger

    def test_performance_timer_with_custom_logger(self):
        """Test PerformanceTimer with custom logger."""
        custom_logger = Mock()
        timer = PerformanceTimer("constants", custom_logger)

        assert timer._logger == custom_logger

    def test_performance_timer_timing_calculation(self):
        """Test elapsed time is logged and kept in milliseconds."""
        mock_logger = Mock()

        with patch("mflsi.abk_common.timeit.default_timer", side_effect=[1.0, 1.05]), PerformanceTimer("simulate", mock_logger) as timer:
            pass

        call_args = mock_logger.info.call_args[0][0]
        assert "Executing simulate took" in call_args
        assert "50.0 ms" in call_args
        assert abs(timer.elapsed_ms - 50.0) < 1e-9

    def test_performance_timer_logs_on_exception(self):
        """Test the timer still logs when the body raises."""
        mock_logger = Mock()

        try:
            with PerformanceTimer("failing", mock_logger):
                raise RuntimeError("boom")
        except RuntimeError:
            pass

        mock_logger.info.assert_called_once()


class TestSetupLogging:
    """Test verbosity mapping of setup_logging."""

    @parameterized.expand(
        [
            ("quiet", 0, logging.WARNING),
            ("verbose", 1, logging.INFO),
            ("debug", 2, logging.DEBUG),
            ("very_verbose", 5, logging.DEBUG),
        ]
    )
    def test_levels(self, _, verbosity, level):
        """Test -v counts map to logging levels."""
        setup_logging(verbosity, stream=io.StringIO())
        assert logging.getLogger().level == level

    def test_writes_to_stream(self):
        """Test records go to the given stream."""
        stream = io.StringIO()
        setup_logging(1, stream=stream)
        logging.getLogger("mflsi.test").info("hello")
        assert "hello" in stream.getvalue()
        assert "INFO" in stream.getvalue()
