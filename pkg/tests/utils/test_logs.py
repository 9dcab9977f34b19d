import logging

import pytest

from presymplectic_strata.core.config import LOGGER_NAME, LogSettings
from presymplectic_strata.utils.logs import get_log_level, init_logging_config


class TestGetLogLevel:
    def test_default_log_level(self):
        assert get_log_level() == logging.INFO

    def test_debug_log_level(self):
        assert get_log_level("DEBUG") == logging.DEBUG

    def test_warning_log_level(self):
        assert get_log_level("warning") == logging.WARNING

    def test_error_log_level(self):
        assert get_log_level(" ERROR ") == logging.ERROR

    def test_invalid_log_level(self):
        assert get_log_level("INVALID") == logging.INFO

    def test_none_log_level(self):
        assert get_log_level(None) == logging.INFO


@pytest.fixture
def log_settings(tmp_path):
    return LogSettings(level="DEBUG", file=tmp_path / "logs" / "strata.log")


@pytest.fixture(autouse=True)
def reset_package_logger():
    yield
    package_logger = logging.getLogger(LOGGER_NAME)
    for handler in package_logger.handlers[::-1]:
        package_logger.removeHandler(handler)
        handler.close()


class TestInitLoggingConfig:
    def test_file_handler_only(self, log_settings):
        new_logger = init_logging_config(log_settings)
        assert new_logger.name == LOGGER_NAME
        assert new_logger.level == logging.DEBUG
        assert [type(h) for h in new_logger.handlers] == [logging.FileHandler]
        assert log_settings.file.parent.is_dir()

    def test_console_handler(self, log_settings):
        new_logger = init_logging_config(log_settings, console=True)
        assert len(new_logger.handlers) == 2

    def test_console_from_settings(self, tmp_path):
        settings = LogSettings(file=tmp_path / "strata.log", console=True)
        assert len(init_logging_config(settings).handlers) == 2

    def test_repeated_calls_do_not_duplicate(self, log_settings):
        init_logging_config(log_settings)
        new_logger = init_logging_config(log_settings)
        assert len(new_logger.handlers) == 1

    def test_records_reach_the_file(self, log_settings):
        new_logger = init_logging_config(log_settings)
        new_logger.info("census finished")
        for handler in new_logger.handlers:
            handler.flush()
        assert "census finished" in log_settings.file.read_text(encoding="utf-8")
