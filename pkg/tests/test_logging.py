"""Tests for structured log formatting."""

import json
import logging

import pytest

from transport_core.logging_config import QUIET_LOGGERS, JSONFormatter, StructuredLogger, TextFormatter, setup_logging


class ListHandler(logging.Handler):
    def __init__(self):
        super().__init__()
        self.records = []

    def emit(self, record):
        self.records.append(record)


def capture(name: str) -> ListHandler:
    handler = ListHandler()
    logger = logging.getLogger(name)
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)
    return handler


def test_structured_fields_reach_json_output():
    handler = capture("bundlelab.test.json")
    StructuredLogger("bundlelab.test.json").info("Slab extension complete", extra={"verdict": "extended", "nodes": 256})
    payload = json.loads(JSONFormatter().format(handler.records[-1]))
    assert payload["message"] == "Slab extension complete"
    assert payload["level"] == "INFO"
    assert payload["verdict"] == "extended"
    assert payload["nodes"] == 256


def test_text_format_appends_fields():
    handler = capture("bundlelab.test.text")
    StructuredLogger("bundlelab.test.text").warning("Scan stalled", extra={"pending": 3})
    line = TextFormatter(use_colors=False).format(handler.records[-1])
    assert "Scan stalled" in line
    assert line.endswith("[pending=3]")


def test_disabled_level_emits_nothing():
    handler = capture("bundlelab.test.quiet")
    logging.getLogger("bundlelab.test.quiet").setLevel(logging.WARNING)
    StructuredLogger("bundlelab.test.quiet").debug("Fundamental sweep started", extra={"parameters": 64})
    assert handler.records == []


@pytest.fixture
def restore_root():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    quiet_levels = {name: logging.getLogger(name).level for name in QUIET_LOGGERS}
    yield root
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)
    for name, value in quiet_levels.items():
        logging.getLogger(name).setLevel(value)


def test_setup_logging_caps_quiet_loggers(restore_root):
    setup_logging(level="DEBUG", format_type="text")
    assert restore_root.level == logging.DEBUG
    assert all(logging.getLogger(name).level == logging.WARNING for name in QUIET_LOGGERS)
    assert len(restore_root.handlers) == 1


def test_log_file_is_plain_text(restore_root, tmp_path):
    path = tmp_path / "runs.log"
    setup_logging(level="INFO", format_type="text", log_file=str(path))
    StructuredLogger("bundlelab.test.file").info("Scenario run complete", extra={"verdict": "obstructed"})
    for handler in restore_root.handlers:
        handler.flush()
    text = path.read_text()
    assert "Scenario run complete [verdict=obstructed]" in text
    assert "\033[" not in text


def test_json_log_file(restore_root, tmp_path):
    path = tmp_path / "runs.jsonl"
    setup_logging(level="INFO", format_type="json", log_file=str(path))
    StructuredLogger("bundlelab.test.jsonfile").info("Scan complete", extra={"frontier": 4})
    for handler in restore_root.handlers:
        handler.flush()
    payload = json.loads(path.read_text().strip().splitlines()[-1])
    assert payload["frontier"] == 4
