import logging
import math
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from enum import Enum
from importlib.metadata import PackageNotFoundError, version
from typing import Any

import prettytable
from jinja2 import Environment, PackageLoader, select_autoescape
from pydantic import BaseModel

from presymplectic_strata.core.config import LOGGER_NAME, REPORT_HEADER, ReportSettings

logger = logging.getLogger(LOGGER_NAME)

template_env = Environment(
    loader=PackageLoader(package_name="presymplectic_strata.core", package_path="templates"),
    autoescape=select_autoescape(),
    keep_trailing_newline=True,
)

PROVENANCE_PACKAGES = ("presymplectic-strata", "sympy", "numpy", "scipy", "scikit-learn", "pyparsing")


class Report(BaseModel):
    """Result of one command: echo, materialized settings, records, warnings and provenance."""

    header: str = REPORT_HEADER
    command: str
    arguments: dict[str, str] = {}
    settings: dict[str, Any] = {}
    records: dict[str, Any] = {}
    tables: dict[str, str] = {}
    warnings: list[str] = []
    provenance: dict[str, str] = {}
    passed: bool = True

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def format_value(value: Any, digits: int = 12) -> str:
    """Stable text for a scalar: ``true``/``false``, ``null``, floats with ``digits`` significant digits."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{digits}g}"
    return str(value)


def _is_scalar(value: Any) -> bool:
    return not isinstance(value, (dict, list, tuple, BaseModel))


def flatten(value: Any, prefix: str = "", digits: int = 12) -> list[tuple[str, str]]:
    """Dotted ``key: value`` pairs in field order; lists of scalars stay on one line."""
    if isinstance(value, BaseModel):
        value = value.model_dump()
    if isinstance(value, dict):
        pairs = []
        for key, item in value.items():
            pairs += flatten(item, f"{prefix}.{key}" if prefix else str(key), digits)
        return pairs
    if isinstance(value, (list, tuple)):
        if all(_is_scalar(item) for item in value):
            return [(prefix, "[" + ", ".join(format_value(item, digits) for item in value) + "]")]
        pairs = []
        for i, item in enumerate(value):
            pairs += flatten(item, f"{prefix}.{i}", digits)
        return pairs
    return [(prefix, format_value(value, digits))]


def make_table(field_names: Sequence[str], rows: Sequence[Sequence[Any]], digits: int = 12) -> str:
    table = prettytable.PrettyTable()
    table.set_style(prettytable.TableStyle.MSWORD_FRIENDLY)
    table.field_names = list(field_names)
    table.align = "r"
    table.add_rows([[format_value(c, digits) for c in row] for row in rows])
    return table.get_string()


def provenance(seed: int) -> dict[str, str]:
    info = {"seed": str(seed)}
    for package in PROVENANCE_PACKAGES:
        try:
            info[package] = version(package)
        except PackageNotFoundError:
            info[package] = "unknown"
    return info


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.messages.append(record.getMessage())


@contextmanager
def collect_warnings() -> Iterator[list[str]]:
    """Warnings logged by the package while the block runs, in order."""
    package_logger = logging.getLogger(LOGGER_NAME)
    collector = _WarningCollector()
    package_logger.addHandler(collector)
    try:
        yield collector.messages
    finally:
        package_logger.removeHandler(collector)


def render_report(report: Report, settings: ReportSettings | None = None) -> str:
    settings = settings or ReportSettings()
    digits = settings.float_digits
    template = template_env.get_template(settings.template)
    text = template.render(
        header=report.header,
        command=report.command,
        status=report.status,
        arguments=flatten(report.arguments, digits=digits),
        records=flatten(report.records, digits=digits),
        tables=report.tables,
        warnings=report.warnings,
        settings=flatten(report.settings, digits=digits),
        provenance=flatten(report.provenance, digits=digits),
    )
    logger.debug(f"Rendered {report.command} report with template {settings.template}")
    return text
