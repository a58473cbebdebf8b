"""Deterministic CSV reports.

Each file starts with '#' comment lines carrying the package version, the
experiment name and the result-determining configuration as canonical JSON
(everything except ``threads`` and ``output``), followed
by a header row and one row per record. Gzip output is written with a zero
timestamp and no embedded file name, so identical runs give identical bytes.
"""

# Standard lib imports
import csv
import gzip
import io
import logging
import math
from collections.abc import Iterable, Mapping
from pathlib import Path

# Local imports
from mflsi.config import ExperimentConfig


logger = logging.getLogger(__name__)


def format_value(value: object) -> str:
    """Render one cell; floats use the shortest round-trip representation."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def render_csv(name: str, rows: Iterable[Mapping[str, object]], config: ExperimentConfig, version: str) -> str:
    """Render a report as text.

    Args:
        name: report name, written into the comment header
        rows: records sharing the keys of the first one
        config: resolved configuration
        version: package version

    Returns:
        CSV text with '\\n' line endings
    """
    rows = list(rows)
    buffer = io.StringIO()
    buffer.write(f"# mflsi {version}\n")
    buffer.write(f"# report: {name}\n")
    buffer.write(f"# config: {config.result_json()}\n")
    if rows:
        fields = list(rows[0])
        writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fields})
    return buffer.getvalue()


def write_report(name: str, rows: Iterable[Mapping[str, object]], config: ExperimentConfig, version: str) -> Path:
    """Write ``<output.path>/<name>.csv`` (or ``.csv.gz``) and return its path."""
    directory = Path(config.output.path)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.{config.output.format}"
    data = render_csv(name, rows, config, version).encode("utf-8")
    if config.output.format == "csv.gz":
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as f:
            f.write(data)
    else:
        path.write_bytes(data)
    logger.info(f"Wrote {path}")
    return path
