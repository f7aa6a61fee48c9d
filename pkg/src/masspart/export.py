"""CSV matrices and JSON reports, each carrying full provenance."""

import csv
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from . import __version__

log = logging.getLogger(__name__)


def provenance(**fields):
    """Ordered provenance record; the library version is always included."""
    record = {key: value for key, value in fields.items() if value is not None}
    record["version"] = __version__
    return record


def provenance_line(record):
    return "# " + " ".join(f"{key}={value}" for key, value in record.items())


@contextmanager
def _open_output(path):
    if path is None or str(path) == "-":
        yield sys.stdout
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        yield handle
    log.info("wrote %s", path)


def write_matrix_csv(path, rows, columns, record):
    """Provenance comment line, a header row, then one replica per row.

    Floats are written with ``repr`` so that reruns are byte-identical.
    """
    with _open_output(path) as handle:
        handle.write(provenance_line(record) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["replica", *columns])
        for i, row in enumerate(rows):
            writer.writerow([i, *(repr(float(v)) for v in row)])


def write_matrix_json(path, rows, columns, record):
    payload = {"provenance": record, "columns": list(columns), "rows": [[float(v) for v in row] for row in rows]}
    write_report_json(path, payload)


def write_report_json(path, payload):
    with _open_output(path) as handle:
        json.dump(payload, handle, indent=4)
        handle.write("\n")
