"""Result files.

JSON documents are written with sorted keys; floats use the shortest representation
that reads back to the same binary64 value, so identical runs produce identical bytes.
"""
import csv
import logging
import os
import sys

import ujson as json

from ddctl.core.utils import to_plain

logger = logging.getLogger(__name__)


def dumps(payload):
    return json.dumps(to_plain(payload), sort_keys=True, indent=2, escape_forward_slashes=False)


def write_json(path, payload):
    """Write ``payload`` to ``path`` (``None`` or ``-`` for standard output)."""
    content = dumps(payload) + "\n"
    if path in (None, "-"):
        sys.stdout.write(content)
        return
    folder = os.path.dirname(path)
    if folder and not os.path.exists(folder):
        os.makedirs(folder)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(content)
    logger.info(f"Wrote {os.path.abspath(path)}")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.loads(f.read())


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, header, rows):
    """Write a trace table with a header line."""
    folder = os.path.dirname(path)
    if folder and not os.path.exists(folder):
        os.makedirs(folder)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in to_plain(row)])
    logger.info(f"Wrote {os.path.abspath(path)}")
