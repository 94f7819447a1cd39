# -*- coding: utf-8 -*-
"""
Artifact files. Every writer goes through ``atomic_write`` so a file is
either complete or absent.
"""

# python std lib
import csv
import io
import json
import logging
import math
import os
import tempfile

# deqgan imports
from deqgan.exceptions import DeqganCacheException

# 3rd party imports
import numpy as np


log = logging.getLogger(__name__)


def atomic_write(path, data):
    """
    Write ``data`` (str or bytes) to a temp file next to ``path`` and rename
    it into place.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    binary = isinstance(data, (bytes, bytearray))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))

    try:
        with os.fdopen(fd, "wb" if binary else "w") as f:
            f.write(data)

        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)

        raise

    log.debug(f"Wrote {path}")

    return path


def format_number(value):
    """
    17 significant digits, enough to read back the identical float64.
    """
    if value is None:
        return ""

    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"

    if isinstance(value, (int, np.integer)):
        return str(int(value))

    if isinstance(value, (float, np.floating)):
        value = float(value)

        if math.isnan(value):
            return "nan"

        if math.isinf(value):
            return "inf" if value > 0 else "-inf"

        return f"{value:.17g}"

    return str(value)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)

    for row in rows:
        writer.writerow([format_number(v) for v in row])

    return atomic_write(path, buf.getvalue())


def read_csv(path):
    """
    Rows as dicts of strings keyed by the header.
    """
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()

    if isinstance(obj, np.integer):
        return int(obj)

    if isinstance(obj, np.floating):
        return float(obj)

    if isinstance(obj, tuple):
        return list(obj)

    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(path, payload):
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_array_file(path, header, array):
    """
    One JSON header line followed by the array as flat little-endian float64.

    The header gets ``shape`` added so the payload can be read back.
    """
    array = np.ascontiguousarray(array, dtype="<f8")
    header = dict(header, shape=list(array.shape))
    data = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + array.tobytes()

    return atomic_write(path, data)


def read_array_file(path):
    """
    :rtype: tuple (dict, numpy.ndarray)
    """
    with open(path, "rb") as f:
        raw = f.read()

    line, sep, payload = raw.partition(b"\n")

    if not sep:
        raise DeqganCacheException(f"Cache file {path} has no header line")

    try:
        header = json.loads(line.decode("utf-8"))
    except ValueError:
        raise DeqganCacheException(f"Cache file {path} has a malformed header")

    shape = tuple(header.get("shape", []))
    expected = int(np.prod(shape)) * 8

    if len(payload) != expected:
        raise DeqganCacheException(
            f"Cache file {path} holds {len(payload)} bytes, header promises {expected}"
        )

    return header, np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
