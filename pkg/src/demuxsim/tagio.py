"""Time-tag file codecs.

Two interchangeable on-disk forms, distinguished by file extension:

* CSV (``.csv``): header line ``channel,timestamp_ps`` followed by one
  ASCII decimal record per line.
* binary (``.bin``): packed little-endian records of
  (uint32 channel, uint64 timestamp_ps), no header.

Both round-trip bit-exactly (timestamps are integers end to end).
"""

import os

import numpy as np

from .errors import ConfigError, DataError
from .model import TAG_DTYPE

CSV_HEADER = "channel,timestamp_ps"
RECORD_SIZE = TAG_DTYPE.itemsize  # 12 bytes

_FORMATS = ("csv", "binary")
_EXTENSIONS = {"csv": ".csv", "binary": ".bin"}


def tag_extension(fmt: str) -> str:
    if fmt not in _FORMATS:
        raise ConfigError(f"unknown tag format {fmt!r}, expected one of {_FORMATS}")
    return _EXTENSIONS[fmt]


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in _FORMATS:
            raise ConfigError(f"unknown tag format {fmt!r}, expected one of {_FORMATS}")
        return fmt
    ext = os.path.splitext(str(path))[1].lower()
    for name, e in _EXTENSIONS.items():
        if ext == e:
            return name
    raise ConfigError(f"cannot infer tag format from extension of {path!r}")


def write_tags(path, tags: np.ndarray, fmt: str = None) -> None:
    """Write a structured tag array to ``path`` in csv or binary form."""
    fmt = _infer_format(path, fmt)
    tags = np.ascontiguousarray(tags.astype(TAG_DTYPE, copy=False))
    if fmt == "binary":
        with open(path, "wb") as f:
            tags.tofile(f)
        return
    with open(path, "w", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        if tags.size:
            np.savetxt(f, np.column_stack([tags["channel"], tags["timestamp_ps"]]),
                       fmt="%d,%d", newline="\n")


def read_tags(path, fmt: str = None) -> np.ndarray:
    """Read a tag file; malformed records raise DataError with a byte offset."""
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        return _read_binary(path)
    return _read_csv(path)


def _read_binary(path):
    size = os.path.getsize(path)
    if size % RECORD_SIZE != 0:
        raise DataError(
            f"{path}: truncated binary record at byte offset {size - size % RECORD_SIZE}"
        )
    return np.fromfile(path, dtype=TAG_DTYPE)


def _read_csv(path):
    with open(path, "rb") as f:
        header = f.readline()
        if header.strip().decode("ascii", errors="replace") != CSV_HEADER:
            raise DataError(f"{path}: missing '{CSV_HEADER}' header at byte offset 0")
        body_start = f.tell()
        try:
            data = np.loadtxt(f, dtype=np.int64, delimiter=",", ndmin=2)
        except Exception:
            _scan_csv_for_error(path, body_start)
            raise DataError(f"{path}: malformed CSV body") from None
    if data.size and (data.ndim != 2 or data.shape[1] != 2 or (data < 0).any()):
        _scan_csv_for_error(path, body_start)
        raise DataError(f"{path}: malformed CSV body") from None
    out = np.empty(data.shape[0] if data.size else 0, dtype=TAG_DTYPE)
    if data.size:
        out["channel"] = data[:, 0]
        out["timestamp_ps"] = data[:, 1]
    return out


def _scan_csv_for_error(path, body_start):
    """Slow path: locate the first malformed record and report its offset."""
    with open(path, "rb") as f:
        f.seek(body_start)
        offset = body_start
        lineno = 2
        for raw in f:
            line = raw.decode("ascii", errors="replace").strip()
            if line:
                parts = line.split(",")
                ok = len(parts) == 2
                if ok:
                    try:
                        ok = int(parts[0]) >= 0 and int(parts[1]) >= 0
                    except ValueError:
                        ok = False
                if not ok:
                    raise DataError(
                        f"{path}: malformed record {line!r} on line {lineno} "
                        f"at byte offset {offset}"
                    )
            offset += len(raw)
            lineno += 1
