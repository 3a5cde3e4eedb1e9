# File: streamlines/tck_io.py
"""
MRtrix TCK reader/writer.

Layout: an ASCII header of "key: value" lines starting with "mrtrix tracks" and ending
with "END\n", containing "datatype: Float32LE" and "file: . <offset>". The binary section
at <offset> holds float32 little-endian (x, y, z) triplets; streamlines are separated by a
(NaN, NaN, NaN) triplet and the stream ends with (Inf, Inf, Inf).
"""

import logging
import os

import numpy as np

from streamlines.streamline import Streamline, Tractogram
from utils.errors import TckFormatError, UnsupportedDatatypeError

TCK_MAGIC = "mrtrix tracks"
TCK_DTYPE = np.dtype("<f4")


def _header_bytes(count: int, extra: dict = None) -> bytes:
    fields = [("count", f"{count:010d}"), ("datatype", "Float32LE")]
    for key, value in (extra or {}).items():
        fields.append((key, str(value)))
    offset = 0
    # the offset is part of the header it points past, so iterate to a fixed point
    while True:
        lines = [TCK_MAGIC] + [f"{k}: {v}" for k, v in fields] + [f"file: . {offset}", "END", ""]
        text = "\n".join(lines).encode("ascii")
        if len(text) == offset:
            return text
        offset = len(text)


def write_tck(tractogram: Tractogram, path, extra_header: dict = None):
    path = os.fspath(path)
    n = len(tractogram)
    # points, one NaN row between streamlines, one Inf row at the end
    rows = np.full((tractogram.total_points + max(n - 1, 0) + 1, 3), np.nan, dtype=TCK_DTYPE)
    start = 0
    for s in tractogram:
        rows[start:start + len(s)] = s.points
        start += len(s) + 1
    rows[-1] = np.inf
    payload = rows.tobytes()
    with open(path, "wb") as f:
        f.write(_header_bytes(n, extra_header))
        f.write(payload)
    logging.info(f"Wrote {n} streamlines ({tractogram.total_points} points) to {path}")


def read_tck_header(raw: bytes, path: str = "<bytes>") -> dict:
    end = raw.find(b"\nEND\n")
    if not raw.startswith(TCK_MAGIC.encode("ascii") + b"\n") or end < 0:
        raise TckFormatError(f"{path}: missing 'mrtrix tracks' magic line or END marker")
    header = {}
    for line in raw[:end].decode("ascii", errors="replace").split("\n")[1:]:
        if ":" not in line:
            continue
        key, value = line.split(":", 1)
        header[key.strip()] = value.strip()
    if header.get("datatype") != "Float32LE":
        raise UnsupportedDatatypeError(f"{path}: TCK datatype {header.get('datatype')!r} is not supported")
    file_field = header.get("file", "").split()
    if len(file_field) != 2 or file_field[0] != ".":
        raise TckFormatError(f"{path}: malformed 'file:' entry {header.get('file')!r}")
    try:
        header["_offset"] = int(file_field[1])
    except ValueError:
        raise TckFormatError(f"{path}: non-integer data offset {file_field[1]!r}")
    if header["_offset"] < end + 5:
        raise TckFormatError(f"{path}: data offset {header['_offset']} points inside the header")
    return header


def read_tck(path) -> Tractogram:
    path = os.fspath(path)
    with open(path, "rb") as f:
        raw = f.read()
    header = read_tck_header(raw, path)
    body = raw[header["_offset"]:]
    if len(body) % (3 * TCK_DTYPE.itemsize) != 0:
        raise TckFormatError(f"{path}: truncated binary section ({len(body)} bytes)")
    triplets = np.frombuffer(body, dtype=TCK_DTYPE).reshape(-1, 3)
    terminators = np.flatnonzero(np.all(np.isinf(triplets), axis=1))
    if len(terminators) == 0:
        raise TckFormatError(f"{path}: truncated binary section (no Inf terminator)")
    triplets = triplets[:terminators[0]]
    separators = np.flatnonzero(np.all(np.isnan(triplets), axis=1))
    streamlines = []
    for chunk in np.split(triplets, separators):
        chunk = chunk[~np.all(np.isnan(chunk), axis=1)]
        if len(chunk):
            streamlines.append(Streamline(chunk.astype(np.float64)))
    if "count" in header:
        try:
            expected = int(header["count"])
            if expected != len(streamlines):
                logging.warning(f"{path}: header count {expected} != {len(streamlines)} streamlines read")
        except ValueError:
            pass
    logging.info(f"Read {len(streamlines)} streamlines from {path}")
    return Tractogram(streamlines)
