"""Shared binary container for grids, snapshot series, datasets and checkpoints.

Layout (all integers little-endian):

    bytes 0..3   magic ``FLD1``
    u32          manifest byte length
    ...          UTF-8 manifest, one ``key: value`` per line
    u32          array count
    per array:   u16 name length, name bytes, u8 dtype tag, u8 ndim,
                 ndim * u32 dims, row-major payload

Dtype tags: 0 = little-endian float32 (grid planes, parameters, records),
1 = little-endian float64 (time axes and other high-precision vectors),
2 = little-endian int64 (index vectors). Writing is canonical: identical
manifest and arrays produce byte-identical files, so round-trips are exact.
"""

import io
import struct

import numpy as np

from .errors import DimensionError

MAGIC = b"FLD1"

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR_KIND = {"f4": 0, "f8": 1, "i8": 2}


def _tag_for(arr):
    key = f"{arr.dtype.kind}{arr.dtype.itemsize}"
    if key not in _TAG_FOR_KIND:
        raise DimensionError(f"unsupported container dtype {arr.dtype}")
    return _TAG_FOR_KIND[key]


def _encode_manifest(manifest):
    lines = []
    for key, value in manifest.items():
        key = str(key)
        if ":" in key or "\n" in key:
            raise ValueError(f"manifest key may not contain ':' or newline: {key!r}")
        text = str(value)
        if "\n" in text:
            raise ValueError(f"manifest value may not contain newline: {key!r}")
        lines.append(f"{key}: {text}\n")
    return "".join(lines).encode("utf-8")


def _decode_manifest(blob):
    manifest = {}
    for line in blob.decode("utf-8").splitlines():
        if not line.strip():
            continue
        if ":" not in line:
            raise ValueError(f"malformed manifest line: {line!r}")
        key, _, value = line.partition(":")
        manifest[key.strip()] = value.lstrip()
    return manifest


def write_container(path, manifest, arrays):
    """Write ``{name: ndarray}`` plus a string manifest to *path*.

    Arrays are stored in the given order with their dtypes narrowed to one of
    the supported tags (float arrays that are not float64 are stored as
    float32).
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = _encode_manifest(manifest)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f" and arr.dtype.itemsize != 8:
            arr = arr.astype("<f4")
        elif arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i8")
        else:
            raise DimensionError(f"unsupported array dtype {arr.dtype} for {name!r}")
        tag = _tag_for(arr)
        name_bytes = str(name).encode("utf-8")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<BB", tag, arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(np.ascontiguousarray(arr).tobytes())
    data = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_container(path):
    """Read a container file, returning ``(manifest, {name: ndarray})``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    offset = 4
    (blob_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    manifest = _decode_manifest(data[offset : offset + blob_len])
    offset += blob_len
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        tag, ndim = struct.unpack_from("<BB", data, offset)
        offset += 2
        if tag not in _DTYPE_TAGS:
            raise ValueError(f"{path}: unknown dtype tag {tag} for array {name!r}")
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        dtype = _DTYPE_TAGS[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(shape)
        if arr.nbytes != nbytes:
            raise ValueError(f"{path}: truncated payload for array {name!r}")
        offset += nbytes
        arrays[name] = arr.copy()
    return manifest, arrays


def manifest_get(manifest, key, cast=str):
    if key not in manifest:
        raise KeyError(f"manifest missing required key {key!r}")
    return cast(manifest[key])


def write_csv(path, header, rows):
    """Write a plain comma-separated table with ``repr``-exact floats."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(cell) for cell in row) + "\n")


def _format_cell(cell):
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns (header, rows of str)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows
