"""Binary array container and CSV/JSON helpers shared by all commands.

The native container ("BSR1") is a little-endian header followed by a
row-major float64 payload:

    bytes 0..3   magic b"BSR1"
    byte  4      dtype code (0 = float64; only 0 is defined)
    byte  5      ndim
    8*ndim bytes dims as uint64
    payload      C-order float64

CSV files mirror it for 1- and 2-D data.
"""

import json
import struct

import numpy as np

MAGIC = b"BSR1"
_DTYPE_F64 = 0

SCHEMA_VERSION = 1


class DataFormatError(IOError):
    """Raised when a file does not conform to the expected container."""


def write_array(path, arr) -> None:
    """Write an array (any ndim >= 1) to the BSR1 container."""
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim < 1:
        arr = arr.reshape(1)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", _DTYPE_F64, arr.ndim))
        fh.write(struct.pack("<%dQ" % arr.ndim, *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    """Read a BSR1 container back into a float64 array."""
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) < 6 or head[:4] != MAGIC:
            raise DataFormatError(f"{path}: not a BSR1 array file")
        dtype_code, ndim = struct.unpack("<BB", head[4:6])
        if dtype_code != _DTYPE_F64:
            raise DataFormatError(f"{path}: unknown dtype code {dtype_code}")
        if ndim < 1 or ndim > 8:
            raise DataFormatError(f"{path}: implausible ndim {ndim}")
        raw = fh.read(8 * ndim)
        if len(raw) < 8 * ndim:
            raise DataFormatError(f"{path}: truncated header")
        dims = struct.unpack("<%dQ" % ndim, raw)
        count = int(np.prod(dims))
        payload = fh.read(8 * count)
        if len(payload) < 8 * count:
            raise DataFormatError(f"{path}: truncated payload")
        return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def write_csv(path, arr) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim > 2:
        raise DataFormatError("CSV mirror only covers 1-D and 2-D arrays")
    np.savetxt(path, np.atleast_2d(arr), delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    if arr.shape[0] == 1:
        # 1-row files are ambiguous; callers that need strict 2-D reshape.
        return arr
    return arr


def load_matrix(path) -> np.ndarray:
    """Load either container by extension (.csv) or by magic sniffing."""
    p = str(path)
    if p.endswith(".csv"):
        return read_csv(p)
    return read_array(p)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
