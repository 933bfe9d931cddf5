"""Bit-exact tensor container used for datasets and checkpoints.

Layout: magic ``b"SGT1"``, one u8 dtype code (0 = float64), one u8 rank,
then rank u32 little-endian extents, then the row-major little-endian
payload.  Round trips preserve every bit of a float64 array.
"""

import os

import numpy as np

from .errors import DataError, NonFiniteError

MAGIC = b"SGT1"
DTYPE_F64 = 0

_HEADER_FIXED = len(MAGIC) + 2  # magic + dtype code + rank


def write_sgt1(path, array):
    # asarray, not ascontiguousarray: the latter would promote rank 0 to 1.
    # tobytes() below serialises in row-major order for any memory layout.
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim > 255:
        raise DataError(f"rank {arr.ndim} exceeds container limit 255")
    if not np.isfinite(arr).all():
        # Mirror the read-side rule so a bad tensor fails at save time,
        # not when some later run tries to load it.
        raise NonFiniteError(f"{path}: refusing to write non-finite values")
    for extent in arr.shape:
        if extent <= 0:
            raise DataError(f"extents must be positive, got {arr.shape}")
        if extent > 0xFFFFFFFF:
            raise DataError(f"extent {extent} exceeds u32 range")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([DTYPE_F64, arr.ndim]))
        fh.write(np.asarray(arr.shape, dtype="<u4").tobytes())
        fh.write(arr.astype("<f8", copy=False).tobytes())


def read_sgt1(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_FIXED:
        raise DataError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}")
    dtype_code, rank = blob[4], blob[5]
    if dtype_code != DTYPE_F64:
        raise DataError(f"{path}: unsupported dtype code {dtype_code}")
    extents_end = _HEADER_FIXED + 4 * rank
    if len(blob) < extents_end:
        raise DataError(f"{path}: truncated extents")
    shape = tuple(int(e) for e in np.frombuffer(blob[_HEADER_FIXED:extents_end], dtype="<u4"))
    if any(e == 0 for e in shape):
        raise DataError(f"{path}: zero extent in {shape}")
    count = 1
    for extent in shape:
        count *= extent
    expected = extents_end + 8 * count
    if len(blob) != expected:
        raise DataError(f"{path}: payload size {len(blob) - extents_end}, expected {8 * count}")
    arr = np.frombuffer(blob[extents_end:], dtype="<f8").reshape(shape)
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{path}: non-finite values in payload")
    return arr.astype(np.float64)  # owned, native-order, writable copy


def write_tensor_dir(dirpath, tensors):
    """Write a dict of named tensors as one .sgt1 file per entry."""
    os.makedirs(dirpath, exist_ok=True)
    for name in sorted(tensors):
        write_sgt1(os.path.join(dirpath, name + ".sgt1"), tensors[name])


def read_tensor_dir(dirpath):
    tensors = {}
    for fname in sorted(os.listdir(dirpath)):
        if fname.endswith(".sgt1"):
            tensors[fname[: -len(".sgt1")]] = read_sgt1(os.path.join(dirpath, fname))
    return tensors
