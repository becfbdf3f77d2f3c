"""Single-file binary feature store.

Layout (all integers little-endian):

    magic   4 bytes  b"MPFS"
    version u32
    dtype   u8       1 = float32, 2 = float64
    ndim    u8
    dims    u32 * ndim   (per-record shape, uniform across the store)
    count   u64
    id_len  u64
    ids     id_len bytes of JSON (list of sample ids, record order)
    payload count * prod(dims) * itemsize bytes

Round-trips are bit-exact and records are randomly accessible by id via
the header index.
"""

import json
import os
import struct
from typing import Dict, List, Sequence, Tuple

import numpy as np

MAGIC = b"MPFS"
FORMAT_VERSION = 1

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class StoreError(IOError):
    """Raised for malformed or incompatible feature store files."""


def feature_store_write(path: str, records: Sequence[Tuple[str, np.ndarray]],
                        dtype=None):
    """Write (sample id, array) records. All arrays must share one shape."""
    if not records:
        raise StoreError("refusing to write an empty feature store")
    ids = [r[0] for r in records]
    if len(set(ids)) != len(ids):
        raise StoreError("duplicate sample ids in store")
    arrays = [np.asarray(r[1]) for r in records]
    shape = arrays[0].shape
    for i, a in enumerate(arrays):
        if a.shape != shape:
            raise StoreError("record %s has shape %r, store uses %r"
                             % (ids[i], a.shape, shape))
    if dtype is None:
        dtype = arrays[0].dtype
    dtype = np.dtype(dtype)
    if dtype not in _CODE_FOR:
        raise StoreError("unsupported dtype %r (float32/float64 only)" % dtype)

    id_blob = json.dumps(ids).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<BB", _CODE_FOR[dtype], len(shape)))
        f.write(struct.pack("<%dI" % len(shape), *shape))
        f.write(struct.pack("<Q", len(arrays)))
        f.write(struct.pack("<Q", len(id_blob)))
        f.write(id_blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype=dtype.newbyteorder("<")).tobytes())


def _read_header(f):
    magic = f.read(4)
    if magic != MAGIC:
        raise StoreError("not a feature store (bad magic %r)" % magic)
    (version,) = struct.unpack("<I", f.read(4))
    if version > FORMAT_VERSION:
        raise StoreError("feature store format version %d is newer than supported %d"
                         % (version, FORMAT_VERSION))
    code, ndim = struct.unpack("<BB", f.read(2))
    if code not in _DTYPE_CODES:
        raise StoreError("unknown dtype code %d" % code)
    shape = struct.unpack("<%dI" % ndim, f.read(4 * ndim))
    (count,) = struct.unpack("<Q", f.read(8))
    (id_len,) = struct.unpack("<Q", f.read(8))
    ids = json.loads(f.read(id_len).decode("utf-8"))
    if len(ids) != count:
        raise StoreError("id index length %d does not match record count %d"
                         % (len(ids), count))
    return _DTYPE_CODES[code], shape, count, ids, f.tell()


class FeatureStore:
    """Read-side handle with random access by sample id."""

    def __init__(self, path: str):
        self.path = path
        with open(path, "rb") as f:
            self.dtype, self.shape, self.count, self.ids, self._offset = _read_header(f)
            rec_bytes = int(np.prod(self.shape, dtype=np.int64)) * self.dtype.itemsize
            self._rec_bytes = rec_bytes
            f.seek(0, os.SEEK_END)
            expected = self._offset + rec_bytes * self.count
            if f.tell() != expected:
                raise StoreError("truncated payload: %d bytes, expected %d"
                                 % (f.tell(), expected))
        self._index = {sid: i for i, sid in enumerate(self.ids)}

    def __len__(self) -> int:
        return self.count

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._index

    def get(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._index:
            raise KeyError("sample id not in store: %s" % sample_id)
        i = self._index[sample_id]
        with open(self.path, "rb") as f:
            f.seek(self._offset + i * self._rec_bytes)
            buf = f.read(self._rec_bytes)
        return np.frombuffer(buf, dtype=self.dtype).reshape(self.shape).copy()

    def load_all(self) -> Dict[str, np.ndarray]:
        with open(self.path, "rb") as f:
            f.seek(self._offset)
            data = np.frombuffer(f.read(), dtype=self.dtype)
        data = data.reshape((self.count,) + tuple(self.shape))
        return {sid: data[i].copy() for i, sid in enumerate(self.ids)}


def feature_store_read(path: str) -> List[Tuple[str, np.ndarray]]:
    """Load every record, preserving write order."""
    store = FeatureStore(path)
    table = store.load_all()
    return [(sid, table[sid]) for sid in store.ids]
