"""Binary tensor container ("GISR" format) and dataset persistence.

Layout, little endian throughout:

    magic  4 bytes  b"GISR"
    u32    version  (currently 1)
    u32    entry count
    per entry:
        u16    name length, then UTF-8 name bytes
        u8     dtype code (0 = float32, 1 = float64)
        u8     ndim
        u32[.] dims
        raw row-major payload

Round trips are bit exact; anything malformed raises FormatError.
"""

import struct

import numpy as np

from .degradation import GuidedPair
from .errors import ArgumentError, FormatError

MAGIC = b"GISR"
VERSION = 1

_DTYPE_CODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPE = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


def pack_tensors(entries):
    """Serialize [(name, array), ...] to bytes, preserving order."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr)
        code = _DTYPE_CODE.get(arr.dtype)
        if code is None:
            raise ArgumentError(f"entry {name!r}: dtype {arr.dtype} not storable "
                                "(float32/float64 only)")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ArgumentError(f"entry name too long ({len(raw)} bytes)")
        if arr.ndim > 0xFF:
            raise ArgumentError(f"entry {name!r}: too many dims")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise FormatError(f"truncated container: expected {what}")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def unpack_tensors(buf):
    """Parse container bytes back to [(name, array), ...]."""
    rd = _Reader(buf)
    if rd.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a GISR tensor container")
    version, count = rd.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    entries = []
    for _ in range(count):
        (nlen,) = rd.unpack("<H", "name length")
        name = rd.take(nlen, "name").decode("utf-8")
        code, ndim = rd.unpack("<BB", "entry header")
        dtype = _CODE_DTYPE.get(code)
        if dtype is None:
            raise FormatError(f"entry {name!r}: unknown dtype code {code}")
        dims = rd.unpack(f"<{ndim}I", "dims")
        n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = rd.take(n_items * dtype.itemsize, f"payload of {name!r}")
        arr = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
        entries.append((name, arr))
    if rd.off != len(buf):
        raise FormatError(f"{len(buf) - rd.off} trailing bytes after last entry")
    return entries


def write_tensors(path, entries):
    with open(path, "wb") as fh:
        fh.write(pack_tensors(list(entries)))


def read_tensors(path):
    with open(path, "rb") as fh:
        return unpack_tensors(fh.read())


def save_dataset(path, pairs):
    """Store guided pairs as entries pair{i}.L / pair{i}.P / pair{i}.H."""
    entries = []
    for i, p in enumerate(pairs):
        entries.append((f"pair{i}.L", p.L))
        entries.append((f"pair{i}.P", p.P))
        entries.append((f"pair{i}.H", p.H_gt))
    write_tensors(path, entries)


def load_dataset(path):
    """Inverse of save_dataset; the ratio is recovered from the shapes."""
    by_name = dict(read_tensors(path))
    pairs = []
    i = 0
    while f"pair{i}.L" in by_name:
        low = by_name[f"pair{i}.L"]
        guide = by_name.get(f"pair{i}.P")
        hr = by_name.get(f"pair{i}.H")
        if guide is None or hr is None:
            raise FormatError(f"dataset entry pair{i} is incomplete")
        if hr.shape[-1] % low.shape[-1]:
            raise FormatError(
                f"pair{i}: ground-truth width {hr.shape[-1]} not a multiple of "
                f"LR width {low.shape[-1]}")
        pairs.append(GuidedPair(L=low, P=guide, H_gt=hr,
                                r=hr.shape[-1] // low.shape[-1]))
        i += 1
    if 3 * len(pairs) != len(by_name):
        raise FormatError("container holds entries that are not pair{i}.L|P|H")
    return pairs
