"""Binary storage for per-segment descriptor matrices (shared by both modalities)."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DESCRIPTOR_MAGIC = b"DSC1"
DESCRIPTOR_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass(eq=False)
class DescriptorSet:
    """Variable-length collection of fixed-dimension descriptors for one segment."""

    segment_id: str
    descriptors: np.ndarray  # (count, dim) float32

    def __post_init__(self):
        arr = np.asarray(self.descriptors, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError("descriptors must be a 2-D array")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("descriptors must be finite")
        self.descriptors = arr

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return self.descriptors.shape[0]


def write_descriptors(path: str | Path, dset: DescriptorSet) -> None:
    seg_id = dset.segment_id.encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION, dset.dim, len(dset)))
        fh.write(struct.pack("<I", len(seg_id)))
        fh.write(seg_id)
        fh.write(np.ascontiguousarray(dset.descriptors, dtype="<f4").tobytes())


def read_descriptors(path: str | Path) -> DescriptorSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != DESCRIPTOR_MAGIC:
        raise ValueError(f"{path}: not a descriptor file")
    _, version, dim, count = _HEADER.unpack_from(data)
    if version != DESCRIPTOR_VERSION:
        raise ValueError(f"{path}: unsupported descriptor version {version}")
    offset = _HEADER.size
    (id_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    seg_id = data[offset : offset + id_len].decode("utf-8")
    offset += id_len
    expected = count * dim * 4
    body = data[offset : offset + expected]
    if len(body) != expected:
        raise ValueError(f"{path}: truncated descriptor payload")
    arr = np.frombuffer(body, dtype="<f4").reshape(count, dim).copy()
    return DescriptorSet(segment_id=seg_id, descriptors=arr)
