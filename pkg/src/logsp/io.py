"""On-disk formats: LSPF1 field dumps, JSON reports and the run manifest.

LSPF1 layout (little endian)::

    bytes 0..5    magic  b"LSPF1\\0"
    bytes 6..9    N      uint32
    bytes 10..17  L      float64
    bytes 18..23  zero padding
    then N*N float64 values, row-major (index [i, j] -> offset i*N + j)
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .grid import Field, GridSpec

MAGIC = b"LSPF1\0"
_HEADER = struct.Struct("<6sId6x")
HEADER_SIZE = _HEADER.size  # 24

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


class FieldFormatError(ValueError):
    pass


def encode_field(u: Field) -> bytes:
    header = _HEADER.pack(MAGIC, u.grid.N, u.grid.L)
    return header + np.ascontiguousarray(u.values, dtype="<f8").tobytes(order="C")


def decode_field(data: bytes) -> Field:
    if len(data) < HEADER_SIZE:
        raise FieldFormatError(f"file too short for an LSPF1 header ({len(data)} bytes)")
    magic, n, half = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if data[18:24] != bytes(6):
        raise FieldFormatError("nonzero header padding")
    expected = HEADER_SIZE + 8 * n * n
    if len(data) != expected:
        raise FieldFormatError(f"expected {expected} bytes for N={n}, found {len(data)}")
    try:
        grid = GridSpec(half, n)
        values = np.frombuffer(data, dtype="<f8", offset=HEADER_SIZE).reshape(n, n)
        return Field(grid, values.astype(float))
    except ValueError as exc:
        raise FieldFormatError(str(exc)) from exc


def write_field(path, u: Field) -> Path:
    path = Path(path)
    path.write_bytes(encode_field(u))
    return path


def read_field(path) -> Field:
    return decode_field(Path(path).read_bytes())


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK
    return h


def file_hash(path) -> str:
    return f"{fnv1a64(Path(path).read_bytes()):016x}"


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


@dataclass
class Artifact:
    path: str
    fnv1a64: str
    size: int


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    config: dict
    group: str | None
    out_dir: str
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str | None = None
    artifacts: list[Artifact] = field(default_factory=list)

    def add(self, path) -> Artifact:
        path = Path(path)
        rel = path.relative_to(self.out_dir) if path.is_relative_to(self.out_dir) else path
        art = Artifact(str(rel), file_hash(path), path.stat().st_size)
        self.artifacts.append(art)
        return art

    def finish(self) -> None:
        self.finished = datetime.now(timezone.utc).isoformat()

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, name: str = "manifest.json") -> Path:
        if self.finished is None:
            self.finish()
        return write_json(Path(self.out_dir) / name, self.to_dict())

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        d["artifacts"] = [Artifact(**a) for a in d.get("artifacts", [])]
        return cls(**d)

    def verify(self) -> list[str]:
        """Paths whose current content hash differs from the recorded one."""
        bad = []
        for a in self.artifacts:
            p = Path(self.out_dir) / a.path
            if not p.exists() or file_hash(p) != a.fnv1a64:
                bad.append(a.path)
        return bad
