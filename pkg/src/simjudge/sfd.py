"""SFD1 solution dumps: an ASCII header line followed by little-endian float64 values.

A series is stored as a manifest text file of ``<time> <path>`` lines; paths
are relative to the manifest.  Lines starting with ``#`` are comments, and a
``# meta {...}`` line carries the series metadata as JSON.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .fields import SolutionField, SolutionSeries

_HEADER = re.compile(r"^SFD1 shape=(?P<shape>[0-9,]+) spacing=(?P<spacing>[^ ]+) dtype=f64 order=row-major$")


class SFDFormatError(ValueError):
    pass


def encode_field(field: SolutionField) -> bytes:
    shape = ",".join(str(n) for n in field.shape)
    spacing = ",".join(repr(h) for h in field.spacing)
    header = f"SFD1 shape={shape} spacing={spacing} dtype=f64 order=row-major\n".encode("ascii")
    return header + field.values.astype("<f8").tobytes()


def decode_field(data: bytes) -> SolutionField:
    nl = data.find(b"\n")
    if nl < 0:
        raise SFDFormatError("missing header line")
    m = _HEADER.match(data[:nl].decode("ascii", errors="replace"))
    if not m:
        raise SFDFormatError(f"bad header: {data[:nl][:80]!r}")
    shape = tuple(int(s) for s in m.group("shape").split(","))
    spacing = tuple(float(s) for s in m.group("spacing").split(","))
    payload = data[nl + 1 :]
    if len(payload) != 8 * math.prod(shape):
        raise SFDFormatError(f"payload holds {len(payload)} bytes, expected {8 * math.prod(shape)}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return SolutionField(shape, spacing, values)


def write_field(path: str | Path, field: SolutionField) -> None:
    Path(path).write_bytes(encode_field(field))


def read_field(path: str | Path) -> SolutionField:
    return decode_field(Path(path).read_bytes())


def write_series(manifest: str | Path, series: SolutionSeries) -> list[Path]:
    manifest = Path(manifest)
    stem = manifest.stem
    lines = [f"# meta {json.dumps(series.metadata, sort_keys=True, default=str)}"]
    written = []
    for k, (t, frame) in enumerate(zip(series.times, series.frames)):
        frame_path = manifest.with_name(f"{stem}_{k:05d}.sfd")
        write_field(frame_path, frame)
        written.append(frame_path)
        lines.append(f"{t!r} {frame_path.name}")
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return written


def read_series(manifest: str | Path) -> SolutionSeries:
    manifest = Path(manifest)
    times, frames = [], []
    meta: dict = {}
    for raw in manifest.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# meta "):
                meta = json.loads(line[len("# meta ") :])
            continue
        t, name = line.split(None, 1)
        times.append(float(t))
        frames.append(read_field(manifest.parent / name))
    return SolutionSeries(tuple(times), tuple(frames), meta)


def read_solution(path: str | Path) -> SolutionField | SolutionSeries:
    """Read either a single SFD1 file or a series manifest, by sniffing the first bytes."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    return read_field(path) if head == b"SFD1 " else read_series(path)
