"""Bit-exact file formats for fields, sinograms, and grayscale renders.

Fields and sinograms are flat little-endian binary32 streams with a sidecar
text header (``<stem>.hdr``).  Field order: x fastest, then y, then z.
Sinogram order: rho fastest, then theta, then z'.  Renders are binary PGM
(P5), 8 bits.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .grids import Field, GridSpec
from .propagation import Sinogram, SinogramSpec


def _header_path(path: Path) -> Path:
    return path.with_suffix(".hdr") if path.suffix else path.with_name(path.name + ".hdr")


def _write_header(path: Path, entries: list[tuple[str, str]]) -> None:
    path.write_text("".join(f"{k}={v}\n" for k, v in entries))


def _read_header(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed header line in {path}: {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_field(field: Field, path: str | Path) -> Path:
    """Write the binary payload at ``path`` and its sidecar header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = field.values.astype("<f4").reshape(-1)
    path.write_bytes(data.tobytes())
    _write_header(
        _header_path(path),
        [
            ("nx", str(field.grid.n_x)),
            ("ny", str(field.grid.n_y)),
            ("nz", str(field.grid.n_z)),
            ("voxel_size_cm", repr(field.grid.voxel_size)),
            ("unit", field.unit),
        ],
    )
    return path


def read_field(path: str | Path) -> Field:
    path = Path(path)
    hdr = _read_header(_header_path(path))
    grid = GridSpec(
        n_x=int(hdr["nx"]),
        n_y=int(hdr["ny"]),
        n_z=int(hdr["nz"]),
        voxel_size=float(hdr["voxel_size_cm"]),
    )
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    return Field(grid, data.astype(np.float64), unit=hdr.get("unit", ""))


def write_sinogram(sino: Sinogram, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = sino.spec
    start_deg = math.degrees(spec.angles[0])
    step_deg = math.degrees(spec.angle_weight)
    data = sino.values.astype("<f4").reshape(-1)
    path.write_bytes(data.tobytes())
    _write_header(
        _header_path(path),
        [
            ("nrho", str(spec.n_rho)),
            ("ntheta", str(spec.n_theta)),
            ("nz", str(spec.n_z)),
            ("angle_start_deg", repr(start_deg)),
            ("angle_step_deg", repr(step_deg)),
            ("rho_extent_cm", repr(spec.rho_extent)),
        ],
    )
    return path


def read_sinogram(path: str | Path) -> Sinogram:
    path = Path(path)
    hdr = _read_header(_header_path(path))
    n_theta = int(hdr["ntheta"])
    step_deg = float(hdr["angle_step_deg"])
    spec = SinogramSpec.uniform(
        n_rho=int(hdr["nrho"]),
        n_theta=n_theta,
        n_z=int(hdr["nz"]),
        rho_extent=float(hdr.get("rho_extent_cm", hdr["nrho"])),
        coverage_deg=step_deg * n_theta,
        start_deg=float(hdr["angle_start_deg"]),
    )
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    return Sinogram(spec, data.astype(np.float64))


def write_pgm(path: str | Path, image: np.ndarray) -> Path:
    """Write an 8-bit binary PGM (P5).  Input must already be uint8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("write_pgm expects a 2D uint8 array")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5), 8 or 16 bit, into a 2D integer array."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = tokens
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = width * height
    img = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return img.reshape(height, width).astype(np.int64 if maxval > 255 else np.uint8)


def render_response_pgm(field: Field, path: str | Path, z: int = 0) -> Path:
    """8-bit grayscale render of one z slice: linear [0, 1] -> [0, 255],
    clamped; rows are flipped so +y points up in the image."""
    img = np.clip(field.slice(z), 0.0, 1.0)
    img8 = np.round(img * 255.0).astype(np.uint8)
    return write_pgm(path, img8[::-1])
