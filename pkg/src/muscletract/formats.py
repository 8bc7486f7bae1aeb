"""Binary file formats and the run-config parser.

All formats are little-endian with a 4-byte magic and a u32 version:

  STRL  streamlines: count u32, then per streamline npoints u32 followed by
        npoints * 3 float32 world-mm coordinates.
  MSKV  voxel mask: dims 3*u32, voxel_size 3*float32, origin 3*float32, then
        dims.x*dims.y*dims.z occupancy bytes {0,1}, x-fastest.
  ORNT  orientation field: MSKV header, payload 4*float32 per voxel
        (dir x, y, z, fa), x-fastest. Unit norm is validated where fa > 0.
  DENS  density volume: MSKV header, payload 1*float32 per voxel, x-fastest.

Round-trips are byte-exact: save(load(save(x))) writes identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .grid import OrientationField, VoxelMask
from .metrics import DensityMap
from .streamline import Streamline, StreamlineSet

FORMAT_VERSION = 1


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_header(fh, magic: bytes, path) -> None:
    got = _read_exact(fh, 4, "magic")
    if got != magic:
        raise FormatError(f"{path}: expected magic {magic!r}, got {got!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")


def save_streamlines(path, sset: StreamlineSet | list[Streamline]) -> None:
    streamlines = list(sset)
    with open(path, "wb") as fh:
        fh.write(b"STRL")
        fh.write(struct.pack("<II", FORMAT_VERSION, len(streamlines)))
        for s in streamlines:
            pts = np.ascontiguousarray(s.points, dtype="<f4")
            fh.write(struct.pack("<I", len(pts)))
            fh.write(pts.tobytes())


def load_streamlines(path) -> StreamlineSet:
    """Load streamlines; ids are assigned by file order."""
    with open(path, "rb") as fh:
        _read_header(fh, b"STRL", path)
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "count"))
        out = []
        for i in range(count):
            (npoints,) = struct.unpack("<I", _read_exact(fh, 4, "npoints"))
            if npoints < 2:
                raise FormatError(f"{path}: streamline {i} has {npoints} points")
            raw = _read_exact(fh, npoints * 12, f"streamline {i}")
            pts = np.frombuffer(raw, dtype="<f4").reshape(npoints, 3).astype(np.float64)
            out.append(Streamline(pts, id=i))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} streamlines")
    return StreamlineSet(out)


def _write_grid_header(fh, magic: bytes, dims, voxel_size, origin) -> None:
    fh.write(magic)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    fh.write(np.asarray(dims, dtype="<u4").tobytes())
    fh.write(np.asarray(voxel_size, dtype="<f4").tobytes())
    fh.write(np.asarray(origin, dtype="<f4").tobytes())


def _read_grid_header(fh, magic: bytes, path):
    _read_header(fh, magic, path)
    dims = np.frombuffer(_read_exact(fh, 12, "dims"), dtype="<u4").astype(int)
    voxel_size = np.frombuffer(_read_exact(fh, 12, "voxel_size"), dtype="<f4").astype(np.float64)
    origin = np.frombuffer(_read_exact(fh, 12, "origin"), dtype="<f4").astype(np.float64)
    if (dims <= 0).any():
        raise FormatError(f"{path}: non-positive dims {tuple(dims)}")
    return tuple(int(d) for d in dims), voxel_size, origin


def _x_fastest(grid: np.ndarray) -> np.ndarray:
    # Voxel (x, y, z) at flat index x + nx*(y + ny*z); per-voxel channels stay contiguous.
    if grid.ndim == 3:
        return grid.transpose(2, 1, 0).reshape(-1)
    return grid.transpose(2, 1, 0, 3).reshape(-1, grid.shape[3])


def _from_x_fastest(flat: np.ndarray, dims, channels: int = 0) -> np.ndarray:
    nx, ny, nz = dims
    if channels:
        return flat.reshape(nz, ny, nx, channels).transpose(2, 1, 0, 3)
    return flat.reshape(nz, ny, nx).transpose(2, 1, 0)


def save_mask(path, mask: VoxelMask) -> None:
    with open(path, "wb") as fh:
        _write_grid_header(fh, b"MSKV", mask.dims, mask.voxel_size, mask.origin)
        fh.write(_x_fastest(mask.occupancy.astype(np.uint8)).tobytes())


def load_mask(path) -> VoxelMask:
    with open(path, "rb") as fh:
        dims, voxel_size, origin = _read_grid_header(fh, b"MSKV", path)
        n = dims[0] * dims[1] * dims[2]
        raw = np.frombuffer(_read_exact(fh, n, "occupancy"), dtype=np.uint8)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    if not np.isin(raw, (0, 1)).all():
        raise FormatError(f"{path}: occupancy bytes must be 0 or 1")
    occ = _from_x_fastest(raw, dims).astype(bool)
    return VoxelMask(occ, voxel_size, origin)


def save_field(path, field: OrientationField) -> None:
    payload = np.concatenate([field.directions, field.fa[..., None]], axis=3)
    with open(path, "wb") as fh:
        _write_grid_header(fh, b"ORNT", field.dims, field.voxel_size, field.origin)
        fh.write(np.ascontiguousarray(_x_fastest(payload), dtype="<f4").tobytes())


def load_field(path) -> OrientationField:
    with open(path, "rb") as fh:
        dims, voxel_size, origin = _read_grid_header(fh, b"ORNT", path)
        n = dims[0] * dims[1] * dims[2] * 4
        raw = np.frombuffer(_read_exact(fh, n * 4, "field payload"), dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    grid = _from_x_fastest(raw.astype(np.float64), dims, channels=4)
    directions = grid[..., :3]
    fa = grid[..., 3]
    active = fa > 0
    if active.any():
        norms = np.linalg.norm(directions[active], axis=1)
        worst = float(np.abs(norms - 1.0).max())
        if worst > 1e-4:
            raise FormatError(f"{path}: non-unit directions where fa > 0 (worst {worst:.3g})")
        if worst > 5e-7:
            # Foreign writers may carry only file-level precision; our own
            # float32 output stays below this and round-trips untouched.
            directions = directions.copy()
            directions[active] /= norms[:, None]
    return OrientationField(directions, fa, voxel_size, origin)


def save_density(path, dmap: DensityMap, normalized: bool = False) -> None:
    data = dmap.normalized() if normalized else dmap.counts.astype(np.float64)
    with open(path, "wb") as fh:
        _write_grid_header(fh, b"DENS", dmap.counts.shape, dmap.voxel_size, dmap.origin)
        fh.write(np.ascontiguousarray(_x_fastest(data), dtype="<f4").tobytes())


def load_density(path) -> DensityMap:
    with open(path, "rb") as fh:
        dims, voxel_size, origin = _read_grid_header(fh, b"DENS", path)
        n = dims[0] * dims[1] * dims[2]
        raw = np.frombuffer(_read_exact(fh, n * 4, "density payload"), dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    return DensityMap(_from_x_fastest(raw.astype(np.float64), dims), voxel_size, origin)


def fmt_float(x: float) -> str:
    """Floats in CSV output carry 9 significant digits."""
    return f"{x:.9g}"


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [fmt_float(c) if isinstance(c, float) else str(c) for c in row]
            fh.write(",".join(cells) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty CSV")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


@dataclass
class RunConfig:
    """Typed view of a key=value run-config file; unknown keys are rejected."""

    n_candidates: int = 10000
    k: int = 3000
    m: int = 12
    init_rule: str = "longest"
    step_mm: float = 0.1
    max_angle_deg: float = 10.0
    fa_min: float = 0.1
    min_length_mm: float = 10.0
    max_extrap_fraction: float = 0.30
    poly_order: int = 3
    r2_threshold: float = 0.9
    sdcv_support: str = "all"
    spacing_mm: float = 1.0
    n_slices: int = 5
    out_dir: str = "."

    def __post_init__(self):
        if self.init_rule not in ("longest", "index"):
            raise ConfigError(f"init_rule must be 'longest' or 'index', got {self.init_rule!r}")
        if self.sdcv_support not in ("all", "nonzero"):
            raise ConfigError(f"sdcv_support must be 'all' or 'nonzero', got {self.sdcv_support!r}")
        if self.poly_order != 3:
            raise ConfigError("poly_order must be 3")
        positive = (
            "n_candidates", "k", "m", "step_mm", "max_angle_deg", "fa_min",
            "min_length_mm", "max_extrap_fraction", "spacing_mm", "n_slices",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.k > self.n_candidates:
            raise ConfigError("k cannot exceed n_candidates")
        if not 0 < self.max_extrap_fraction < 1:
            raise ConfigError("max_extrap_fraction must be in (0, 1)")


def load_run_config(path) -> RunConfig:
    """Parse a plain-text key=value file; '#' starts a comment."""
    types = {f.name: f.type for f in fields(RunConfig)}
    kwargs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if types[key] == "int":
                kwargs[key] = int(value)
            elif types[key] == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return RunConfig(**kwargs)
