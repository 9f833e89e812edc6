"""Core data types and on-disk formats.

Coordinate conventions used throughout the package:

* A grid array has shape ``(C, n, n, n)`` indexed ``[c, x, y, z]``; a
  single-channel grid may also be passed as a bare ``(n, n, n)`` array.
* ``y`` is up and the un-rotated line of sight runs along ``+z``, so ray
  position ``k`` equals ``z`` and ``k = 0`` is the voxel nearest the camera.
* Image row ``= n - 1 - y`` and image column ``= x``, so renders are upright.
* Rotations pivot about the continuous grid center ``((n-1)/2,) * 3``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterator, Literal, Union

import numpy as np

__all__ = [
    "VoxelGrid",
    "Viewpoint",
    "ViewpointSet",
    "ProjectionConfig",
    "VoxgFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "OutOfRangeError",
    "flat_index",
    "unflat_index",
    "write_grid",
    "read_grid",
    "write_image_pgm",
    "read_image_pgm",
    "check_image",
]

PathType = Union[str, "PathLike[str]"]

VOXG_MAGIC = b"VOXG"
VOXG_VERSION = 1
_VOXG_HEADER = struct.Struct("<4sBBH")


class VoxgFormatError(ValueError):
    """Base class for malformed VOXG files."""


class BadMagicError(VoxgFormatError):
    pass


class TruncatedPayloadError(VoxgFormatError):
    pass


class OutOfRangeError(VoxgFormatError):
    """Occupancy value outside [0, 1]."""


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """A ``channels x n^3`` occupancy field with values in [0, 1].

    ``values`` is stored with shape ``(channels, n, n, n)``; its C-order
    flattening matches the VOXG layout ``((c*n + x)*n + y)*n + z``. The
    array is made read-only on construction.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, copy=True)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4 or not (v.shape[1] == v.shape[2] == v.shape[3]):
            raise ValueError(f"expected (C, n, n, n) or (n, n, n) array, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("channels and n must be >= 1")
        if not np.issubdtype(v.dtype, np.floating):
            v = v.astype(np.float32)
        if not np.all((v >= 0) & (v <= 1)):
            raise OutOfRangeError("occupancy values must lie in [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n: int, channels: int = 1, dtype=np.float32) -> "VoxelGrid":
        return cls(np.zeros((channels, n, n, n), dtype=dtype))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.values.shape, self.values.tobytes()))


def flat_index(c, x, y, z, n: int):
    """Position of voxel ``(c, x, y, z)`` in the flat VOXG payload."""
    return ((c * n + x) * n + y) * n + z


def unflat_index(i, n: int):
    """Inverse of :func:`flat_index`; returns ``(c, x, y, z)``."""
    i, z = divmod(i, n)
    i, y = divmod(i, n)
    c, x = divmod(i, n)
    return c, x, y, z


@dataclass(frozen=True)
class Viewpoint:
    """View direction in radians: ``theta`` elevation about x, ``phi`` azimuth about y."""

    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not (-math.pi / 2 <= self.theta <= math.pi / 2):
            raise ValueError(f"theta={self.theta} outside [-pi/2, pi/2]")
        if not (0.0 <= self.phi < 2 * math.pi):
            raise ValueError(f"phi={self.phi} outside [0, 2*pi)")

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> "Viewpoint":
        return cls(math.radians(theta_deg), math.radians(phi_deg % 360.0))

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta)

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)


@dataclass(frozen=True)
class ViewpointSet:
    """Ordered views; the default is eight azimuths 45 degrees apart at zero elevation."""

    views: tuple = field(default_factory=lambda: ViewpointSet.evenly_spaced(8).views)

    @classmethod
    def evenly_spaced(cls, count: int = 8, theta: float = 0.0) -> "ViewpointSet":
        if count < 1:
            raise ValueError("count must be >= 1")
        return cls(tuple(Viewpoint(theta, 2 * math.pi * j / count) for j in range(count)))

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self) -> Iterator[Viewpoint]:
        return iter(self.views)

    def __getitem__(self, i) -> Viewpoint:
        return self.views[i]


@dataclass(frozen=True)
class ProjectionConfig:
    """Parameters shared by the projection operators.

    ``tau`` is the accessibility falloff. ``supersample`` casts rays on an
    ``(s*n)^2`` image plane (always trilinear) and box-averages back to
    ``n^2``. Samples falling outside the grid read as zero occupancy.
    """

    tau: float = 1.0
    resampling: Literal["nearest", "trilinear"] = "trilinear"
    supersample: int = 2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.resampling not in ("nearest", "trilinear"):
            raise ValueError(f"unknown resampling mode {self.resampling!r}")
        if int(self.supersample) != self.supersample or self.supersample < 1:
            raise ValueError("supersample must be a positive integer")


def check_image(img, channels: bool = False) -> np.ndarray:
    """Validate an image array (``(h, w)``, or ``(C, h, w)`` when ``channels``)."""
    a = np.asarray(img)
    if a.ndim != (3 if channels else 2) or 0 in a.shape:
        raise ValueError(f"bad image shape {a.shape}")
    if not np.all((a >= 0) & (a <= 1)):
        raise ValueError("image values must lie in [0, 1]")
    return a


def write_grid(grid: VoxelGrid, path: PathType) -> None:
    """Write ``grid`` as a VOXG file (little-endian float32 payload)."""
    if not isinstance(grid, VoxelGrid):
        grid = VoxelGrid(grid)
    if grid.channels > 255 or grid.n > 65535:
        raise ValueError("grid too large for the VOXG header")
    header = _VOXG_HEADER.pack(VOXG_MAGIC, VOXG_VERSION, grid.channels, grid.n)
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_grid(path: PathType) -> VoxelGrid:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _VOXG_HEADER.size:
        if data[:4] != VOXG_MAGIC[: len(data[:4])]:
            raise BadMagicError(f"{path}: not a VOXG file")
        raise TruncatedPayloadError(f"{path}: truncated header")
    magic, version, channels, n = _VOXG_HEADER.unpack_from(data)
    if magic != VOXG_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VOXG_VERSION:
        raise VoxgFormatError(f"{path}: unsupported version {version}")
    count = channels * n**3
    expected = _VOXG_HEADER.size + 4 * count
    if len(data) < expected:
        raise TruncatedPayloadError(f"{path}: expected {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise VoxgFormatError(f"{path}: {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=_VOXG_HEADER.size)
    values = values.astype(np.float32).reshape(channels, n, n, n)
    try:
        return VoxelGrid(values)
    except OutOfRangeError as e:
        raise OutOfRangeError(f"{path}: {e}") from None


def _quantize(img: np.ndarray) -> np.ndarray:
    # round half up
    return np.floor(255.0 * np.asarray(img, dtype=np.float64) + 0.5).astype(np.uint8)


def write_image_pgm(img, path: PathType) -> None:
    """Write a single-channel image with values in [0, 1] as binary PGM (P5, maxval 255)."""
    a = check_image(img)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(a).tobytes())


def read_image_pgm(path: PathType) -> np.ndarray:
    """Read a P5 PGM with maxval 255 back into a float64 array in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only P5 PGM with maxval 255 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = data[pos + 1 : pos + 1 + w * h]
    if len(pixels) != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w) / 255.0


def as_grid_array(grid) -> np.ndarray:
    """Return ``grid`` as a float64 ``(C, n, n, n)`` array (no range validation)."""
    a = np.asarray(grid, dtype=np.float64)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4 or not (a.shape[1] == a.shape[2] == a.shape[3]) or 0 in a.shape:
        raise ValueError(f"expected (C, n, n, n) or (n, n, n) grid, got shape {a.shape}")
    return a

