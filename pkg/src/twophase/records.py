"""Simulation records and their binary file format.

Layout (little-endian)::

    magic "TPF1" | version u32 | H, W, T u32 | dt f64 | stride u32
    | pore_radius f64 | charge f64 | n_obstacles u32 | (cx, cy, r f64) * n
    | domain_width f64 | rng_seed i64 | valid u8
    | mask H*W u8 (1 = FLUID) | frames T*H*W f32 (time-major, row-major)
    | crc32 u32 over every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GeometryMask, GridSpec, ObstacleSpec, ScenarioParams, build_geometry_mask

MAGIC = b"TPF1"
VERSION = 1


class RecordFormatError(ValueError):
    pass


@dataclass(eq=False)
class SimulationRecord:
    scenario: ScenarioParams
    mask: GeometryMask
    frames: np.ndarray
    dt: float
    stride: int
    valid: bool = True

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[1:] != self.mask.grid.shape:
            raise ValueError(f"frames shape {self.frames.shape} does not match grid {self.mask.grid.shape}")

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def same_as(self, other: "SimulationRecord") -> bool:
        """Field-wise equality with bit-identical frames and mask."""
        return (self.scenario == other.scenario and self.dt == other.dt and self.stride == other.stride
                and self.valid == other.valid and self.grid == other.grid
                and np.array_equal(self.mask.fluid, other.mask.fluid)
                and self.frames.tobytes() == other.frames.tobytes())


def encode_record(record: SimulationRecord) -> bytes:
    sc = record.scenario
    H, W = record.grid.shape
    T = record.n_frames
    parts = [MAGIC, struct.pack("<I3IdI", VERSION, H, W, T, float(record.dt), int(record.stride)),
             struct.pack("<ddI", sc.pore_radius, sc.surface_charge, len(sc.obstacles))]
    for ob in sc.obstacles:
        parts.append(struct.pack("<ddd", ob.center_x, ob.center_y, ob.radius))
    parts.append(struct.pack("<dqB", record.grid.domain_width, int(sc.rng_seed), int(bool(record.valid))))
    parts.append(record.mask.labels.astype("<u1").tobytes())
    parts.append(record.frames.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_record(buf: bytes) -> SimulationRecord:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise RecordFormatError("bad magic; not a record file")
    if len(buf) < 4 + 28 + 20 + 4:
        raise RecordFormatError("truncated record header")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise RecordFormatError("checksum mismatch (corrupted or truncated file)")
    off = 4
    version, H, W, T, dt, stride = struct.unpack_from("<I3IdI", body, off)
    off += struct.calcsize("<I3IdI")
    if version != VERSION:
        raise RecordFormatError(f"unsupported record version {version}")
    radius, charge, n_obs = struct.unpack_from("<ddI", body, off)
    off += struct.calcsize("<ddI")
    obstacles = []
    for _ in range(n_obs):
        obstacles.append(ObstacleSpec(*struct.unpack_from("<ddd", body, off)))
        off += 24
    domain_width, seed, valid = struct.unpack_from("<dqB", body, off)
    off += struct.calcsize("<dqB")
    expected = off + H * W + 4 * T * H * W
    if len(body) != expected:
        raise RecordFormatError(f"payload size {len(body)} != expected {expected}")
    fluid = np.frombuffer(body, "<u1", H * W, off).reshape(H, W).astype(bool)
    off += H * W
    frames = np.frombuffer(body, "<f4", T * H * W, off).reshape(T, H, W).astype(np.float32)

    scenario = ScenarioParams(radius, charge, tuple(obstacles), seed)
    grid = GridSpec(W, H, domain_width)
    try:
        cavity = build_geometry_mask(scenario, grid).cavity
    except ValueError:
        cavity = None
    mask = GeometryMask(grid, fluid, cavity, radius)
    return SimulationRecord(scenario, mask, frames, dt, stride, bool(valid))


def write_record(record: SimulationRecord, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_record(record))
    return path


def read_record(path) -> SimulationRecord:
    return decode_record(Path(path).read_bytes())
