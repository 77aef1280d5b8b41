import struct

import numpy as np
import pytest

from twophase.core import GeometryMask, GridSpec, ObstacleSpec, ScenarioParams, build_geometry_mask
from twophase.records import (RecordFormatError, SimulationRecord, decode_record, encode_record, read_record,
                              write_record)


def random_record(rng, T=None):
    g = GridSpec(int(rng.choice([16, 32, 48])), int(rng.choice([16, 32])))
    n_obs = int(rng.integers(0, 3))
    obs = tuple(ObstacleSpec(float(rng.uniform(0, g.domain_width)), float(rng.uniform(0.4, 0.7)),
                             float(rng.uniform(0.05, 0.1))) for _ in range(n_obs))
    sc = ScenarioParams(float(rng.uniform(0.05, 0.25)), float(rng.uniform(-10, -1)), obs,
                        int(rng.integers(0, 2 ** 40)))
    fluid = rng.random(g.shape) > 0.3
    mask = GeometryMask(g, fluid, None, sc.pore_radius)
    T = int(rng.integers(1, 6)) if T is None else T
    frames = np.where(fluid, rng.uniform(-1, 1, (T,) + g.shape), 0.0).astype(np.float32)
    return SimulationRecord(sc, mask, frames, float(rng.uniform(0.001, 0.05)), int(rng.integers(1, 10)),
                            bool(rng.integers(0, 2)))


def test_round_trip_randomized(tmp_path):
    rng = np.random.default_rng(11)
    for n in range(100):
        rec = random_record(rng)
        back = read_record(write_record(rec, tmp_path / f"r{n}.tpf"))
        assert back.same_as(rec)


def test_round_trip_real_mask():
    g = GridSpec(48, 32)
    sc = ScenarioParams(0.2, -4.0, (ObstacleSpec(0.6, 0.9, 0.15),), 3)
    mask = build_geometry_mask(sc, g)
    rec = SimulationRecord(sc, mask, np.zeros((2,) + g.shape, np.float32), 0.02, 5)
    back = decode_record(encode_record(rec))
    assert back.same_as(rec)
    assert np.array_equal(back.mask.cavity, mask.cavity)


def test_payload_size_arithmetic():
    g = GridSpec(96, 64)
    sc = ScenarioParams(0.2, -4.0)
    rec = SimulationRecord(sc, GeometryMask.all_fluid(g), np.zeros((500, 64, 96), np.float32), 0.02, 5)
    buf = encode_record(rec)
    header = 4 + struct.calcsize("<I3IdI") + struct.calcsize("<ddI") + struct.calcsize("<dqB")
    assert len(buf) == header + 64 * 96 + 500 * 64 * 96 * 4 + 4
    assert 500 * 64 * 96 * 4 == 12_288_000


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate", "flip"])
def test_corruption_rejected(mutate):
    rec = random_record(np.random.default_rng(5), T=3)
    buf = bytearray(encode_record(rec))
    if mutate == "magic":
        buf[:4] = b"XXXX"
    elif mutate == "version":
        buf[4:8] = struct.pack("<I", 99)
    elif mutate == "truncate":
        buf = buf[: len(buf) // 2]
    else:
        buf[-20] ^= 0xFF
    with pytest.raises(RecordFormatError):
        decode_record(bytes(buf))
