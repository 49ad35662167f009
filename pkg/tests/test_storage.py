import json
import struct
import zlib

import numpy as np
import pytest

from rankope.config import ExperimentConfig
from rankope.core import DatasetError, EstimatorSpec
from rankope.estimators import run_estimator
from rankope.storage import CorruptContainerError, load_dataset, save_dataset
from rankope.synthenv import generate_log, replication_rng

from conftest import make_dataset


def test_round_trip_small(tmp_path):
    ds = make_dataset(n=3, K=2, D=1)
    save_dataset(ds, tmp_path / "d.bin")
    assert load_dataset(tmp_path / "d.bin") == ds


def test_round_trip_empty(tmp_path):
    ds = make_dataset(n=0, n_contexts=1)
    save_dataset(ds, tmp_path / "e.bin")
    back = load_dataset(tmp_path / "e.bin")
    assert back.n == 0 and back == ds


def test_generated_round_trip_gives_identical_estimates(tmp_path):
    cfg = ExperimentConfig(n=300, catalogue=("independent", "cascade"))
    ds = generate_log(cfg, replication_rng(7, 0))
    save_dataset(ds, tmp_path / "g.bin")
    back = load_dataset(tmp_path / "g.bin")
    assert back == ds
    for name in ("SIPS", "snRIPS", "AIPS", "MRIPS", "MIIPS@1"):
        spec = EstimatorSpec.parse(name)
        assert run_estimator(back, spec).value == run_estimator(ds, spec).value


def test_truncated_file(tmp_path):
    ds = make_dataset()
    path = tmp_path / "t.bin"
    save_dataset(ds, path)
    raw = path.read_bytes()
    for cut in (5, len(raw) // 2, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(CorruptContainerError, match="corrupt container"):
            load_dataset(path)


def test_flipped_byte(tmp_path):
    path = tmp_path / "f.bin"
    save_dataset(make_dataset(), path)
    raw = bytearray(path.read_bytes())
    raw[-20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptContainerError, match="checksum"):
        load_dataset(path)


def _rewrite_embedding(path, value):
    """Overwrite e(0, 0) of sample 0 and fix the checksum."""
    raw = path.read_bytes()[:-4]
    hlen = struct.unpack_from("<I", raw, 10)[0]
    header = json.loads(raw[14 : 14 + hlen])
    offset = 14 + hlen + 8 * header["n_contexts"] * header["dim_x"] + 8 + 8 * header["K"]
    body = bytearray(raw)
    body[offset : offset + 8] = np.int64(value).tobytes()
    path.write_bytes(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))
    return header


def test_out_of_bound_embedding_names_sample_zero(tmp_path):
    path = tmp_path / "b.bin"
    save_dataset(make_dataset(E=2), path)
    header = _rewrite_embedding(path, 2)
    assert header["category_counts"][0] == 2
    with pytest.raises(DatasetError, match="sample 0"):
        load_dataset(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"NOTRANKS" + bytes(40))
    with pytest.raises(CorruptContainerError, match="corrupt container"):
        load_dataset(path)
