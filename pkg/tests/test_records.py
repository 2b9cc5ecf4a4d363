import numpy as np
import pytest

from actcodec.checkpoint import load_checkpoint, save_checkpoint
from actcodec.records import (load_chunk_records, load_code_records,
                              save_chunk_records, save_code_records)


def test_checkpoint_preserves_dtypes_and_values(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "f32": rng.standard_normal((3, 4)).astype(np.float32),
        "f64": rng.standard_normal(5),
        "i32": rng.integers(-100, 100, size=7).astype(np.int32),
        "i64": rng.integers(0, 10, size=(2, 2)),
        "bools": rng.uniform(size=6) > 0.5,
        "scalarish": np.array([3], dtype=np.int64),
    }
    save_checkpoint(tmp_path / "x.bin", {"note": "hi", "nested": {"a": 1}}, arrays)
    meta, loaded = load_checkpoint(tmp_path / "x.bin")
    assert meta == {"note": "hi", "nested": {"a": 1}}
    for name, arr in arrays.items():
        assert loaded[name].dtype == arr.dtype or loaded[name].dtype.kind == arr.dtype.kind
        assert np.array_equal(loaded[name], arr), name


def test_checkpoint_deterministic_bytes(tmp_path):
    arrays = {"b": np.arange(4.0), "a": np.ones(2, np.float32)}
    save_checkpoint(tmp_path / "one.bin", {"k": 1}, arrays)
    save_checkpoint(tmp_path / "two.bin", {"k": 1}, dict(reversed(arrays.items())))
    assert (tmp_path / "one.bin").read_bytes() == (tmp_path / "two.bin").read_bytes()


def test_code_records_round_trip(tmp_path):
    codes = np.random.default_rng(1).integers(0, 16, size=(5, 3, 1, 7))
    save_code_records(tmp_path / "c.bin", codes, {"codebook_size": 16})
    loaded, meta = load_code_records(tmp_path / "c.bin")
    assert np.array_equal(loaded, codes)
    assert meta["codec"] == {"codebook_size": 16}
    with pytest.raises(ValueError):
        save_code_records(tmp_path / "bad.bin", codes[0], {})


def test_chunk_records_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    values = rng.uniform(-1, 1, (4, 10, 3)).astype(np.float32)
    valid = rng.uniform(size=(4, 10)) > 0.2
    tags = ["a", "b", "a", "c"]
    save_chunk_records(tmp_path / "ch.bin", values, valid, tags)
    v2, m2, t2 = load_chunk_records(tmp_path / "ch.bin")
    assert np.array_equal(v2, values) and np.array_equal(m2, valid) and t2 == tags


def test_kind_guard(tmp_path):
    save_chunk_records(tmp_path / "ch.bin", np.zeros((1, 2, 2), np.float32),
                       np.ones((1, 2), bool), ["x"])
    with pytest.raises(ValueError, match="code-record"):
        load_code_records(tmp_path / "ch.bin")
