import numpy as np
import pytest
from hypothesis import given, strategies as st

from voterperc import io


@given(st.lists(st.integers(0, 1), max_size=200))
def test_rle_round_trip(bits):
    first, runs = io.rle_encode(bits)
    assert io.rle_decode(first, runs) == bits


def test_rle_shapes():
    assert io.rle_encode([]) == (0, [])
    assert io.rle_encode([1, 1, 1]) == (1, [3])
    assert io.rle_encode([0, 1, 1, 0]) == (0, [1, 2, 1])


def test_json_round_trip_with_numpy_values(tmp_path):
    payload = {
        "count": np.int64(7),
        "rate": np.float64(0.25),
        "table": np.arange(4),
        "nested": {"flag": np.bool_(True)},
    }
    p = io.write_json(tmp_path / "doc.json", payload)
    doc = io.read_json(p)
    assert doc["count"] == 7
    assert doc["rate"] == 0.25
    assert doc["table"] == [0, 1, 2, 3]
    assert doc["nested"]["flag"] is True
    assert doc["schema_version"] == io.SCHEMA_VERSION


def test_json_rejects_exotic_objects(tmp_path):
    with pytest.raises(TypeError):
        io.write_json(tmp_path / "bad.json", {"x": object()})


def test_csv_round_trip_with_comments(tmp_path):
    header = ["a", "b", "c"]
    rows = [[1, 2.5, "x"], [-3, 0.0, "y"]]
    p = io.write_csv(tmp_path / "t.csv", header, rows,
                     comments=["config: demo", "second line"])
    comments, hdr, got = io.read_csv(p)
    assert comments == ["config: demo", "second line"]
    assert hdr == header
    assert got == [["1", "2.5", "x"], ["-3", "0.0", "y"]]


def test_write_is_deterministic(tmp_path):
    payload = {"a": 1, "b": [1, 2, 3], "c": {"z": 0.5}}
    p1 = io.write_json(tmp_path / "one.json", payload)
    p2 = io.write_json(tmp_path / "two.json", payload)
    assert p1.read_bytes() == p2.read_bytes()


def test_format_float_locale_free():
    assert "." in io.format_float(0.5)
    assert io.format_float(2) == "2.0"
