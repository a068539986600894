import numpy as np
import pytest

from heatlab import io as fio
from heatlab.field_grid import Field, make_grid


def test_roundtrip_and_header(tmp_path, rng):
    g = make_grid(2, 16, 3.0)
    f = Field(g, rng.normal(size=(3, 16, 16)))
    p = fio.write_field(f, tmp_path / "f.bin")
    raw = p.read_bytes()
    assert raw[:5] == b"HALF1"
    assert len(raw) == 37 + 8 * 3 * 256
    back = fio.read_field(p)
    assert back.grid == g
    np.testing.assert_array_equal(back.data, f.data)
    assert fio.field_hash(back) == fio.field_hash(f)


def test_corrupt_container_rejected():
    with pytest.raises(ValueError):
        fio.field_from_bytes(b"NOPE!" + bytes(40))


def test_csv_formats(tmp_path):
    p = fio.write_rows(tmp_path / "a.csv", ("x", "flag"), [(0.1, True), (1 / 3, False)])
    lines = p.read_text().splitlines()
    assert lines[0] == "x,flag"
    assert lines[1] == "0.10000000000000001,1"
    assert float(lines[2].split(",")[0]) == 1 / 3
    d = fio.write_dat(tmp_path / "a.dat", ("x", "y"), [(1, "a b")])
    assert d.read_text().splitlines() == ["# x y", '1 "a b"']


def test_keyvalue_roundtrip(tmp_path):
    fio.write_keyvalue(tmp_path / "m.txt", {"A": 3, "tol": 1e-8})
    assert fio.read_keyvalue(tmp_path / "m.txt") == {"A": "3", "tol": "1e-08"}
