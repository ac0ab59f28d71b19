import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from todo_attn import tgrd
from todo_attn.errors import TgrdFormatError
from todo_attn.grid import TokenGrid


def test_header_layout():
    g = TokenGrid(np.arange(6, dtype=np.float32).reshape(1, 2, 3))
    buf = tgrd.encode(g)
    assert buf[:4] == b"TGRD"
    assert struct.unpack("<4I", buf[4:20]) == (1, 1, 2, 3)
    assert len(buf) == 20 + 6 * 4
    assert struct.unpack("<6f", buf[20:]) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_round_trip_is_bitwise(arr):
    g = TokenGrid(arr)
    again = tgrd.decode(tgrd.encode(g))
    assert again.equals(g)
    assert tgrd.encode(again) == tgrd.encode(g)


def test_file_round_trip(tmp_path, rng):
    g = TokenGrid(rng.standard_normal((3, 4, 5)).astype(np.float32))
    path = tmp_path / "g.tgrd"
    tgrd.write(path, g)
    assert tgrd.read(path).equals(g)


def _valid():
    return tgrd.encode(TokenGrid(np.ones((2, 2, 2), dtype=np.float32)))


def test_bad_magic():
    with pytest.raises(TgrdFormatError) as err:
        tgrd.decode(b"XGRD" + _valid()[4:])
    assert err.value.offset == 0


def test_bad_version():
    buf = bytearray(_valid())
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(TgrdFormatError, match="version") as err:
        tgrd.decode(bytes(buf))
    assert err.value.offset == 4


def test_truncated_payload_names_lengths():
    buf = _valid()[:-3]
    with pytest.raises(TgrdFormatError) as err:
        tgrd.decode(buf)
    msg = str(err.value)
    assert "expected file length 52" in msg and "actual 49" in msg
    assert err.value.offset == 49


def test_trailing_bytes_rejected():
    with pytest.raises(TgrdFormatError, match="trailing"):
        tgrd.decode(_valid() + b"\x00")


def test_truncated_header():
    with pytest.raises(TgrdFormatError, match="header"):
        tgrd.decode(_valid()[:10])


def test_zero_dimension_rejected():
    buf = bytearray(_valid())
    buf[16:20] = struct.pack("<I", 0)
    with pytest.raises(TgrdFormatError, match="dim"):
        tgrd.decode(bytes(buf[:20]))
