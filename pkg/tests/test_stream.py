"""Byte-stream decoding: exhaustive small-range enumerations and determinism."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predfuzz.errors import InvalidRange, InvalidWeights
from predfuzz.stream import ParamStream


def test_single_byte_range_is_bijective():
    # [0, 255] over every single-byte stream: each byte maps to itself
    seen = []
    for b in range(256):
        s = ParamStream(bytes([b]))
        seen.append(s.next_int(0, 255))
        assert s.cursor == 1
    assert seen == list(range(256))


def test_weighted_choice_even_split_over_all_bytes():
    # weights [1, 1]: exhaustive enumeration over all 256 single-byte streams
    counts = [0, 0]
    for b in range(256):
        s = ParamStream(bytes([b]))
        counts[s.choose_weighted([1, 1])] += 1
        assert s.cursor == 1
    assert counts == [128, 128]


def test_weighted_choice_skips_zero_weight():
    # weights [1, 0, 3]: total 4, one byte consumed; index 1 impossible
    counts = [0, 0, 0]
    for b in range(256):
        s = ParamStream(bytes([b]))
        counts[s.choose_weighted([1, 0, 3])] += 1
    assert counts[1] == 0
    assert counts == [64, 0, 192]


def test_weighted_choice_rejects_all_zero():
    s = ParamStream(b"\x00\x01")
    with pytest.raises(InvalidWeights):
        s.choose_weighted([0, 0.0, 0])


def test_next_int_minimal_byte_consumption():
    # span 300 needs two bytes, span 256 needs one, span 1 needs none
    s = ParamStream(bytes(range(8)))
    s.next_int(0, 299)
    assert s.cursor == 2
    s.next_int(0, 255)
    assert s.cursor == 3
    assert s.next_int(7, 7) == 7
    assert s.cursor == 3


def test_next_int_empty_range_rejected():
    with pytest.raises(InvalidRange):
        ParamStream(b"ab").next_int(3, 2)


def test_next_int_two_byte_decode_is_big_endian_modulo():
    # hand-computed: bytes 0x01 0x2c = 300 -> 300 % 300 = 0; 0x01 0x2d -> 1
    assert ParamStream(b"\x01\x2c").next_int(0, 299) == 0
    assert ParamStream(b"\x01\x2d").next_int(0, 299) == 1
    assert ParamStream(b"\x00\x05").next_int(10, 309) == 15


def test_next_bool_lsb():
    assert ParamStream(b"\x00").next_bool() is False
    assert ParamStream(b"\x01").next_bool() is True
    assert ParamStream(b"\x02").next_bool() is False
    assert ParamStream(b"\xff").next_bool() is True


def test_next_bytes_and_remaining():
    s = ParamStream(b"abcdef")
    assert s.next_bytes(2) == b"ab"
    assert s.remaining == 4
    assert s.next_bytes(4) == b"cdef"
    assert s.remaining == 0
    assert s.exhausted


@given(st.binary(max_size=64), st.integers(0, 2**63 - 1))
def test_replay_determinism(data, seed):
    a = ParamStream(data, seed)
    b = ParamStream(data, seed)
    script_a = [a.next_int(0, 1000), a.next_bool(), a.next_bytes(7), a.next_int(5, 5)]
    script_b = [b.next_int(0, 1000), b.next_bool(), b.next_bytes(7), b.next_int(5, 5)]
    assert script_a == script_b
    assert a.cursor == b.cursor


@given(st.binary(min_size=8, max_size=32), st.binary(min_size=1, max_size=16))
def test_draws_inside_prefix_unaffected_by_suffix(data, suffix):
    # decisions that complete within the finite bytes depend only on them
    a = ParamStream(data, 1)
    b = ParamStream(data + suffix, 2)
    for _ in range(4):
        assert a.next_int(0, 255) == b.next_int(0, 255)
    assert a.next_bytes(4) == b.next_bytes(4)


def test_overflow_is_deterministic_and_prefix_stable():
    a = ParamStream(b"", 1234)
    b = ParamStream(b"", 1234)
    assert [a.next_int(0, 255) for _ in range(32)] == [
        b.next_int(0, 255) for _ in range(32)
    ]
    # grouping of reads must not matter: byte i past the end is fixed
    c = ParamStream(b"", 1234)
    d = ParamStream(b"", 1234)
    assert c.next_bytes(8) == d.next_bytes(3) + d.next_bytes(5)


def test_overflow_seed_changes_overflow_draws():
    a = ParamStream(b"", 1)
    b = ParamStream(b"", 2)
    assert a.next_bytes(16) != b.next_bytes(16)


def test_exhaustion_is_total():
    s = ParamStream(b"\x41", 99)
    assert s.next_bytes(1) == b"\x41"
    # past the end: still serves draws, cursor keeps counting
    s.next_int(0, 10**9)
    assert s.cursor > 1


@settings(max_examples=200)
@given(st.integers(-500, 500), st.integers(0, 1000), st.binary(max_size=8))
def test_next_int_stays_in_range(lo, width, data):
    s = ParamStream(data, 7)
    v = s.next_int(lo, lo + width)
    assert lo <= v <= lo + width


def test_fractional_weights_select_positive_only():
    for b in range(0, 256, 7):
        s = ParamStream(bytes([b, b ^ 0xA5]))
        idx = s.choose_weighted([0.0, 0.5, 1.5])
        assert idx in (1, 2)
