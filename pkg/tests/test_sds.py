import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from succinct_kg.errors import FormatError
from succinct_kg.sds import BitMap, WaveletTree, deserialize, read


def naive_rank(seq, i, c):
    return sum(1 for x in seq[:i] if x == c)


def naive_select(seq, k, c):
    hits = [j for j, x in enumerate(seq) if x == c]
    if k == len(hits) + 1:
        return len(seq)
    return hits[k - 1]


WT_SAMPLE = "ABFECBCCADEF"
WT_SAMPLE_CODES = [ord(ch) - ord("A") for ch in WT_SAMPLE]


class TestBitMap:
    bm = BitMap([1, 0, 1, 1])

    @pytest.mark.parametrize("i,expected", [(0, 1), (1, 0), (2, 1), (3, 1)])
    def test_access(self, i, expected):
        assert self.bm.access(i) == expected

    def test_access_out_of_range(self):
        with pytest.raises(IndexError):
            self.bm.access(4)
        with pytest.raises(IndexError):
            self.bm.access(-1)

    def test_rank_examples(self):
        assert self.bm.rank(0, 1) == 0
        assert self.bm.rank(4, 1) == 3
        assert self.bm.rank(3, 0) == naive_rank([1, 0, 1, 1], 3, 0) == 1
        with pytest.raises(IndexError):
            self.bm.rank(5, 1)

    def test_select_examples(self):
        assert self.bm.select(1, 1) == 0
        assert self.bm.select(3, 1) == naive_select([1, 0, 1, 1], 3, 1) == 3
        assert self.bm.select(4, 1) == 4  # sentinel
        assert self.bm.select(1, 0) == 1
        assert self.bm.select(2, 0) == 4
        with pytest.raises(IndexError):
            self.bm.select(5, 1)
        with pytest.raises(IndexError):
            self.bm.select(0, 1)

    def test_ps_prefix(self):
        bm = BitMap([1, 0, 0, 1, 0])
        assert [bm.access(i) for i in range(3)] == [1, 0, 0]

    def test_empty(self):
        bm = BitMap([])
        assert len(bm) == 0
        assert bm.rank(0, 1) == 0
        assert bm.select(1, 1) == 0
        assert len(deserialize(bm.serialize())) == 0

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            BitMap([0, 2])

    @pytest.mark.parametrize("n", [1, 63, 64, 65, 127, 128, 1000])
    def test_word_boundaries(self, n):
        rng = random.Random(n)
        bits = [rng.randint(0, 1) for _ in range(n)]
        bm = BitMap(bits)
        for i in range(n + 1):
            assert bm.rank(i, 1) + bm.rank(i, 0) == i
            assert bm.rank(i, 1) == naive_rank(bits, i, 1)
        for c in (0, 1):
            for k in range(1, bits.count(c) + 2):
                assert bm.select(k, c) == naive_select(bits, k, c)
        assert bm.bits(0, n).tolist() == bits
        assert bm.positions(0, n).tolist() == [j for j, b in enumerate(bits) if b]

    def test_round_trip(self):
        bm2 = deserialize(self.bm.serialize())
        assert bm2 == self.bm
        for i in range(5):
            assert bm2.rank(i, 1) == self.bm.rank(i, 1)
        for k in range(1, 5):
            assert bm2.select(k, 1) == self.bm.select(k, 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=700))
def test_bitmap_matches_naive(bits):
    bm = BitMap(bits)
    for i in range(len(bits)):
        assert bm.access(i) == bits[i]
    for i in range(len(bits) + 1):
        assert bm.rank(i, 1) == naive_rank(bits, i, 1)
        assert bm.rank(i, 0) == i - bm.rank(i, 1)
    for c in (0, 1):
        for k in range(1, bits.count(c) + 1):
            j = bm.select(k, c)
            assert bits[j] == c and bm.rank(j, c) == k - 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=400), st.data())
def test_rank_select_inverse(bits, data):
    bm = BitMap(bits)
    i = data.draw(st.integers(0, len(bits) - 1))
    for c in (0, 1):
        r = bm.rank(i, c)
        if r < bm.count(c):
            assert bm.select(r + 1, c) >= i


class TestWaveletTree:
    wt = WaveletTree(WT_SAMPLE_CODES, 3)

    def test_root_split(self):
        root = self.wt.levels[0].to01()
        zeros = "".join(ch for ch, b in zip(WT_SAMPLE, root) if b == "0")
        ones = "".join(ch for ch, b in zip(WT_SAMPLE, root) if b == "1")
        assert zeros == "ABCBCCAD"
        assert ones == "FEEF"

    def test_sample_ops(self):
        assert self.wt.access(2) == 5
        assert self.wt.rank(6, 2) == naive_rank(WT_SAMPLE_CODES, 6, 2) == 1
        assert self.wt.select(2, 2) == naive_select(WT_SAMPLE_CODES, 2, 2) == 6

    def test_empty(self):
        wt = WaveletTree([], 3)
        assert len(wt) == 0
        assert wt.rank(0, 1) == 0
        assert wt.select(1, 1) == 0
        assert wt.to_list() == []

    def test_constant_sequence(self):
        wt = WaveletTree([7, 7, 7], 3)
        assert wt.levels[0].to01() == "111"
        assert [wt.access(i) for i in range(3)] == [7, 7, 7]

    def test_overflow_rejected(self):
        with pytest.raises(ValueError):
            WaveletTree([8], 3)

    def test_absent_symbol(self):
        assert self.wt.rank(12, 6) == 0
        assert self.wt.rank(12, 99) == 0
        assert self.wt.select(1, 6) == 12
        with pytest.raises(IndexError):
            self.wt.select(2, 6)

    def test_round_trip_all_positions(self):
        wt2 = deserialize(self.wt.serialize())
        assert [wt2.access(i) for i in range(12)] == WT_SAMPLE_CODES

    def test_wide_codes(self):
        seq = [(1 << 63) | 5, 3, (1 << 63), 3]
        wt = WaveletTree(seq, 64)
        assert wt.to_list() == seq
        assert wt.select(2, 3) == 3
        assert wt.rank(4, 1 << 63) == 1

    def test_extract_matches_access(self):
        rng = random.Random(7)
        seq = [rng.randrange(1000) for _ in range(3000)]
        wt = WaveletTree(seq)
        for _ in range(50):
            a = rng.randrange(3000)
            b = rng.randrange(a, 3001)
            assert wt.extract(a, b).tolist() == seq[a:b]


class TestRangeSearch:
    wt = WaveletTree([2, 2, 3, 3, 3, 5], 3)

    def test_hits(self):
        assert self.wt.range_search(0, 6, 3) == [2, 3, 4]

    def test_absent(self):
        assert self.wt.range_search(0, 6, 4) == []

    def test_empty_interval(self):
        assert self.wt.range_search(3, 3, 3) == []

    def test_reversed(self):
        with pytest.raises(IndexError):
            self.wt.range_search(4, 3, 3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 40), max_size=120), st.lists(st.integers(0, 40), max_size=40),
       st.integers(0, 41))
def test_range_search_on_sorted_segment(prefix, segment, c):
    segment = sorted(segment)
    seq = prefix + segment + prefix
    wt = WaveletTree(seq, 6)
    a, b = len(prefix), len(prefix) + len(segment)
    assert wt.range_search(a, b, c) == [j for j in range(a, b) if seq[j] == c]
    assert wt.occurrences(0, len(seq), c) == [j for j, x in enumerate(seq) if x == c]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2**16 - 1), max_size=300))
def test_wavelet_matches_naive(seq):
    wt = WaveletTree(seq, 16)
    assert wt.to_list() == seq
    symbols = set(seq) | {0, 2**16 - 1}
    for c in symbols:
        hits = [j for j, x in enumerate(seq) if x == c]
        for i in range(0, len(seq) + 1, max(1, len(seq) // 10)):
            assert wt.rank(i, c) == naive_rank(seq, i, c)
        for k, j in enumerate(hits, 1):
            assert wt.select(k, c) == j
            assert wt.rank(j, c) == k - 1


def test_compactness():
    rng = np.random.default_rng(0)
    n, w = 20000, 12
    wt = WaveletTree(rng.integers(0, 2**w, n), w)
    blob = wt.serialize()
    assert len(blob) * 8 <= 2 * n * w + 8 * 64


class TestSerialization:
    def test_bad_magic(self):
        blob = bytearray(BitMap([1, 0]).serialize())
        blob[0:4] = b"XXXX"
        with pytest.raises(FormatError):
            deserialize(bytes(blob))

    def test_truncated(self):
        blob = WaveletTree(WT_SAMPLE_CODES, 3).serialize()
        for cut in (3, 10, len(blob) - 1):
            with pytest.raises(FormatError):
                deserialize(blob[:cut])

    def test_corrupt_rank_index(self):
        blob = bytearray(BitMap([1] * 70).serialize())
        blob[-1] ^= 0xFF
        with pytest.raises(FormatError):
            deserialize(bytes(blob))

    def test_layout_is_little_endian(self):
        blob = BitMap([1, 0, 1, 1]).serialize()
        assert blob[:4] == b"SKG1"
        assert blob[4] == 0x01
        assert blob[5:13] == (4).to_bytes(8, "little")
        assert blob[13] == 0b1101
        assert blob[14:18] == (0).to_bytes(4, "little")
        assert len(blob) == 18

    def test_read_returns_offset(self):
        a = BitMap([1, 1]).serialize()
        b = WaveletTree([1, 2], 2).serialize()
        obj, end = read(a + b)
        assert end == len(a)
        obj2, end2 = read(a + b, end, expect=WaveletTree)
        assert obj2.to_list() == [1, 2] and end2 == len(a) + len(b)
        with pytest.raises(FormatError):
            read(a, expect=WaveletTree)
