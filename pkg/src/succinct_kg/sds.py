"""Succinct bitmaps and balanced wavelet trees.

Conventions used throughout the package:

* ``rank(i, c)`` counts occurrences of ``c`` at positions ``j < i``.
* ``select(k, c)`` is 1-ordinal and returns a 0-based position.  Asking for
  one past the last occurrence returns the sequence length, so block
  boundaries of the last block can be computed like every other block.

Binary layout (little-endian everywhere)::

    b"SKG1" | tag:u8 | length:u64 | payload

A bitmap payload is the raw bits (bit ``i`` is bit ``i & 7`` of byte
``i >> 3``) padded to a byte boundary, then one u32 cumulative rank per
64-bit word.  A wavelet tree payload is ``alphabet_bits:u8`` followed by one
length-prefixed bitmap blob per level.
"""

from __future__ import annotations

import struct
from bisect import bisect_right

import numpy as np

from .errors import FormatError

MAGIC = b"SKG1"
TAG_BITMAP = 0x01
TAG_WAVELET = 0x02
_HEADER = struct.Struct("<4sBQ")

_WORD = 64
_WORD_MASK = (1 << _WORD) - 1


def _popcount_words(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words).astype(np.uint32)


class BitMap:
    """Static bit sequence with rank/select/access support.

    The bits live in 64-bit words; a u32 cumulative rank per word gives
    constant-time rank and logarithmic select.
    """

    __slots__ = ("_n", "_np_words", "_words", "_ranks", "_ones", "_np_ranks", "_np_wext")

    def __init__(self, bits=()):
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max(initial=0) > 1:
            raise ValueError("bitmap values must be 0 or 1")
        self._init_from_words(_pack_bits(arr), int(arr.size))

    @classmethod
    def from_words(cls, words: np.ndarray, n: int) -> "BitMap":
        bm = cls.__new__(cls)
        bm._init_from_words(np.asarray(words, dtype=np.uint64), n)
        return bm

    def _init_from_words(self, words: np.ndarray, n: int):
        if n >= 1 << 32:
            raise ValueError("bitmaps are limited to 2**32 - 1 bits")
        self._n = n
        self._np_words = words
        self._words = words.tolist()
        pops = _popcount_words(words)
        ranks = np.zeros(len(words) + 1, dtype=np.uint32)
        np.cumsum(pops, out=ranks[1:])
        self._ranks = ranks.tolist()
        self._ones = self._ranks[-1]
        # numpy copies for batched rank; one padding word so i == n is addressable
        self._np_ranks = ranks.astype(np.int64)
        self._np_wext = np.concatenate([words, np.zeros(1, dtype=np.uint64)])

    def __len__(self):
        return self._n

    def __repr__(self):
        if self._n <= 64:
            return f"BitMap('{self.to01()}')"
        return f"BitMap(n={self._n}, ones={self._ones})"

    def __eq__(self, other):
        if not isinstance(other, BitMap):
            return NotImplemented
        return self._n == other._n and self._words == other._words

    def to01(self) -> str:
        return "".join(str(b) for b in self.bits(0, self._n).tolist())

    def count(self, c: int = 1) -> int:
        return self._ones if c else self._n - self._ones

    def access(self, i: int) -> int:
        if not 0 <= i < self._n:
            raise IndexError(f"bitmap index {i} out of range [0, {self._n})")
        return (self._words[i >> 6] >> (i & 63)) & 1

    __getitem__ = access

    def rank1(self, i: int) -> int:
        w = i >> 6
        r = self._ranks[w]
        off = i & 63
        if off:
            r += (self._words[w] & ((1 << off) - 1)).bit_count()
        return r

    def rank1_many(self, idx: np.ndarray) -> np.ndarray:
        """``rank1`` of every position in an int64 array (no bounds check)."""
        w = idx >> 6
        mask = (np.uint64(1) << (idx & 63).astype(np.uint64)) - np.uint64(1)
        return self._np_ranks[w] + np.bitwise_count(self._np_wext[w] & mask).astype(np.int64)

    def bits_at(self, idx: np.ndarray) -> np.ndarray:
        return ((self._np_wext[idx >> 6] >> (idx & 63).astype(np.uint64)) & np.uint64(1)
                ).astype(np.int64)

    def rank(self, i: int, c: int = 1) -> int:
        if not 0 <= i <= self._n:
            raise IndexError(f"rank bound {i} out of range [0, {self._n}]")
        ones = self.rank1(i)
        return ones if c else i - ones

    def select(self, k: int, c: int = 1) -> int:
        total = self.count(c)
        if k == total + 1:
            return self._n
        if not 1 <= k <= total:
            raise IndexError(f"select ordinal {k} out of range [1, {total + 1}]")
        ranks = self._ranks
        if c:
            w = bisect_right(ranks, k - 1) - 1
            word = self._words[w]
            k -= ranks[w]
        else:
            w = bisect_right(range(len(ranks)), k - 1, key=lambda j: 64 * j - ranks[j]) - 1
            word = ~self._words[w] & _WORD_MASK
            k -= 64 * w - ranks[w]
        for _ in range(k - 1):
            word &= word - 1
        return (w << 6) + (word & -word).bit_length() - 1

    def bits(self, a: int, b: int) -> np.ndarray:
        """Bits of positions ``[a, b)`` as a uint8 array."""
        if not 0 <= a <= b <= self._n:
            raise IndexError(f"bit range [{a}, {b}) out of [0, {self._n}]")
        if a == b:
            return np.zeros(0, dtype=np.uint8)
        w0, w1 = a >> 6, (b + 63) >> 6
        raw = np.unpackbits(self._np_words[w0:w1].view(np.uint8), bitorder="little")
        start = a - (w0 << 6)
        return raw[start:start + (b - a)]

    def positions(self, a: int, b: int, c: int = 1) -> np.ndarray:
        """Positions in ``[a, b)`` holding ``c``."""
        return np.flatnonzero(self.bits(a, b) == c) + a

    # -- serialization -------------------------------------------------

    def payload(self) -> bytes:
        nbytes = (self._n + 7) >> 3
        raw = self._np_words.astype("<u8").tobytes()[:nbytes]
        return raw + np.asarray(self._ranks[:-1], dtype="<u4").tobytes()

    def serialize(self) -> bytes:
        return _HEADER.pack(MAGIC, TAG_BITMAP, self._n) + self.payload()

    @classmethod
    def from_payload(cls, buf, n: int, offset: int = 0) -> tuple["BitMap", int]:
        nbytes = (n + 7) >> 3
        nwords = (n + 63) >> 6
        end = offset + nbytes + 4 * nwords
        if len(buf) < end:
            raise FormatError("truncated bitmap payload")
        raw = bytes(buf[offset:offset + nbytes]) + b"\0" * (nwords * 8 - nbytes)
        words = np.frombuffer(raw, dtype="<u8").astype(np.uint64)
        bm = cls.from_words(words, n)
        stored = np.frombuffer(bytes(buf[offset + nbytes:end]), dtype="<u4")
        if stored.tolist() != bm._ranks[:-1]:
            raise FormatError("bitmap rank index does not match its bits")
        return bm, end

    def nbytes(self) -> int:
        return len(self.payload())


def _pack_bits(arr: np.ndarray) -> np.ndarray:
    packed = np.packbits(arr, bitorder="little")
    pad = (-len(packed)) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
    return packed.view("<u8").astype(np.uint64)


class WaveletTree:
    """Balanced wavelet tree over fixed-width integer codes.

    Levels are stored pointer-free: level ``l`` is the left-to-right
    concatenation of the bitmaps of every node at depth ``l``.  The root
    splits by the most significant code bit, each child keeps the relative
    order of its parent's symbols.
    """

    __slots__ = ("alphabet_bits", "length", "levels")

    def __init__(self, seq=(), alphabet_bits: int | None = None):
        codes = np.asarray(seq, dtype=np.uint64).ravel() if len(seq) else np.zeros(0, np.uint64)
        if alphabet_bits is None:
            alphabet_bits = max(1, int(codes.max()).bit_length()) if codes.size else 1
        if not 1 <= alphabet_bits <= 64:
            raise ValueError(f"alphabet_bits must be in [1, 64], got {alphabet_bits}")
        if codes.size and alphabet_bits < 64 and int(codes.max()) >> alphabet_bits:
            raise ValueError(
                f"code {int(codes.max())} does not fit in {alphabet_bits} bits")
        self.alphabet_bits = alphabet_bits
        self.length = int(codes.size)
        self.levels: list[BitMap] = []
        w = alphabet_bits
        for level in range(w):
            if level == 0:
                ordered = codes
            else:
                ordered = codes[np.argsort(codes >> np.uint64(w - level), kind="stable")]
            bits = ((ordered >> np.uint64(w - 1 - level)) & np.uint64(1)).astype(np.uint8)
            self.levels.append(BitMap(bits))

    def __len__(self):
        return self.length

    def __repr__(self):
        return f"WaveletTree(length={self.length}, alphabet_bits={self.alphabet_bits})"

    def _check_code(self, c: int) -> bool:
        return 0 <= c < (1 << self.alphabet_bits)

    def access(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(f"wavelet tree index {i} out of range [0, {self.length})")
        lo, hi, pos = 0, self.length, i
        value = 0
        for bm in self.levels:
            before = bm.rank1(lo)
            zeros = (hi - lo) - (bm.rank1(hi) - before)
            bit = (bm._words[pos >> 6] >> (pos & 63)) & 1
            value = (value << 1) | bit
            if bit:
                pos = lo + zeros + bm.rank1(pos) - before
                lo += zeros
            else:
                pos = lo + (pos - lo) - (bm.rank1(pos) - before)
                hi = lo + zeros
        return value

    __getitem__ = access

    def rank(self, i: int, c: int) -> int:
        if not 0 <= i <= self.length:
            raise IndexError(f"rank bound {i} out of range [0, {self.length}]")
        if not self._check_code(c):
            return 0
        lo, hi, pos = 0, self.length, i
        w = self.alphabet_bits
        for level, bm in enumerate(self.levels):
            before = bm.rank1(lo)
            zeros = (hi - lo) - (bm.rank1(hi) - before)
            ones_in_prefix = bm.rank1(pos) - before
            if (c >> (w - 1 - level)) & 1:
                lo += zeros
                pos = lo + ones_in_prefix
            else:
                pos = lo + (pos - lo) - ones_in_prefix
                hi = lo + zeros
            if lo == hi:
                return 0
        return pos - lo

    def count(self, c: int) -> int:
        return self.rank(self.length, c)

    def select(self, k: int, c: int) -> int:
        total = self.count(c)
        if k == total + 1:
            return self.length
        if not 1 <= k <= total:
            raise IndexError(f"select ordinal {k} out of range [1, {total + 1}]")
        w = self.alphabet_bits
        path = []
        lo, hi = 0, self.length
        for level, bm in enumerate(self.levels):
            before = bm.rank1(lo)
            zeros = (hi - lo) - (bm.rank1(hi) - before)
            path.append((lo, before))
            if (c >> (w - 1 - level)) & 1:
                lo += zeros
            else:
                hi = lo + zeros
        j = k - 1  # offset inside the current node
        for level in range(w - 1, -1, -1):
            bm = self.levels[level]
            plo, ones_before = path[level]
            if (c >> (w - 1 - level)) & 1:
                pos = bm.select(ones_before + j + 1, 1)
            else:
                pos = bm.select((plo - ones_before) + j + 1, 0)
            j = pos - plo
        return j

    def extract(self, a: int, b: int) -> np.ndarray:
        """Decode the contiguous range ``[a, b)`` into a uint64 array.

        All positions descend the levels together; each level costs three
        batched rank calls.
        """
        if not 0 <= a <= b <= self.length:
            raise IndexError(f"range [{a}, {b}) out of [0, {self.length}]")
        out = np.zeros(b - a, dtype=np.uint64)
        if a == b:
            return out
        pos = np.arange(a, b, dtype=np.int64)
        lo = np.zeros(b - a, dtype=np.int64)
        hi = np.full(b - a, self.length, dtype=np.int64)
        last = len(self.levels) - 1
        for level, bm in enumerate(self.levels):
            bit = bm.bits_at(pos)
            out = (out << np.uint64(1)) | bit.astype(np.uint64)
            if level == last:
                break
            before = bm.rank1_many(lo)
            zeros = (hi - lo) - (bm.rank1_many(hi) - before)
            ones_prefix = bm.rank1_many(pos) - before
            one = bit.astype(bool)
            pos = np.where(one, lo + zeros + ones_prefix, pos - ones_prefix)
            hi = np.where(one, hi, lo + zeros)
            lo = np.where(one, lo + zeros, lo)
        return out

    def to_list(self) -> list[int]:
        return self.extract(0, self.length).tolist()

    def range_search(self, a: int, b: int, c: int) -> list[int]:
        """Positions in ``[a, b)`` holding ``c``, given that range is sorted.

        Binary search locates the run of ``c``; an unsorted range gives an
        undefined answer.
        """
        if a > b:
            raise IndexError(f"range_search bounds reversed: {a} > {b}")
        if not 0 <= a <= b <= self.length:
            raise IndexError(f"range [{a}, {b}) out of [0, {self.length}]")
        access = self.access
        lo, hi = a, b
        while lo < hi:
            mid = (lo + hi) >> 1
            if access(mid) < c:
                lo = mid + 1
            else:
                hi = mid
        first = lo
        hi = b
        while lo < hi:
            mid = (lo + hi) >> 1
            if access(mid) <= c:
                lo = mid + 1
            else:
                hi = mid
        return list(range(first, lo))

    def occurrences(self, a: int, b: int, c: int) -> list[int]:
        """Positions in ``[a, b)`` holding ``c``; no ordering precondition."""
        if not 0 <= a <= b <= self.length:
            raise IndexError(f"range [{a}, {b}) out of [0, {self.length}]")
        r = self.rank(a, c)
        n = self.rank(b, c) - r
        if n > 32 and n * 8 > (b - a) // 64:
            # many hits: one batched decode beats n select descents
            return (np.flatnonzero(self.extract(a, b) == np.uint64(c)) + a).tolist()
        return [self.select(r + k, c) for k in range(1, n + 1)]

    # -- serialization -------------------------------------------------

    def payload(self) -> bytes:
        parts = [struct.pack("<B", self.alphabet_bits)]
        for bm in self.levels:
            blob = bm.payload()
            parts.append(struct.pack("<Q", len(blob)))
            parts.append(blob)
        return b"".join(parts)

    def serialize(self) -> bytes:
        return _HEADER.pack(MAGIC, TAG_WAVELET, self.length) + self.payload()

    @classmethod
    def from_payload(cls, buf, n: int, offset: int = 0) -> tuple["WaveletTree", int]:
        if len(buf) < offset + 1:
            raise FormatError("truncated wavelet tree payload")
        (bits,) = struct.unpack_from("<B", buf, offset)
        if not 1 <= bits <= 64:
            raise FormatError(f"invalid alphabet width {bits}")
        offset += 1
        wt = cls.__new__(cls)
        wt.alphabet_bits = bits
        wt.length = n
        wt.levels = []
        for _ in range(bits):
            if len(buf) < offset + 8:
                raise FormatError("truncated wavelet tree level header")
            (size,) = struct.unpack_from("<Q", buf, offset)
            offset += 8
            bm, end = BitMap.from_payload(buf, n, offset)
            if end - offset != size:
                raise FormatError("wavelet tree level size mismatch")
            wt.levels.append(bm)
            offset = end
        return wt, offset

    def nbytes(self) -> int:
        return len(self.payload())


def serialize(structure) -> bytes:
    return structure.serialize()


def deserialize(buf, offset: int = 0, expect=None):
    """Decode one structure from ``buf``; returns it (offset form via ``read``)."""
    obj, _ = read(buf, offset, expect)
    return obj


def read(buf, offset: int = 0, expect=None):
    if len(buf) < offset + _HEADER.size:
        raise FormatError("truncated header")
    magic, tag, n = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    offset += _HEADER.size
    if tag == TAG_BITMAP:
        cls = BitMap
    elif tag == TAG_WAVELET:
        cls = WaveletTree
    else:
        raise FormatError(f"unknown structure tag {tag:#x}")
    if expect is not None and cls is not expect:
        raise FormatError(f"expected {expect.__name__}, found {cls.__name__}")
    return cls.from_payload(buf, n, offset)
