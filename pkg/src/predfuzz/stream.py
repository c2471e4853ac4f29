"""Finite byte streams used as the randomness source for input generators.

A generator decodes structured inputs from a stream of raw bytes.  Decoding is
deterministic: the same bytes and the same overflow seed always produce the
same draws, which is what makes corpus replay and cross-process reproduction
possible.  When the finite bytes run out, further draws come from a PRNG
seeded with ``overflow_seed``, so decoding never fails and mutated streams of
any length stay decodable.
"""

from __future__ import annotations

import random

from .errors import InvalidRange, InvalidWeights


def _bytes_needed(span: int) -> int:
    # minimal k with 256**k >= span
    k = 0
    capacity = 1
    while capacity < span:
        capacity *= 256
        k += 1
    return k


class ParamStream:
    """Sequential reader over a byte string with deterministic overflow.

    ``cursor`` counts every byte consumed, including overflow bytes drawn
    past the end of the finite data.
    """

    def __init__(self, data: bytes, overflow_seed: int = 0):
        self.data = bytes(data)
        self.overflow_seed = overflow_seed
        self.cursor = 0
        self._overflow = bytearray()
        self._rng = random.Random(overflow_seed)

    @property
    def remaining(self) -> int:
        """Finite bytes not yet consumed (never counts overflow)."""
        return max(0, len(self.data) - self.cursor)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.data)

    def _read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("negative read")
        end = self.cursor + n
        if end > len(self.data):
            # extend the overflow buffer so byte i past the end is always
            # the i-th PRNG byte, independent of draw grouping
            need = end - len(self.data) - len(self._overflow)
            for _ in range(need):
                self._overflow.append(self._rng.getrandbits(8))
        if self.cursor >= len(self.data):
            lo = self.cursor - len(self.data)
            chunk = bytes(self._overflow[lo : lo + n])
        elif end <= len(self.data):
            chunk = self.data[self.cursor : end]
        else:
            head = self.data[self.cursor :]
            chunk = head + bytes(self._overflow[: end - len(self.data)])
        self.cursor = end
        return chunk

    def next_bytes(self, n: int) -> bytes:
        """Consume and return ``n`` raw bytes."""
        return self._read(n)

    def next_int(self, lo: int, hi: int) -> int:
        """Draw an integer in [lo, hi].

        Consumes the minimal number of whole bytes whose value range covers
        the requested span, then reduces modulo the span.  A span of one
        consumes nothing.  Raises InvalidRange when lo > hi.
        """
        if lo > hi:
            raise InvalidRange(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        k = _bytes_needed(span)
        if k == 0:
            return lo
        raw = self._read(k)
        return lo + int.from_bytes(raw, "big") % span

    def next_bool(self) -> bool:
        return self.next_int(0, 1) == 1

    def choose_weighted(self, weights) -> int:
        """Pick an index with probability proportional to its weight.

        Integral weights consume the minimal bytes covering their total, so
        small totals cost one byte.  Non-integral weights are quantised to a
        16-bit resolution.  Zero-weight entries are never selected; raises
        InvalidWeights when no weight is positive.
        """
        ws = list(weights)
        if any(w < 0 for w in ws):
            raise InvalidWeights("negative weight")
        total = sum(ws)
        if total <= 0:
            raise InvalidWeights("all weights zero")
        if all(float(w).is_integer() for w in ws):
            r = self.next_int(0, int(total) - 1)
            acc = 0
            for i, w in enumerate(ws):
                acc += int(w)
                if r < acc:
                    return i
            return len(ws) - 1  # unreachable; guards float drift
        r = self.next_int(0, 65535)
        point = (r + 0.5) / 65536.0 * total
        acc = 0.0
        last_positive = 0
        for i, w in enumerate(ws):
            if w > 0:
                last_positive = i
            acc += w
            if point < acc and w > 0:
                return i
        return last_positive
