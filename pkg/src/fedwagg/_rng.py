"""Deterministic randomness for replayable protocol runs.

Every party in a simulated run draws from its own :class:`HashDrbg`, derived
from the run seed with a domain-separation label, so whole runs (including
Paillier randomness, mask seeds and proof challenges) replay byte-identically.
"""

import hashlib
from math import gcd

_BLOCK = 32


class HashDrbg:
    """SHA-256 counter-mode deterministic random bit generator.

    Not thread-safe: give each party / purpose its own instance (use
    :meth:`child` to derive independent streams).
    """

    def __init__(self, seed: bytes | int | str, label: str = ""):
        if isinstance(seed, int):
            seed = seed.to_bytes((seed.bit_length() + 7) // 8 or 1, "big", signed=False)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._key = hashlib.sha256(seed + b"\x00" + label.encode()).digest()
        self._counter = 0
        self._buffer = b""

    def child(self, label: str) -> "HashDrbg":
        """Derive an independent stream for a sub-purpose."""
        return HashDrbg(self._key, label)

    def bytes(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("byte count must be non-negative")
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._key + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def getrandbits(self, k: int) -> int:
        if k <= 0:
            return 0
        nbytes = (k + 7) // 8
        x = int.from_bytes(self.bytes(nbytes), "big")
        return x >> (nbytes * 8 - k)

    def randbelow(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        k = bound.bit_length()
        while True:
            x = self.getrandbits(k)
            if x < bound:
                return x

    def randrange(self, start: int, stop: int | None = None) -> int:
        if stop is None:
            start, stop = 0, start
        if stop <= start:
            raise ValueError("empty range")
        return start + self.randbelow(stop - start)

    def unit_mod(self, n: int) -> int:
        """Uniform element of the multiplicative group mod n."""
        if n <= 1:
            raise ValueError("modulus must exceed 1")
        while True:
            r = self.randrange(1, n)
            if gcd(r, n) == 1:
                return r

    def choice_subset(self, items: list, k: int) -> list:
        """Deterministic k-subset (order-preserving) of items."""
        if k > len(items):
            raise ValueError("subset larger than population")
        pool = list(items)
        picked = []
        for _ in range(k):
            picked.append(pool.pop(self.randbelow(len(pool))))
        picked.sort(key=items.index)
        return picked

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
