"""Counter-based random streams.

Every random draw in this package is a pure function of (key, counter), with
keys derived from the run seed by hashing a path of labels.  That buys three
properties that ordinary stateful generators lack:

* a component can be re-run or reordered without perturbing any other
  component's draws,
* a lazily evaluated event (say the k-th arrival on one Poisson clock) can be
  generated on demand, identically, whether or not earlier events were ever
  realized,
* scalar loops (numba) and vectorized code (numpy) produce bit-identical
  output from the same key and counters.

The mixer is the splitmix64 finalizer, which passes BigCrush as the core of
splitmix64.  This is a simulation RNG, not a cryptographic one: key
derivation separates its input domain from counter advancement by a fixed
salt, which is collision-safe for any realistic number of derived streams.
"""

from __future__ import annotations

import math

import numpy as np

MASK = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15  # odd; 2^64 / golden ratio
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
SALT = 0xD6E8FEB86659FD93  # keeps derive() off the counter orbit of bits()

U53 = 1.0 / (1 << 53)


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    x &= MASK
    x = ((x ^ (x >> 30)) * MIX1) & MASK
    x = ((x ^ (x >> 27)) * MIX2) & MASK
    return x ^ (x >> 31)


def bits(key: int, counter: int) -> int:
    """The counter-th 64-bit word of the stream with this key."""
    return mix64((key + counter * GOLD) & MASK)


def derive(key: int, index: int) -> int:
    """Child key number `index` of `key`.

    The salt xor moves the argument off the lattice that bits() walks, so a
    child key never equals a word drawn from the parent stream.
    """
    return mix64(((key ^ SALT) + index * GOLD) & MASK)


def label_hash(label: str) -> int:
    """FNV-1a of a text label, for readable stream paths."""
    h = 0xCBF29CE484222325
    for b in label.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def stream_key(seed: int, *path: "int | str") -> int:
    """Key for the stream addressed by a path of labels under `seed`.

    Integer path elements index sibling streams; string elements name
    functional roles ("arrivals", "coins", ...).
    """
    key = mix64(seed & MASK)
    for p in path:
        key = derive(key, p if isinstance(p, int) else label_hash(p))
    return key


def u01(key: int, counter: int) -> float:
    """Uniform double in [0, 1) with 53 random bits."""
    return (bits(key, counter) >> 11) * U53


# ---------------------------------------------------------------------------
# numpy vector twins

_GOLD = np.uint64(GOLD)
_MIX1 = np.uint64(MIX1)
_MIX2 = np.uint64(MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def mix64_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> _S30
    x *= _MIX1
    x ^= x >> _S27
    x *= _MIX2
    x ^= x >> _S31
    return x


def bits_vec(key: int, counters: np.ndarray) -> np.ndarray:
    """bits(key, c) for an array of counters."""
    c = counters.astype(np.uint64, copy=False)
    return mix64_vec(np.uint64(key) + c * _GOLD)


def bits_range(key: int, start: int, count: int) -> np.ndarray:
    """Words start, ..., start+count-1 of the stream."""
    return bits_vec(key, np.arange(start, start + count, dtype=np.uint64))


def u01_vec(key: int, counters: np.ndarray) -> np.ndarray:
    return (bits_vec(key, counters) >> _S11).astype(np.float64) * U53


def u01_range(key: int, start: int, count: int) -> np.ndarray:
    return (bits_range(key, start, count) >> _S11).astype(np.float64) * U53


# ---------------------------------------------------------------------------
# stateful convenience wrapper

class Stream:
    """A sequential view of one counter-based stream.

    Thin wrapper holding (key, next counter).  Hot loops should use the
    module functions with explicit counters instead; this class is for
    orchestration code where sequential draws read better.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK
        self.counter = counter

    @classmethod
    def from_path(cls, seed: int, *path: "int | str") -> "Stream":
        return cls(stream_key(seed, *path))

    def child(self, label: "int | str") -> "Stream":
        """Independent stream addressed by one more path element."""
        idx = label if isinstance(label, int) else label_hash(label)
        return Stream(derive(self.key, idx))

    def bits(self) -> int:
        w = bits(self.key, self.counter)
        self.counter += 1
        return w

    def u01(self) -> float:
        return (self.bits() >> 11) * U53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n), exactly (rejection sampling)."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        lim = (1 << 64) - ((1 << 64) % n)
        while True:
            w = self.bits()
            if w < lim:
                return w % n

    def exponential(self, rate: float = 1.0) -> float:
        """Exponential variate with the given rate."""
        return -math.log1p(-self.u01()) / rate

    def u01_block(self, count: int) -> np.ndarray:
        out = u01_range(self.key, self.counter, count)
        self.counter += count
        return out

    def bits_block(self, count: int) -> np.ndarray:
        out = bits_range(self.key, self.counter, count)
        self.counter += count
        return out

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates using unbiased randint draws."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]


# ---------------------------------------------------------------------------
# numba scalar twins, importable from jitted kernels

try:
    from numba import njit, uint64, float64

    @njit(uint64(uint64), cache=True)
    def mix64_nb(x):
        x = (x ^ (x >> 30)) * uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> 27)) * uint64(0x94D049BB133111EB)
        return x ^ (x >> 31)

    @njit(uint64(uint64, uint64), cache=True)
    def bits_nb(key, counter):
        return mix64_nb(key + counter * uint64(0x9E3779B97F4A7C15))

    @njit(float64(uint64, uint64), cache=True)
    def u01_nb(key, counter):
        return (bits_nb(key, counter) >> uint64(11)) * 1.1102230246251565e-16

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False
