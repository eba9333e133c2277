"""Deterministic random streams: SplitMix64 seed derivation and PCG32.

Every stochastic choice in the pipeline (scene sampling, weight init, batch
shuffling, trial plans) flows through these primitives so that any artifact
can be regenerated bit-exactly from a master seed and an index.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_PCG_MULT = 6364136223846793005
_PCG_DEFAULT_SEQ = 0xDA3E39CB94B95BDB


def derive_seed(master_seed: int, index: int) -> int:
    """Derive a child seed from (master_seed, index).

    SplitMix64 finalizer applied to master_seed XOR (index * golden gamma).
    Collision-sparse and stateless: example i is fully determined by the pair.
    """
    z = (master_seed ^ ((index * GOLDEN_GAMMA) & MASK64)) & MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


class Pcg32:
    """PCG32 (XSH-RR) stream with vectorized batch generation.

    Batch outputs are produced with the LCG jump-ahead identity
    state_i = a^i * s0 + c * (1 + a + ... + a^(i-1)), all mod 2^64, so a
    single stream yields identical values whether drawn one at a time or in
    bulk. Uniform doubles take the 53 high bits of two consecutive 32-bit
    outputs; normals are Box-Muller (cosine branch) from two doubles.
    """

    def __init__(self, seed: int, seq: int = _PCG_DEFAULT_SEQ):
        self.inc = ((seq << 1) | 1) & MASK64
        state = (self.inc + seed) & MASK64
        self.state = (state * _PCG_MULT + self.inc) & MASK64

    def u32(self, n: int) -> np.ndarray:
        """Next n raw 32-bit outputs as uint32."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint32)
        with np.errstate(over="ignore"):
            powers = np.empty(n + 1, dtype=np.uint64)
            powers[0] = 1
            np.cumprod(np.full(n, _PCG_MULT, dtype=np.uint64), out=powers[1:])
            sums = np.empty(n + 1, dtype=np.uint64)
            sums[0] = 0
            np.cumsum(powers[:n], out=sums[1:])
            olds = powers[:n] * np.uint64(self.state) + sums[:n] * np.uint64(self.inc)
            self.state = int(powers[n] * np.uint64(self.state) + sums[n] * np.uint64(self.inc))
            xorshifted = (((olds >> np.uint64(18)) ^ olds) >> np.uint64(27)).astype(np.uint32)
            rot = (olds >> np.uint64(59)).astype(np.uint32)
            return (xorshifted >> rot) | (xorshifted << ((np.uint32(32) - rot) & np.uint32(31)))

    def next_u32(self) -> int:
        return int(self.u32(1)[0])

    def doubles(self, n: int) -> np.ndarray:
        """n uniform doubles in [0, 1) from the 53 high bits of 64-bit draws."""
        raw = self.u32(2 * n).astype(np.uint64)
        bits = (raw[0::2] << np.uint64(32)) | raw[1::2]
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def next_double(self) -> float:
        return float(self.doubles(1)[0])

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_double()

    def normals(self, n: int) -> np.ndarray:
        """n standard normals; each consumes two uniform doubles."""
        u = self.doubles(2 * n)
        # 1 - u1 lies in (0, 1], keeping the log argument strictly positive.
        return np.sqrt(-2.0 * np.log(1.0 - u[0::2])) * np.cos(2.0 * np.pi * u[1::2])

    def next_normal(self) -> float:
        return float(self.normals(1)[0])

    def randint(self, n: int) -> int:
        """Integer in [0, n) via floor(u * n)."""
        return min(int(self.next_double() * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        m = len(items)
        if m < 2:
            return
        u = self.doubles(m - 1)
        for i in range(m - 1, 0, -1):
            j = min(int(u[m - 1 - i] * (i + 1)), i)
            items[i], items[j] = items[j], items[i]
