"""Seeded, platform-independent random number generation.

Every stochastic step in this package (weight init, shuffles, synthetic
noise) draws from xoshiro256++ whose 256-bit state is expanded from a u64
seed with splitmix64. The algorithm is pinned on purpose: it is part of
the on-disk format contract, so a given seed reproduces identical scenes
and identical model files on any machine. Independent consumers (init,
splits, per-grid noise fields) are decoupled through `derive_seed`, which
assigns each one its own substream; the stream ids below are frozen.

splitmix64: state advances by 0x9E3779B97F4A7C15 per draw; each output is
the finalizer z ^= z>>30, *= 0xBF58476D1CE4E5B9, ^= z>>27,
*= 0x94D049BB133111EB, ^= z>>31 (all mod 2^64). Reference vector:
seed 0 -> first output 0xE220A8397B1DCDAF.

xoshiro256++: output = rotl64(s0 + s3, 23) + s0, then
t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t;
s3 = rotl64(s3, 45). State seeded from splitmix64 outputs 0..3.

Floats use the top 53 bits: u = (next_u64 >> 11) * 2^-53 in [0, 1).
Normals are Box-Muller pairs on consecutive uniforms (u1 shifted into
(0, 1] by adding 2^-53); exponentials are -log(u + 2^-53).
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

# Frozen substream ids. Changing any of these is a format break.
INIT_STREAM = 0      # Glorot weight initialization
SPLIT_STREAM = 1     # train/validation row shuffle
EPOCH_STREAM = 2     # per-epoch minibatch shuffles (one ongoing stream)
HOLDOUT_STREAM = 3   # 80/20-style holdout pixel shuffle
TERRAIN_STREAM = 10  # fractal elevation surface
VEG_STREAM = 11      # vegetation-height field
SNOW_STREAM = 12     # correlated snow-depth noise
PHASE_STREAM = 13    # per-acquisition phase noise
SPECKLE_STREAM = 14  # amplitude speckle


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def splitmix64(seed: int, index: int) -> int:
    """index-th output (0-based) of the splitmix64 sequence seeded at `seed`."""
    return _mix((seed + (index + 1) * _GAMMA) & _MASK)


def derive_seed(seed: int, stream: int) -> int:
    """Seed of the given substream; equals splitmix64 output #stream."""
    return splitmix64(seed & _MASK, stream)


class Xoshiro256pp:
    """xoshiro256++ (Blackman & Vigna) with splitmix64 state expansion."""

    def __init__(self, seed: int):
        s = seed & _MASK
        self._s = [splitmix64(s, i) for i in range(4)]
        if not any(self._s):
            # all-zero is the one invalid xoshiro state; unreachable from
            # splitmix64 expansion in practice, guarded anyway
            self._s[0] = _GAMMA

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s0 + s3) & _MASK
        out = ((((x << 23) & _MASK) | (x >> 41)) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = [s0, s1, s2, s3]
        return out

    def random(self) -> float:
        """Uniform float64 in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        limit = _MASK + 1 - ((_MASK + 1) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, highest index first."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)

    def uniforms(self, n: int) -> np.ndarray:
        """Block of n uniforms in [0, 1); same stream as repeated random()."""
        out = np.empty(n, dtype=np.float64)
        s0, s1, s2, s3 = self._s
        scale = 2.0**-53
        mask = _MASK
        for i in range(n):
            x = (s0 + s3) & mask
            out[i] = ((((((x << 23) & mask) | (x >> 41)) + s0) & mask) >> 11) * scale
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & mask
        self._s = [s0, s1, s2, s3]
        return out

    def normals(self, n: int) -> np.ndarray:
        """Block of n standard normals; consumes 2*ceil(n/2) uniforms."""
        m = (n + 1) // 2
        u = self.uniforms(2 * m)
        u1 = u[0::2] + 2.0**-53  # shift [0,1) to (0,1] so log() is finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * m, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def exponentials(self, n: int) -> np.ndarray:
        """Block of n unit-mean exponential variates."""
        return -np.log(self.uniforms(n) + 2.0**-53)
