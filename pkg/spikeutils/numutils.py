# -*- coding: utf-8 -*-
"""

Misc numerical utils: the portable random generator and rounding
helpers.

"""

import logging
import numpy as np

from .tensor import Tensor2D

logger = logging.getLogger(__name__)

# splitmix64 constants
_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(states):
    """splitmix64 output function for an array of uint64 states"""
    z = states.copy()
    # uint64 multiplication wraps modulo 2**64 as intended
    with np.errstate(over='ignore'):
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


class Rng(object):
    """Portable random stream based on splitmix64.

    The i:th draw (i = 1, 2, ...) of a stream with seed s is
    mix(s + i * 0x9E3779B97F4A7C15 mod 2**64), where mix is the splitmix64
    finalizer with the published constants. The stream is identical on
    every platform and does not depend on numpy's own generators.
    Uniform floats use the top 53 bits, normals use Box-Muller.

    An instance is a caller-owned cursor into the stream; do not share one
    instance between threads.
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError('seed must be a 64-bit unsigned integer')
        self.seed = seed
        self.counter = 0

    def __repr__(self):
        return '<Rng | seed: %d, draws: %d>' % (self.seed, self.counter)

    def next_uint64(self, n):
        """Return the next n raw draws as uint64"""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over='ignore'):
            states = np.uint64(self.seed) + idx * _GOLDEN_GAMMA
        return _splitmix64(states)

    def uniform(self, n):
        """n floats in [0, 1)"""
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, n):
        """n standard normal floats (Box-Muller, pairs from successive
        uniforms)"""
        npairs = (n + 1) // 2
        u = self.uniform(2 * npairs)
        u1, u2 = u[0::2], u[1::2]
        # 1 - u1 is in (0, 1], so the log is finite
        r = np.sqrt(-2.0 * np.log(1.0 - u1))
        z = np.empty(2 * npairs)
        z[0::2] = r * np.cos(2 * np.pi * u2)
        z[1::2] = r * np.sin(2 * np.pi * u2)
        return z[:n]

    def permutation(self, n):
        """Random permutation of range(n)"""
        return np.argsort(self.uniform(n), kind='stable')


def rng_normal(rng, rows, cols, mean=0.0, std=1.0):
    """Gaussian rows x cols Tensor2D drawn from rng (row-major order)"""
    if std < 0:
        raise ValueError('std must be nonnegative')
    z = rng.normal(rows * cols).reshape((rows, cols))
    return Tensor2D(mean + std * z)


def round_sig(x, digits=4):
    """Round x to given number of significant digits"""
    if x == 0 or not np.isfinite(x):
        return x
    return round(x, digits - 1 - int(np.floor(np.log10(abs(x)))))
