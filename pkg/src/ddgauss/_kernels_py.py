"""Pure-Python kernels: exact integer-Gaussian sampling and the fast
Walsh-Hadamard butterfly.

This module is the reference implementation of the randomness-consumption
contract shared with the compiled twin (``_kernels.pyx``).  Both backends
draw 64-bit words from the supplied ``numpy.random.Generator`` in identical
block sizes and consume bits LSB-first in identical order, so a given seed
yields bit-identical samples regardless of which backend is active.  The
cross-backend equality is tested, not assumed.

Sampling is exact: the target law on the integers with mass proportional to
exp(-x^2 / (2 s^2)) is produced by rejection from a two-sided geometric
proposal, with every accept/reject decision reduced to integer-only
Bernoulli primitives.  No floating-point approximation of the target law is
involved anywhere; the variance parameter enters as an exact rational
``num/den``.
"""

from math import isqrt

import numpy as np

BACKEND_NAME = "pure"

# Words are pulled from the generator in fixed blocks so that single-sample
# and batched calls advance the underlying bit generator identically in both
# backends.  The schedule starts small to keep one-off draws cheap.
_BLOCK_SCHEDULE = (8, 64, 512)

# Safety net for the rejection loop; acceptance probability is Theta(1) for
# every scale, so reaching the cap indicates a broken bit source.
SAMPLE_RETRY_CAP = 10**6


class SamplerFailure(RuntimeError):
    """Raised when a rejection loop exceeds its retry cap."""


class BitStream:
    """Buffered stream of uniform bits drawn from a numpy Generator.

    Bits are consumed LSB-first within each 64-bit word; words are consumed
    in the order the generator produced them; blocks follow a fixed growth
    schedule.  All of that is part of the cross-backend contract.
    """

    __slots__ = ("_rng", "_words", "_count", "_pos", "_word", "_bits_left", "_block")

    def __init__(self, rng):
        self._rng = rng
        self._words = None
        self._count = 0
        self._pos = 0
        self._word = 0
        self._bits_left = 0
        self._block = 0

    def _next_word(self):
        if self._words is None or self._pos >= self._count:
            size = _BLOCK_SCHEDULE[min(self._block, len(_BLOCK_SCHEDULE) - 1)]
            self._block += 1
            self._words = self._rng.integers(0, 2**64, size=size, dtype=np.uint64)
            self._count = size
            self._pos = 0
        w = int(self._words[self._pos])
        self._pos += 1
        return w

    def take_bit(self):
        if self._bits_left == 0:
            self._word = self._next_word()
            self._bits_left = 64
        b = self._word & 1
        self._word >>= 1
        self._bits_left -= 1
        return b

    def take_bits(self, k):
        """Return an integer whose bit j is the j-th bit consumed."""
        out = 0
        shift = 0
        while k > 0:
            if self._bits_left == 0:
                self._word = self._next_word()
                self._bits_left = 64
            take = k if k < self._bits_left else self._bits_left
            out |= (self._word & ((1 << take) - 1)) << shift
            self._word >>= take
            self._bits_left -= take
            shift += take
            k -= take
        return out


def uniform_below(bits, n):
    """Uniform integer in [0, n) by bit rejection; consumes nothing if n <= 1."""
    if n <= 1:
        return 0
    k = (n - 1).bit_length()
    while True:
        v = bits.take_bits(k)
        if v < n:
            return v


def bern_frac(bits, num, den):
    """Exact Bernoulli(num/den) via lazy binary expansion of the probability.

    Compares a uniform U = 0.r1 r2 ... against p = num/den one bit at a time;
    expected number of consumed bits is 2 regardless of operand size.
    """
    if num <= 0:
        return 0
    if num >= den:
        return 1
    while True:
        num <<= 1
        if num >= den:
            num -= den
            if bits.take_bit() == 0:
                return 1
        else:
            if bits.take_bit() == 1:
                return 0
            if num == 0:
                return 0


def bern_exp_frac(bits, num, den):
    """Exact Bernoulli(exp(-num/den)) for 0 <= num/den <= 1 (forward cascade)."""
    k = 1
    while bern_frac(bits, num, den * k):
        k += 1
    return k & 1


def bern_exp(bits, num, den):
    """Exact Bernoulli(exp(-num/den)) for any num/den >= 0."""
    while num > den:
        if not bern_exp_frac(bits, 1, 1):
            return 0
        num = num - den
    return bern_exp_frac(bits, num, den)


def geometric(bits, t):
    """Exact geometric with P[X = x] proportional to exp(-x/t), integer t >= 1."""
    while True:
        u = uniform_below(bits, t)
        if bern_exp_frac(bits, u, t):
            break
    v = 0
    while bern_exp_frac(bits, 1, 1):
        v += 1
    return v * t + u


def dlaplace(bits, t):
    """Exact two-sided geometric with P[X = x] proportional to exp(-|x|/t)."""
    while True:
        sign = bits.take_bit()
        mag = geometric(bits, t)
        if sign and mag == 0:
            continue
        return -mag if sign else mag


def _dgauss_one(bits, num, den, t, bias_den):
    """One sample of the integer Gaussian with variance num/den."""
    for _ in range(SAMPLE_RETRY_CAP):
        y = dlaplace(bits, t)
        # Accept with probability exp(-(|y| - s^2/t)^2 / (2 s^2)); with
        # s^2 = num/den this is exp(-bias_num / bias_den) over integers.
        bias_num = (abs(y) * den * t - num) ** 2
        if bern_exp(bits, bias_num, bias_den):
            return y
    raise SamplerFailure(
        f"integer-Gaussian rejection loop exceeded {SAMPLE_RETRY_CAP} attempts"
    )


def dgauss_batch(num, den, size, rng):
    """Draw ``size`` exact samples of the integer Gaussian with variance num/den.

    ``num`` and ``den`` are positive integers giving the variance s^2 = num/den
    exactly.  All randomness flows through one BitStream over ``rng``.
    """
    if num <= 0 or den <= 0:
        raise ValueError("variance must be positive")
    t = isqrt(num // den) + 1
    bias_den = 2 * num * den * t * t
    bits = BitStream(rng)
    out = np.empty(size, dtype=np.int64)
    for i in range(size):
        out[i] = _dgauss_one(bits, num, den, t, bias_den)
    return out


def fwht_inplace(x):
    """Unnormalized in-place Walsh-Hadamard butterfly on a float64 vector.

    Stages run with block half-width h = 1, 2, 4, ...; each stage maps the
    pair (a, b) to (a + b, a - b).  The operand pairing and order are the
    same as in the compiled twin so the float results are bit-identical.
    Length must be a power of two.
    """
    n = x.shape[0]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    h = 1
    while h < n:
        blocks = x.reshape(n // (2 * h), 2, h)
        a = blocks[:, 0, :].copy()
        b = blocks[:, 1, :]
        blocks[:, 0, :] = a + b
        blocks[:, 1, :] = a - b
        h *= 2
    return x
