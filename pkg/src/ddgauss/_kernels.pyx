# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: exact integer-Gaussian sampling and the in-place
Walsh-Hadamard butterfly.

Mirror of ``_kernels_py`` with the bit plumbing and the small-integer
arithmetic lowered to C.  The randomness-consumption contract is identical:
same word blocks, same LSB-first bit order, same shortcut structure in every
Bernoulli primitive, so a given seed produces bit-identical samples on both
backends.  Arbitrary-precision acceptance tests (the per-candidate bias
check) stay on Python integers; everything on the proposal side runs on C
integers.
"""

from math import isqrt

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

from ddgauss._kernels_py import SAMPLE_RETRY_CAP, SamplerFailure
from ddgauss import _kernels_py as _pure

BACKEND_NAME = "compiled"

cnp.import_array()

cdef uint64_t _FULL = <uint64_t>0xFFFFFFFFFFFFFFFF


cdef class BitBuffer:
    cdef object _rng
    cdef object _arr
    cdef const uint64_t[::1] _words
    cdef Py_ssize_t _count, _pos
    cdef uint64_t _word
    cdef int _bits_left, _block

    def __init__(self, rng):
        self._rng = rng
        self._arr = None
        self._count = 0
        self._pos = 0
        self._word = 0
        self._bits_left = 0
        self._block = 0

    cdef uint64_t _next_word(self):
        cdef int size
        if self._arr is None or self._pos >= self._count:
            # Block schedule shared with the pure backend (see _kernels_py).
            size = 8 if self._block == 0 else (64 if self._block == 1 else 512)
            self._block += 1
            self._arr = self._rng.integers(0, 2**64, size=size, dtype=np.uint64)
            self._words = self._arr
            self._count = size
            self._pos = 0
        cdef uint64_t w = self._words[self._pos]
        self._pos += 1
        return w

    cdef inline int take_bit(self):
        if self._bits_left == 0:
            self._word = self._next_word()
            self._bits_left = 64
        cdef int b = <int>(self._word & 1)
        self._word >>= 1
        self._bits_left -= 1
        return b

    cdef uint64_t take_bits(self, int k):
        cdef uint64_t out = 0, mask
        cdef int shift = 0, take
        while k > 0:
            if self._bits_left == 0:
                self._word = self._next_word()
                self._bits_left = 64
            take = k if k < self._bits_left else self._bits_left
            mask = _FULL if take == 64 else ((<uint64_t>1 << take) - 1)
            out |= (self._word & mask) << shift
            self._word >>= take
            self._bits_left -= take
            shift += take
            k -= take
        return out


cdef uint64_t uniform_below(BitBuffer bits, uint64_t n):
    if n <= 1:
        return 0
    cdef int k = 0
    cdef uint64_t m = n - 1, v
    while m:
        k += 1
        m >>= 1
    while True:
        v = bits.take_bits(k)
        if v < n:
            return v


cdef int bern_frac_c(BitBuffer bits, uint64_t num, uint64_t den):
    # Requires den < 2**63 so that num << 1 cannot overflow.
    if num == 0:
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


cdef int bern_frac_obj(BitBuffer bits, object num, object den):
    if num <= 0:
        return 0
    if num >= den:
        return 1
    while True:
        num = num << 1
        if num >= den:
            num = num - den
            if bits.take_bit() == 0:
                return 1
        else:
            if bits.take_bit() == 1:
                return 0
            if num == 0:
                return 0


cdef int bern_exp_frac_c(BitBuffer bits, uint64_t num, uint64_t den):
    # Requires num <= den; den * k stays in range because the cascade depth
    # is geometrically distributed (P[k > j] <= 1/j!).
    cdef uint64_t k = 1
    while bern_frac_c(bits, num, den * k):
        k += 1
    return <int>(k & 1)


cdef int bern_exp_obj(BitBuffer bits, object num, object den):
    # Bernoulli(exp(-num/den)) for arbitrary nonnegative rationals.  Integer
    # parts are stripped with exp(-1) coins (expected O(1) iterations since
    # each failed coin exits immediately).
    cdef object k
    while num > den:
        if not bern_exp_frac_c(bits, 1, 1):
            return 0
        num = num - den
    if num <= 0:
        return 1
    k = 1
    while bern_frac_obj(bits, num, den * k):
        k = k + 1
    return <int>(k & 1)


cdef int64_t geometric(BitBuffer bits, uint64_t t):
    cdef uint64_t u
    cdef int64_t v = 0
    while True:
        u = uniform_below(bits, t)
        if bern_exp_frac_c(bits, u, t):
            break
    while bern_exp_frac_c(bits, 1, 1):
        v += 1
    return v * <int64_t>t + <int64_t>u


cdef int64_t dlaplace(BitBuffer bits, uint64_t t):
    cdef int sign
    cdef int64_t mag
    while True:
        sign = bits.take_bit()
        mag = geometric(bits, t)
        if sign and mag == 0:
            continue
        return -mag if sign else mag


def dgauss_batch(num, den, size, rng):
    """Compiled counterpart of ``_kernels_py.dgauss_batch`` (same contract)."""
    if num <= 0 or den <= 0:
        raise ValueError("variance must be positive")
    t_obj = isqrt(num // den) + 1
    if t_obj >= 2**31:
        # Scales this large never occur in protocol use; keep exactness and
        # hand the call to the arbitrary-precision implementation.
        return _pure.dgauss_batch(num, den, size, rng)

    cdef uint64_t t = t_obj
    cdef object n_obj = num, d_obj = den
    cdef object dt = d_obj * t_obj
    cdef object bias_den = 2 * n_obj * dt * t_obj
    cdef BitBuffer bits = BitBuffer(rng)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(size, dtype=np.int64)
    cdef Py_ssize_t i
    cdef long attempts
    cdef int64_t y
    cdef object bias_num

    for i in range(size):
        attempts = 0
        while True:
            attempts += 1
            if attempts > SAMPLE_RETRY_CAP:
                raise SamplerFailure(
                    f"integer-Gaussian rejection loop exceeded {SAMPLE_RETRY_CAP} attempts"
                )
            y = dlaplace(bits, t)
            bias_num = (-y if y < 0 else y) * dt - n_obj
            bias_num = bias_num * bias_num
            if bern_exp_obj(bits, bias_num, bias_den):
                out[i] = y
                break
    return out


def fwht_inplace(cnp.ndarray[cnp.float64_t, ndim=1] x):
    """Unnormalized in-place Walsh-Hadamard butterfly (power-of-two length)."""
    cdef Py_ssize_t n = x.shape[0]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    cdef Py_ssize_t h = 1, i, j
    cdef double a, b
    while h < n:
        for i in range(0, n, 2 * h):
            for j in range(i, i + h):
                a = x[j]
                b = x[j + h]
                x[j] = a + b
                x[j + h] = a - b
        h *= 2
    return x
