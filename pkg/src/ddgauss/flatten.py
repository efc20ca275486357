"""Norm-spreading transform: random signs followed by the Walsh-Hadamard map.

A client applies H (D_xi x) before rounding so that no single coordinate
carries a large share of the norm; the server applies D_xi (H y) to undo it.
The Sylvester-construction H is symmetric and orthonormal, so the same
butterfly kernel serves both directions.  The sign vector is shared,
public randomness: it is expanded from a 64-bit seed through Philox (a
counter-mode PRF), one bit per coordinate, least-significant bit first, so
any party holding the seed reconstructs the identical transform.
"""

import dataclasses
import math

import numpy as np

from ddgauss import _backend

__all__ = ["SignVector", "PaddedDim", "wht", "flatten", "unflatten"]

# Domain tag separating sign-vector draws from every other consumer of the
# master seed (see the protocol module for the full tag registry).
SIGN_DOMAIN = 1


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclasses.dataclass(frozen=True, eq=False)
class SignVector:
    """Shared random sign diagonal for the flattening transform.

    ``signs`` holds +-1.0 floats of the padded (power-of-two) length;
    ``seed`` is the 64-bit value it was expanded from, kept so configs can
    be serialized by seed alone.
    """

    signs: np.ndarray
    seed: int

    def __post_init__(self):
        if not _is_pow2(self.signs.shape[0]):
            raise ValueError(f"sign vector length {self.signs.shape[0]} is not a power of two")

    @classmethod
    def from_seed(cls, seed, dim):
        """Expand ``seed`` into ``dim`` signs (dim must be a power of two).

        Bit b of the Philox word stream maps to sign 1 - 2b; the expansion
        is bit-exact across processes and platforms.
        """
        if not _is_pow2(dim):
            raise ValueError(f"padded dimension {dim} is not a power of two")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, SIGN_DOMAIN))))
        words = rng.integers(0, 2**64, size=(dim + 63) // 64, dtype=np.uint64)
        bits = np.unpackbits(words.view(np.uint8), bitorder="little")[:dim]
        return cls(signs=1.0 - 2.0 * bits.astype(np.float64), seed=int(seed))

    @property
    def dim(self):
        return self.signs.shape[0]


@dataclasses.dataclass(frozen=True)
class PaddedDim:
    """Original dimension and the power-of-two it is zero-padded to."""

    original: int
    padded: int

    def __post_init__(self):
        if self.original < 1:
            raise ValueError(f"dimension must be positive, got {self.original}")
        if not _is_pow2(self.padded):
            raise ValueError(f"padded dimension {self.padded} is not a power of two")
        if not (self.padded // 2 < self.original <= self.padded):
            raise ValueError(
                f"padded dimension {self.padded} is not the tight power of two for {self.original}"
            )

    @classmethod
    def for_dim(cls, original):
        if original < 1:
            raise ValueError(f"dimension must be positive, got {original}")
        return cls(original=original, padded=1 << max(0, (original - 1).bit_length()))

    def pad(self, x):
        """Zero-pad a length-``original`` vector to the padded length."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.original,):
            raise ValueError(f"expected shape ({self.original},), got {x.shape}")
        if self.padded == self.original:
            return x.copy()
        out = np.zeros(self.padded, dtype=np.float64)
        out[: self.original] = x
        return out

    def truncate(self, y):
        """Drop the padding tail, back to the original length."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.padded,):
            raise ValueError(f"expected shape ({self.padded},), got {y.shape}")
        return y[: self.original].copy()


def wht(x, direction="forward"):
    """Orthonormal Walsh-Hadamard transform of a power-of-two-length vector.

    Runs as an in-place butterfly on an internal copy in O(d log d).  The
    matrix is symmetric, so forward and inverse are the same map; the
    ``direction`` argument exists purely to make call sites self-describing.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    out = np.array(x, dtype=np.float64, copy=True)
    if not _is_pow2(out.shape[0]):
        raise ValueError(f"length {out.shape[0]} is not a power of two")
    _backend.fwht_inplace(out)
    out *= 1.0 / math.sqrt(out.shape[0])
    return out


def flatten(x, xi):
    """H (xi ⊙ x): spread the norm of x across all coordinates.

    Norm-preserving; with shared xi the map is linear across clients, which
    is what keeps the aggregated vector flat as well.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (xi.dim,):
        raise ValueError(f"vector shape {x.shape} does not match sign vector ({xi.dim},)")
    return wht(xi.signs * x, "forward")


def unflatten(y, xi):
    """xi ⊙ (H y): invert :func:`flatten` (exact up to float rounding)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (xi.dim,):
        raise ValueError(f"vector shape {y.shape} does not match sign vector ({xi.dim},)")
    return xi.signs * wht(y, "inverse")
