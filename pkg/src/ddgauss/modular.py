"""Residue arithmetic over Z_m and the modular-wraparound error model.

Everything the aggregation path needs from modular arithmetic is here:
reduction to nonnegative residues, the centered-representative mapping
{1 - m/2, ..., m/2}, a real-valued modular clip used by the analysis, a
zero-sum-mask aggregator that simulates "the server sees only the modular
sum", and the per-coordinate wraparound error bound used as a diagnostic.

Residues are int64 throughout and the arithmetic is exact for bit widths
up to 62: the aggregator folds with a reduction after every addition, so
no intermediate ever exceeds 2m < 2^63.
"""

import dataclasses
import math

import numpy as np

__all__ = [
    "Modulus",
    "ResidueVector",
    "mod_reduce",
    "center",
    "mod_clip_real",
    "secagg_sum",
    "mod_clip_error_bound",
]

MAX_BIT_WIDTH = 62


@dataclasses.dataclass(frozen=True)
class Modulus:
    """Group size m, even so the centered range {1 - m/2, ..., m/2} exists.

    ``bit_width`` is set when m = 2^B (the protocol always uses powers of
    two; general even moduli are allowed for the arithmetic itself).
    """

    m: int
    bit_width: int = None

    def __post_init__(self):
        if self.m < 2 or self.m % 2:
            raise ValueError(f"modulus must be an even integer >= 2, got {self.m}")
        if self.bit_width is not None:
            if not 1 <= self.bit_width <= MAX_BIT_WIDTH:
                raise ValueError(
                    f"bit width must lie in [1, {MAX_BIT_WIDTH}], got {self.bit_width}"
                )
            if self.m != 1 << self.bit_width:
                raise ValueError(f"modulus {self.m} is not 2^{self.bit_width}")
        elif self.m > 1 << MAX_BIT_WIDTH:
            raise ValueError(f"modulus {self.m} exceeds the int64-exact range (2^{MAX_BIT_WIDTH})")

    @classmethod
    def from_bit_width(cls, bit_width):
        if not 1 <= bit_width <= MAX_BIT_WIDTH:
            raise ValueError(f"bit width must lie in [1, {MAX_BIT_WIDTH}], got {bit_width}")
        return cls(m=1 << bit_width, bit_width=bit_width)

    @property
    def half(self):
        return self.m // 2


@dataclasses.dataclass(frozen=True, eq=False)
class ResidueVector:
    """Vector of nonnegative residues mod m."""

    residues: np.ndarray
    modulus: Modulus

    def __post_init__(self):
        r = self.residues
        if r.dtype != np.int64:
            raise ValueError(f"residues must be int64, got {r.dtype}")
        if r.size and (r.min() < 0 or r.max() >= self.modulus.m):
            raise ValueError("residues must lie in [0, m)")

    @property
    def dim(self):
        return self.residues.shape[0]


def mod_reduce(v, modulus):
    """Entrywise nonnegative residue of an integer vector."""
    v = np.asarray(v, dtype=np.int64)
    return ResidueVector(residues=np.mod(v, modulus.m), modulus=modulus)


def center(z):
    """Map residues to the centered representatives {1 - m/2, ..., m/2}.

    The two-way tie at m/2 (= -m/2 mod m) resolves to +m/2.
    """
    r = z.residues
    return np.where(r <= z.modulus.half, r, r - z.modulus.m)


def mod_clip_real(x, a, b):
    """Shift x by the multiple of (b - a) that lands it in [a, b].

    Values already inside [a, b] (b included) pass through unchanged; for
    values outside, a boundary tie resolves to the lower representative.
    Accepts scalars or arrays.
    """
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    x = np.asarray(x, dtype=np.float64)
    width = b - a
    inside = (x >= a) & (x <= b)
    shifted = x + width * np.ceil((a - x) / width)
    out = np.where(inside, x, shifted)
    return float(out) if out.ndim == 0 else out


def secagg_sum(messages, masked, rng=None):
    """Sum of residue vectors mod m, optionally through zero-sum masking.

    With ``masked`` true, every message is perturbed by a uniform mask in
    Z_m^d with the masks summing to zero mod m — each masked message is
    marginally uniform, so the unmasked aggregate is the only thing the
    "server" side of this simulation can see.  The masked and unmasked
    paths produce identical sums; tests verify rather than assume this.
    """
    if not messages:
        raise ValueError("need at least one message")
    modulus = messages[0].modulus
    dim = messages[0].dim
    for msg in messages:
        if msg.modulus != modulus or msg.dim != dim:
            raise ValueError("messages must share modulus and dimension")

    vectors = [msg.residues for msg in messages]
    if masked:
        if rng is None:
            raise ValueError("masked aggregation needs an rng for the masks")
        vectors = _masked_messages(vectors, modulus, rng)

    acc = np.zeros(dim, dtype=np.int64)
    for v in vectors:
        acc = np.mod(acc + v, modulus.m)
    return ResidueVector(residues=acc, modulus=modulus)


def _masked_messages(vectors, modulus, rng):
    """Add uniform zero-sum masks to residue vectors (internal, but tested
    directly for the marginal-uniformity claim)."""
    dim = vectors[0].shape[0]
    masks = rng.integers(0, modulus.m, size=(len(vectors) - 1, dim), dtype=np.int64)
    mask_total = np.zeros(dim, dtype=np.int64)
    for row in masks:
        mask_total = np.mod(mask_total + row, modulus.m)
    last = np.mod(-mask_total, modulus.m)
    return [np.mod(v + mk, modulus.m) for v, mk in zip(vectors, [*masks, last])]


def mod_clip_error_bound(r, proxy_sigma, log_omega):
    """Per-coordinate wraparound error bounds for the symmetric range [-r, r].

    For a centered coordinate that is subgaussian with variance proxy
    ``proxy_sigma**2`` and MGF prefactor e^{log_omega}, clipping into
    [-r, r] costs at most

        E|M(X) - X|  <=  4 r exp(log_omega - r^2 / 2 sigma^2)
        E(M(X) - X)^2 <= 8 r^2 exp(log_omega - r^2 / 2 sigma^2)

    Used as a diagnostic against the wraparound error measured in protocol
    rounds.  The hypothesis requires proxy_sigma <= r.
    """
    if not r > 0 or not proxy_sigma > 0:
        raise ValueError("range and proxy sigma must be positive")
    if proxy_sigma > r:
        raise ValueError(
            f"proxy sigma {proxy_sigma:.6g} exceeds the clip range {r:.6g}; "
            "the tail bound hypothesis fails"
        )
    decay = math.exp(log_omega - r * r / (2.0 * proxy_sigma * proxy_sigma))
    return 4.0 * r * decay, 8.0 * r * r * decay
