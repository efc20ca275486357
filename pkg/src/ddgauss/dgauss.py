"""The integer Gaussian law: exact sampling front-end and brute-force pmf tooling.

The law N_Z(0, s^2) puts mass proportional to exp(-x^2 / 2 s^2) on every
integer x.  Three things live here:

* ``sample_dgauss`` — exact draws, delegated to the kernel backends; the
  variance parameter travels as an exact rational so no float approximation
  of the target law is involved.
* ``exact_pmf`` — direct evaluation of the truncated pmf in extended
  precision (long double with compensated summation).  This is the oracle
  the sampler is tested against.
* ``convolution_max_log_ratio`` — brute-force check that a sum of n
  independent integer Gaussians is close to one integer Gaussian of n-fold
  variance, as a sup over the support of the absolute log mass ratio.  The
  interesting bounds sit around 1e-38, far below double precision, so this
  one routine works in 60-digit arithmetic.
"""

import dataclasses
import math
from fractions import Fraction

import mpmath
import numpy as np

from ddgauss import _backend
from ddgauss._kernels_py import SamplerFailure

__all__ = [
    "NoiseScale",
    "TruncatedPmf",
    "SamplerFailure",
    "sample_dgauss",
    "sample_dgauss_batch",
    "exact_pmf",
    "convolution_max_log_ratio",
]


@dataclasses.dataclass(frozen=True)
class NoiseScale:
    """Standard-deviation parameter s of the integer Gaussian N_Z(0, s^2).

    ``variance`` is the exact rational s^2 handed to the sampler.  When not
    given it is ``Fraction(s) ** 2``, which captures the binary float ``s``
    exactly.  Tests that need an exact integer variance (say s^2 = 3, whose
    square root is not a float) should use :meth:`from_variance`.

    In protocol use the scale lives in grid units (sigma / gamma); the
    aggregate noise bounds assume grid-unit scale at least 1/2, which
    :meth:`for_protocol` enforces.
    """

    s: float
    variance: Fraction = None

    def __post_init__(self):
        if self.variance is None:
            object.__setattr__(self, "variance", Fraction(self.s) ** 2)
        else:
            object.__setattr__(self, "variance", Fraction(self.variance))
        if not (self.s > 0) or self.variance <= 0:
            raise ValueError(f"noise scale must be positive, got s={self.s}")

    @classmethod
    def from_variance(cls, variance):
        """Scale whose variance parameter is exactly ``variance`` (rational)."""
        v = Fraction(variance)
        return cls(math.sqrt(v), v)

    @classmethod
    def for_protocol(cls, s):
        """Like ``NoiseScale(s)`` but rejects s < 1/2 (grid-unit noise below
        half a grid step is outside the regime the accountant's sum bounds
        cover)."""
        scale = cls(s)
        if scale.s < 0.5:
            raise ValueError(
                f"protocol noise scale must be >= 1/2 in grid units, got {scale.s}"
            )
        return scale


@dataclasses.dataclass(frozen=True, eq=False)
class TruncatedPmf:
    """Pmf of N_Z(0, s^2) restricted to |x| <= support_radius.

    ``masses[support_radius + x]`` is the mass at x; ``tail_bound`` is an
    upper bound on the total mass outside the truncation window.  Masses are
    kept in long double.
    """

    support_radius: int
    masses: np.ndarray
    tail_bound: float

    def mass(self, x):
        """Mass at integer x (0.0 outside the truncation window)."""
        if abs(x) > self.support_radius:
            return 0.0
        return float(self.masses[self.support_radius + int(x)])


def sample_dgauss(scale, rng):
    """One exact draw from N_Z(0, s^2) using the active kernel backend."""
    v = scale.variance
    return int(_backend.dgauss_batch(v.numerator, v.denominator, 1, rng)[0])


def sample_dgauss_batch(scale, size, rng):
    """``size`` exact draws from N_Z(0, s^2) as an int64 array.

    All draws in the batch flow through one buffered bit stream over ``rng``.
    Buffered bits carry over between draws, so splitting a batch into
    separate calls yields a different (equally exact) sample path; only the
    first draw coincides.  Reproducibility requires replaying the same batch
    shape, which the protocol does by construction.
    """
    v = scale.variance
    return _backend.dgauss_batch(v.numerator, v.denominator, size, rng)


def _kahan_sum(values):
    """Compensated sum of an iterable of long doubles (pass smallest first)."""
    total = np.longdouble(0.0)
    carry = np.longdouble(0.0)
    for v in values:
        y = v - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


def exact_pmf(scale, support_radius, tolerance):
    """Truncated pmf of N_Z(0, s^2) by direct summation in long double.

    Each mass is exp(-x^2 / 2 s^2) over the normalizer.  The normalizer sum
    always covers the truncation window and then keeps extending while terms
    stay above ``tolerance`` times the running sum; the mass left outside the
    window is bounded by the extension terms plus a geometric remainder and
    reported as ``tail_bound``.

    Raises if the radius is below ceil(12 s) (window too small for the tail
    accounting to be meaningful) or if the tail mass at this radius exceeds
    ``tolerance`` (error names the achievable tail).
    """
    radius = int(support_radius)
    min_radius = math.ceil(12 * scale.s)
    if radius < min_radius:
        raise ValueError(
            f"support_radius {radius} is below ceil(12 s) = {min_radius} for s = {scale.s}"
        )
    if not tolerance > 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")

    v = scale.variance
    inv2s2 = np.longdouble(v.denominator) / (np.longdouble(2) * np.longdouble(v.numerator))
    xs = np.arange(radius + 1, dtype=np.longdouble)
    weights = np.exp(-(xs * xs) * inv2s2)

    # Normalizer over the window, summed small-terms-first with compensation.
    normalizer = np.longdouble(2) * _kahan_sum(weights[:0:-1]) + weights[0]

    # Extend past the window while terms are non-negligible per the stopping
    # rule; everything found out here is excluded mass.
    excluded = np.longdouble(0.0)
    x = radius + 1
    tol_ld = np.longdouble(tolerance)
    while True:
        w = np.exp(-np.longdouble(x) * np.longdouble(x) * inv2s2)
        term = np.longdouble(2) * w
        if term == 0 or term < tol_ld * (normalizer + excluded):
            # Geometric remainder: weight ratios shrink, so the rest of the
            # tail is at most w(x) / (1 - ratio at x).
            ratio = np.exp(-np.longdouble(2 * x + 1) * inv2s2)
            if ratio < 1:
                excluded += np.longdouble(2) * w / (np.longdouble(1) - ratio)
            break
        excluded += term
        x += 1

    normalizer += excluded
    tail_bound = float(excluded / normalizer)
    if tail_bound > tolerance:
        raise ValueError(
            f"tail mass at support_radius {radius} is {tail_bound:.6e}, which exceeds "
            f"tolerance {tolerance:.6e}; the achievable tail at this radius is {tail_bound:.6e}"
        )

    masses = np.concatenate([weights[:0:-1], weights]) / normalizer
    return TruncatedPmf(support_radius=radius, masses=masses, tail_bound=tail_bound)


# Working precision for the convolution check.  The bounds being verified sit
# around 1e-38 for the widest tested scale, so the arithmetic runs at 60
# significant digits; accumulated rounding across ~1e6 operations stays below
# 1e-55 relative, orders of magnitude under anything being measured.
_CONV_DPS = 60

# Sup-ratio exclusion: z where BOTH laws sit below 1e-300 of their modes are
# dropped, since log ratios of doubly negligible tails measure nothing.
_CONV_MODE_CUTOFF_LOG10 = -300

# Depth cap for the truncation-floor calculation, in nats: a little past the
# mode cutoff, because nothing deeper survives the exclusion rule anyway.
_CONV_DEPTH_CAP_NATS = 710.0


def _mp_weights(inv_two_var, min_radius, floor):
    """Unnormalized weights exp(-x^2 * inv_two_var) for x = 0..x_max and their
    full-line normalizer, at the current mpmath precision.

    x_max is at least ``min_radius`` and extends until weights fall below
    ``floor``; the normalizer sums every computed weight.
    """
    weights = [mpmath.mpf(1)]
    x = 1
    while True:
        w = mpmath.exp(-(x * x) * inv_two_var)
        if w < floor and x > min_radius:
            break
        weights.append(w)
        x += 1
    normalizer = 2 * mpmath.fsum(weights[1:]) + weights[0]
    return weights, normalizer


def convolution_max_log_ratio(count, scale, support_radius):
    """Sup over |z| <= support_radius of the absolute log ratio between the
    ``count``-fold convolution of N_Z(0, s^2) and N_Z(0, count * s^2).

    The convolution is computed exactly (repeated discrete convolution of the
    truncated weight vectors) in 60-digit arithmetic.  Points where both laws
    carry less than 1e-300 of their respective modes are excluded from the
    sup; see the module constants for the truncation and exclusion cutoffs.

    Requires both laws to hold at least 1 - 1e-15 of their mass inside the
    window (checked through :func:`exact_pmf`); a window that cannot deliver
    that raises ValueError.  ``count`` may be 1, in which case the two laws
    coincide and the result is exactly 0.
    """
    n = int(count)
    radius = int(support_radius)
    if n < 1:
        raise ValueError(f"count must be a positive integer, got {count}")

    target = NoiseScale.from_variance(scale.variance * n)
    for law in (scale, target):
        try:
            exact_pmf(law, radius, 1e-15)
        except ValueError as exc:
            raise ValueError(
                f"support_radius {radius} too small for count {n}: {exc}"
            ) from exc
    if n == 1:
        return 0.0

    with mpmath.workdps(_CONV_DPS):
        v = scale.variance
        inv2s2 = mpmath.mpf(v.denominator) / (2 * mpmath.mpf(v.numerator))

        # The deepest checked point sits radius^2 / (2 n s^2) nats below the
        # mode of either law.  Factor weights must be kept down to that depth
        # plus the working precision, or edge truncation error would swamp
        # the (tiny) quantity being measured.
        depth_nats = min(radius * radius / (2.0 * n * float(v)), _CONV_DEPTH_CAP_NATS)
        floor = mpmath.exp(-(_CONV_DPS * math.log(10) + depth_nats))

        # Per-factor weights; the factor radius must also reach radius/n so
        # the n-fold support covers the checked window.
        half, z_base = _mp_weights(inv2s2, -(-radius // n), floor)
        base = half[:0:-1] + half  # symmetric vector over [-x_b, x_b]

        conv = base
        for _ in range(n - 1):
            out = [mpmath.mpf(0)] * (len(conv) + len(base) - 1)
            for i, ci in enumerate(conv):
                for j, bj in enumerate(base):
                    out[i + j] += ci * bj
            conv = out
        center = (len(conv) - 1) // 2
        conv_norm = z_base**n

        inv2ns2 = inv2s2 / n
        target_weights, z_target = _mp_weights(inv2ns2, radius, floor)

        cutoff = mpmath.mpf(10) ** _CONV_MODE_CUTOFF_LOG10
        conv_floor = conv[center] * cutoff
        target_floor = target_weights[0] * cutoff

        # Both laws are symmetric, so z >= 0 suffices for the sup.
        best = mpmath.mpf(0)
        for z in range(radius + 1):
            cw = conv[center + z]
            tw = target_weights[z]
            if cw < conv_floor and tw < target_floor:
                continue
            ratio = abs(mpmath.log((cw / conv_norm) / (tw / z_target)))
            if ratio > best:
                best = ratio
        return float(best)
