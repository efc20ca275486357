"""Randomized rounding to the grid gamma * Z^d.

Two variants live here: plain unbiased per-coordinate rounding, and the
norm-capped conditional variant used by clients (round, test the result's
norm against the sensitivity cap, retry on failure).  The cap and the l2
sensitivity bound come from the same two-branch formula, so there is a
single source of truth for the norm the aggregate analysis relies on.

All rounding arithmetic happens in grid units (x / gamma against Z^d);
real units appear only at the public boundaries.  The conditional variant
returns grid integers outright because its callers (the client encoder)
continue in grid units.
"""

import dataclasses
import math

import numpy as np

__all__ = [
    "RoundingParams",
    "SensitivityBound",
    "randomized_round",
    "delta2_bound",
    "conditional_round",
]

# Retry cap for the conditional loop.  Acceptance probability is at least
# 1 - beta per attempt, so hitting the cap at any sane beta means the
# configuration (or the rng) is broken, not unlucky.
CONDITIONAL_RETRY_CAP = 1000


@dataclasses.dataclass(frozen=True)
class RoundingParams:
    """Grid granularity gamma, conditioning bias beta in [0, 1), dimension d."""

    gamma: float
    beta: float
    dim: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


@dataclasses.dataclass(frozen=True)
class SensitivityBound:
    """l2 sensitivity of one client's rounded contribution.

    ``delta2`` is in input units, ``delta2_grid`` in grid units (their ratio
    is gamma by construction).  ``branch`` records which arm of the min was
    active: "conditional" (norm-capped rounding) or "worst_case" (plain
    triangle inequality); the accountant additionally uses "override" for
    caller-supplied values.
    """

    delta2: float
    delta2_grid: float
    branch: str


def _round_grid(u, rng):
    """Unbiased rounding of a grid-unit vector to integers."""
    lo = np.floor(u)
    frac = u - lo
    return lo + (rng.random(u.shape[0]) < frac)


def randomized_round(x, gamma, rng):
    """Round each coordinate of x to one of its two neighbors in gamma * Z.

    Unbiased: E[output] = x coordinate-wise, and every coordinate moves by
    strictly less than gamma.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    u = np.asarray(x, dtype=np.float64) / gamma
    return gamma * _round_grid(u, rng)


def delta2_bound(c, params):
    """l2 sensitivity bound for a norm-c input rounded at granularity gamma.

    The conditional branch is
        c^2 + gamma^2 d / 4 + sqrt(2 log(1/beta)) * gamma * (c + gamma sqrt(d) / 2)
    and the worst-case branch is (c + gamma sqrt(d))^2; the smaller wins.
    With beta = 0 the rounding is unconditional and only the worst-case
    branch applies.
    """
    if not c > 0:
        raise ValueError(f"clip bound must be positive, got {c}")
    gamma, beta, d = params.gamma, params.beta, params.dim
    cg = c / gamma
    sqd = math.sqrt(d)
    worst = (cg + sqd) ** 2
    if beta == 0:
        best, branch = worst, "worst_case"
    else:
        conditional = cg * cg + d / 4.0 + math.sqrt(2 * math.log(1 / beta)) * (cg + sqd / 2.0)
        if conditional <= worst:
            best, branch = conditional, "conditional"
        else:
            best, branch = worst, "worst_case"
    grid = math.sqrt(best)
    return SensitivityBound(delta2=gamma * grid, delta2_grid=grid, branch=branch)


def conditional_round(x, c, params, rng):
    """Round a grid-unit vector, retrying until the result's norm is capped.

    ``x`` must already be clipped and rescaled into grid units, so its norm
    is at most c / gamma.  The accepted output is integer-valued, lies within
    the grid-unit sensitivity cap from :func:`delta2_bound` unconditionally,
    and is distributed as unbiased rounding conditioned on that norm event.
    Returns (grid integers, retries beyond the first attempt).

    With beta = 0 the norm test is skipped entirely (plain unconditional
    rounding; the worst-case cap holds automatically).
    """
    u = np.asarray(x, dtype=np.float64)
    if u.shape != (params.dim,):
        raise ValueError(f"expected a vector of dimension {params.dim}, got shape {u.shape}")
    limit = c / params.gamma
    norm = math.sqrt(float(u @ u))
    if norm > limit * (1 + 1e-9):
        raise ValueError(
            f"input norm {norm:.6g} exceeds c/gamma = {limit:.6g}; clip before rounding"
        )

    if params.beta == 0:
        return _round_grid(u, rng).astype(np.int64), 0

    cap_sq = delta2_bound(c, params).delta2_grid ** 2
    for attempt in range(CONDITIONAL_RETRY_CAP):
        rounded = _round_grid(u, rng)
        if float(rounded @ rounded) <= cap_sq:
            return rounded.astype(np.int64), attempt
    raise RuntimeError(
        f"conditional rounding rejected {CONDITIONAL_RETRY_CAP} attempts in a row "
        f"(empirical acceptance rate 0/{CONDITIONAL_RETRY_CAP}); "
        f"beta={params.beta} and gamma={params.gamma} are grossly misconfigured"
    )
