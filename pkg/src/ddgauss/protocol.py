"""One round of private vector summation: encode, aggregate, decode.

A client clips and rescales its vector onto the grid, flattens it with the
shared sign-Hadamard transform, rounds conditionally, adds integer Gaussian
noise, and reduces mod m.  The simulated secure aggregator adds the
residue vectors (through zero-sum masks, so the decode side only ever sees
the modular sum).  The server centers the sum, scales back by gamma,
unflattens, and drops the padding.  The estimate targets the SUM of the
inputs; dividing by n is the caller's business.

Randomness plumbing: every stream is derived from the config's master seed
through numpy's SeedSequence with an explicit domain tag, so rounds are
reproducible and no two stages ever share a stream.  Tag registry:

    1  shared sign vector          (flatten.SIGN_DOMAIN)
    2  per-client encode streams   (master_seed, 2, round_index, client)
    3  aggregation masks           (master_seed, 3, round_index)
    4  synthetic input data        (dme module)
    5  continuous-baseline noise   (dme module)
    6  per-point protocol seeds    (dme module)
"""

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from ddgauss.dgauss import NoiseScale, sample_dgauss_batch
from ddgauss.flatten import PaddedDim, SignVector, flatten, unflatten
from ddgauss.modular import Modulus, ResidueVector, center, mod_reduce, secagg_sum
from ddgauss.rounding import RoundingParams, conditional_round

__all__ = [
    "ProtocolConfig",
    "RoundDiagnostics",
    "MseBound",
    "client_encode",
    "server_decode",
    "run_round",
    "theoretical_mse_bound",
]

CLIENT_DOMAIN = 2
MASK_DOMAIN = 3

# Flattening quality constant: the sign-Hadamard transform gives variance
# proxy ||x||^2 / d exactly, i.e. rho = 1.  Carried as a named constant so a
# different transform could adjust it.
FLATTEN_RHO = 1.0


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    """Static parameters of one aggregation round.

    ``sigma`` is the per-client noise scale in original units; the sampler
    runs on the grid-unit ratio sigma/gamma, which must be at least 1/2 for
    the privacy accounting to apply.  ``sigma = 0`` disables noise and is
    allowed only with ``allow_zero_sigma`` (test mode for isolating the
    other error sources); it never represents a private configuration.
    """

    n: int
    d_original: int
    c: float
    gamma: float
    modulus: Modulus
    sigma: float
    beta: float
    master_seed: int
    allow_zero_sigma: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one client, got {self.n}")
        if self.d_original < 1:
            raise ValueError(f"dimension must be positive, got {self.d_original}")
        if not self.c > 0:
            raise ValueError(f"clip bound must be positive, got {self.c}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if self.sigma == 0:
            if not self.allow_zero_sigma:
                raise ValueError(
                    "sigma = 0 is a test mode; pass allow_zero_sigma=True to opt in"
                )
        elif not self.sigma > 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        elif self.sigma / self.gamma < 0.5:
            raise ValueError(
                f"sigma/gamma = {self.sigma / self.gamma:.6g} is below 1/2; "
                "the aggregate privacy bounds do not cover this regime"
            )
        object.__setattr__(self, "dims", PaddedDim.for_dim(self.d_original))
        object.__setattr__(
            self,
            "noise_scale",
            NoiseScale.for_protocol(self.sigma / self.gamma) if self.sigma else None,
        )

    @property
    def d(self):
        """Padded (power-of-two) dimension the protocol actually runs in."""
        return self.dims.padded

    def sign_vector(self):
        return SignVector.from_seed(self.master_seed, self.d)

    def rounding_params(self):
        return RoundingParams(gamma=self.gamma, beta=self.beta, dim=self.d)


@dataclasses.dataclass(frozen=True)
class RoundDiagnostics:
    """Observability for one round.

    ``wraparound_coords`` counts coordinates whose unreduced integer
    aggregate fell outside the centered range {1 - m/2, ..., m/2}; those are
    exactly the coordinates the modular decode gets wrong.
    """

    wraparound_coords: int
    total_retries: int
    per_client_norms: tuple


class MseBound(NamedTuple):
    """Closed-form mean-squared-error bound; ``hypothesis_ok`` is False (and
    the value infinite) when the aggregate-spread hypothesis sigma_hat <= r
    fails, in which case the bound says nothing."""

    value: float
    hypothesis_ok: bool


def _clip_rescale_grid(padded, cfg):
    """Clip to l2 norm c, then rescale into grid units (divide by gamma)."""
    norm = math.sqrt(float(padded @ padded))
    if norm <= cfg.c:
        return padded / cfg.gamma
    return padded * (cfg.c / (norm * cfg.gamma))


def _encode_raw(x, cfg, xi, rng):
    """Client pipeline up to (but not including) modular reduction.

    Returns the unreduced integer vector x_rounded + noise, which run_round
    sums exactly to measure wraparound, plus the rounding retry count.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.d_original,):
        raise ValueError(f"expected input of shape ({cfg.d_original},), got {x.shape}")
    grid = _clip_rescale_grid(cfg.dims.pad(x), cfg)
    flat = flatten(grid, xi)
    rounded, retries = conditional_round(flat, cfg.c, cfg.rounding_params(), rng)
    if cfg.noise_scale is not None:
        rounded = rounded + sample_dgauss_batch(cfg.noise_scale, cfg.d, rng)
    return rounded, retries


def client_encode(x, cfg, xi, rng):
    """Encode one client's vector into a residue vector mod m."""
    raw, retries = _encode_raw(x, cfg, xi, rng)
    return mod_reduce(raw, cfg.modulus), retries


def server_decode(zbar, cfg, xi):
    """Decode the aggregated residues into a real vector of the original
    dimension: center, scale by gamma, unflatten, drop padding."""
    if zbar.dim != cfg.d:
        raise ValueError(f"expected aggregate of dimension {cfg.d}, got {zbar.dim}")
    if zbar.modulus != cfg.modulus:
        raise ValueError("aggregate modulus does not match the configuration")
    centered = center(zbar).astype(np.float64)
    return cfg.dims.truncate(unflatten(cfg.gamma * centered, xi))


def run_round(inputs, cfg, round_index=0):
    """Run one full round over ``inputs`` (a sequence of n client vectors).

    Returns (estimate of the SUM of inputs, diagnostics).  All randomness
    derives from cfg.master_seed and ``round_index`` (see the module
    docstring), so a round is a pure function of (inputs, cfg, round_index).
    """
    if len(inputs) != cfg.n:
        raise ValueError(f"expected {cfg.n} client inputs, got {len(inputs)}")
    xi = cfg.sign_vector()

    messages = []
    raw_total = np.zeros(cfg.d, dtype=np.int64)
    total_retries = 0
    norms = []
    for client, x in enumerate(inputs):
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence((cfg.master_seed, CLIENT_DOMAIN, round_index, client))
            )
        )
        raw, retries = _encode_raw(x, cfg, xi, rng)
        messages.append(mod_reduce(raw, cfg.modulus))
        raw_total += raw
        total_retries += retries
        norms.append(float(np.linalg.norm(np.asarray(x, dtype=np.float64))))

    mask_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((cfg.master_seed, MASK_DOMAIN, round_index)))
    )
    zbar = secagg_sum(messages, masked=True, rng=mask_rng)
    estimate = server_decode(zbar, cfg, xi)

    half = cfg.modulus.half
    wraparound = int(np.count_nonzero((raw_total < 1 - half) | (raw_total > half)))
    return estimate, RoundDiagnostics(
        wraparound_coords=wraparound,
        total_retries=total_retries,
        per_client_norms=tuple(norms),
    )


def theoretical_mse_bound(cfg, sum_norm_bound):
    """Closed-form bound on E||estimate - sum of inputs||^2.

    ``sum_norm_bound`` caps ||sum of true inputs||_2 (cn in general, c sqrt(n)
    for orthogonal-ish data).  The aggregate spread proxy is

        sigma_hat^2 = rho ||sum||^2 / d + (gamma^2/4 + sigma^2) n,

    and the bound requires sigma_hat <= r = gamma m / 2; outside that regime
    the result is flagged and infinite.
    """
    if not sum_norm_bound > 0:
        raise ValueError(f"sum_norm_bound must be positive, got {sum_norm_bound}")
    d, n = cfg.d, cfg.n
    gamma, sigma, beta = cfg.gamma, cfg.sigma, cfg.beta
    sigma_hat_sq = FLATTEN_RHO * sum_norm_bound**2 / d + (gamma**2 / 4 + sigma**2) * n
    r = gamma * cfg.modulus.m / 2.0
    if sigma_hat_sq > r * r:
        return MseBound(value=math.inf, hypothesis_ok=False)

    # Wraparound tail term, evaluated in log space: the 1/sqrt((1-beta)^{n-1})
    # factor overflows a float for large n, and honestly reporting inf is the
    # right behavior when it does.
    log_tail = -r * r / (4.0 * sigma_hat_sq) - 0.5 * (math.log(n) + (n - 1) * math.log1p(-beta))
    try:
        tail = 2.0 * math.sqrt(2.0) * r * math.exp(log_tail)
    except OverflowError:
        return MseBound(value=math.inf, hypothesis_ok=True)
    base = math.sqrt(
        gamma**2 / 4.0 + beta**2 * gamma * n / (1.0 - beta) + (1.0 - beta) * sigma**2
    )
    value = d * n / (1.0 - beta) * (tail + base) ** 2
    return MseBound(value=value, hypothesis_ok=True)
