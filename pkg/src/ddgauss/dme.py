"""Distributed mean estimation harness: synthetic sphere data, the modular
protocol against a central continuous-Gaussian baseline, and MSE statistics
over a (epsilon, bit-width, k) sweep.

Baseline calibration is zCDP parity: the continuous mechanism gets noise
sigma_c = c / eps per coordinate, which for l2 sensitivity c satisfies the
same (eps^2/2)-zCDP target the modular mechanism is calibrated to.  MSE rows
report the MEAN estimate (sum / n); the theory bound field stays at sum
scale, so comparisons divide it by n^2.

Randomness: each sweep point gets streams keyed by (master_seed, domain,
point_index, trial) — domains 4 (data), 5 (baseline noise), 6 (the protocol
seed for the point) in the registry described in the protocol module — so
points are schedule-independent and a config re-run is bit-identical.
"""

import dataclasses
import math

import numpy as np
from scipy import stats

from ddgauss.accountant import NORM_MODES, CommBudget, choose_gamma
from ddgauss.flatten import PaddedDim
from ddgauss.modular import Modulus
from ddgauss.protocol import ProtocolConfig, run_round, theoretical_mse_bound

__all__ = [
    "DmeConfig",
    "DmeResult",
    "sample_sphere",
    "gaussian_baseline",
    "run_dme",
]

DATA_DOMAIN = 4
BASELINE_DOMAIN = 5
POINT_SEED_DOMAIN = 6

DEFAULT_BETA = math.exp(-0.5)


@dataclasses.dataclass(frozen=True)
class DmeConfig:
    """Sweep definition: one run per (eps, bit_width, k) triple."""

    n: int
    d: int
    c: float
    eps_targets: tuple
    delta: float
    bit_widths: tuple
    k_values: tuple
    norm_mode: str = "general"
    trials: int = 10
    beta: float = DEFAULT_BETA
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eps_targets", tuple(self.eps_targets))
        object.__setattr__(self, "bit_widths", tuple(int(b) for b in self.bit_widths))
        object.__setattr__(self, "k_values", tuple(self.k_values))
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if not self.eps_targets or any(not e > 0 for e in self.eps_targets):
            raise ValueError(f"eps_targets must all be positive, got {self.eps_targets}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.bit_widths:
            raise ValueError("bit_widths must be nonempty")
        if not self.k_values or any(not k > 0 for k in self.k_values):
            raise ValueError(f"k_values must all be positive, got {self.k_values}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")


@dataclasses.dataclass(frozen=True)
class DmeResult:
    """One sweep point.  MSE fields describe the mean estimate; CI fields are
    95% Student-t half-widths (None below 2 trials).  ``mse_theory_bound``
    is the closed-form bound on the SUM estimate — divide by n^2 to compare
    with the mean-scale columns.  Infeasible budget points carry
    status="infeasible" and None outcomes instead of being dropped."""

    eps: float
    bit_width: int
    k: float
    gamma: float
    sigma: float
    mse_ddgauss: float
    mse_ddgauss_ci: float
    mse_baseline: float
    mse_baseline_ci: float
    wraparound_rate: float
    mse_theory_bound: float
    status: str


def _rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def sample_sphere(n, d, c, rng):
    """n i.i.d. vectors uniform on the radius-c sphere in R^d, as an (n, d)
    array: normalized standard Gaussians, so every norm is exactly c."""
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    x = rng.standard_normal((n, d))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    while np.any(norms == 0.0):  # probability-zero guard
        bad = norms[:, 0] == 0.0
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return c * x / norms


def gaussian_baseline(inputs, eps_zcdp_target, c, rng):
    """Central continuous Gaussian estimate of the sum: clip each input to
    l2 norm c, add per-coordinate N(0, (c/eps)^2) noise — the noise level
    with (eps^2/2)-zCDP at l2 sensitivity c."""
    if not eps_zcdp_target > 0:
        raise ValueError(f"eps_zcdp_target must be positive, got {eps_zcdp_target}")
    inputs = np.asarray(inputs, dtype=np.float64)
    norms = np.linalg.norm(inputs, axis=1, keepdims=True)
    scale = np.minimum(1.0, np.divide(c, norms, out=np.ones_like(norms), where=norms > 0))
    total = (inputs * scale).sum(axis=0)
    return total + rng.normal(0.0, c / eps_zcdp_target, size=total.shape)


def _mean_ci(samples):
    mean = float(np.mean(samples))
    if len(samples) < 2:
        return mean, None
    half = float(
        stats.t.ppf(0.975, len(samples) - 1) * np.std(samples, ddof=1) / math.sqrt(len(samples))
    )
    return mean, half


def _infeasible(eps, bit_width, k):
    return DmeResult(
        eps=eps,
        bit_width=bit_width,
        k=k,
        gamma=None,
        sigma=None,
        mse_ddgauss=None,
        mse_ddgauss_ci=None,
        mse_baseline=None,
        mse_baseline_ci=None,
        wraparound_rate=None,
        mse_theory_bound=None,
        status="infeasible",
    )


def _run_point(cfg, eps, bit_width, k, point_index, padded):
    budget = CommBudget(bit_width=bit_width, k=k, norm_mode=cfg.norm_mode)
    try:
        gamma, sigma, _ = choose_gamma(
            budget, eps, cfg.c, cfg.beta, cfg.n, padded, delta=cfg.delta
        )
    except ValueError:
        return _infeasible(eps, bit_width, k)

    point_seed = int(
        np.random.SeedSequence(
            (cfg.master_seed, POINT_SEED_DOMAIN, point_index)
        ).generate_state(1, np.uint64)[0]
    )
    pcfg = ProtocolConfig(
        n=cfg.n,
        d_original=cfg.d,
        c=cfg.c,
        gamma=gamma,
        modulus=Modulus.from_bit_width(bit_width),
        sigma=sigma,
        beta=cfg.beta,
        master_seed=point_seed,
    )
    theory = theoretical_mse_bound(pcfg, budget.sum_norm_bound(cfg.c, cfg.n))

    mse_dd, mse_base = [], []
    wrapped = 0
    for trial in range(cfg.trials):
        inputs = sample_sphere(
            cfg.n, cfg.d, cfg.c, _rng(cfg.master_seed, DATA_DOMAIN, point_index, trial)
        )
        true_mean = inputs.mean(axis=0)

        estimate_sum, diag = run_round(inputs, pcfg, round_index=trial)
        wrapped += diag.wraparound_coords
        mse_dd.append(float(np.sum((estimate_sum / cfg.n - true_mean) ** 2)))

        baseline_sum = gaussian_baseline(
            inputs, eps, cfg.c, _rng(cfg.master_seed, BASELINE_DOMAIN, point_index, trial)
        )
        mse_base.append(float(np.sum((baseline_sum / cfg.n - true_mean) ** 2)))

    dd_mean, dd_ci = _mean_ci(mse_dd)
    base_mean, base_ci = _mean_ci(mse_base)
    return DmeResult(
        eps=eps,
        bit_width=bit_width,
        k=k,
        gamma=gamma,
        sigma=sigma,
        mse_ddgauss=dd_mean,
        mse_ddgauss_ci=dd_ci,
        mse_baseline=base_mean,
        mse_baseline_ci=base_ci,
        wraparound_rate=wrapped / (padded * cfg.trials),
        mse_theory_bound=theory.value,
        status="ok",
    )


def run_dme(cfg):
    """Run the full sweep; one DmeResult per (eps, bit_width, k), in that
    nesting order.  Deterministic in cfg (including master_seed)."""
    padded = PaddedDim.for_dim(cfg.d).padded
    results = []
    point_index = 0
    for eps in cfg.eps_targets:
        for bit_width in cfg.bit_widths:
            for k in cfg.k_values:
                results.append(_run_point(cfg, eps, bit_width, k, point_index, padded))
                point_index += 1
    return results
