"""Privacy bookkeeping for the aggregated mechanism.

Everything here is exact arithmetic on the closed-form guarantees: the
convolution penalty tau, the zCDP epsilon (minimum over its branches), the
conversion to approximate DP, linear composition, and the two calibration
inverses the deployment story needs — sigma from a target epsilon, and the
joint (gamma, sigma) choice under a bit-width budget.

Semantics of ``target_eps`` throughout: the zCDP epsilon parameter, i.e. the
mechanism satisfies (eps^2/2)-zCDP.  Composition is linear in rho = eps^2/2
and assumes full participation every round; subsampling amplification is out
of scope.  Adjacency is add/remove one client; a replacement-adjacency
guarantee would double epsilon.
"""

import dataclasses
import math

import numpy as np
from scipy import optimize

from ddgauss.rounding import RoundingParams, SensitivityBound, delta2_bound

__all__ = [
    "CommBudget",
    "PrivacyReport",
    "tau",
    "epsilon_zcdp",
    "zcdp_to_dp",
    "compose",
    "calibrate_sigma",
    "choose_gamma",
    "dropout_epsilon",
    "privacy_report",
]

# Relative truncation threshold for the tau series and its chunk size.
_TAU_RELATIVE_TAIL = 1e-30
_TAU_CHUNK = 1 << 16

NORM_MODES = ("general", "optimistic")

_SIGMA_SEARCH_FACTOR = 1e6  # upper bracket for sigma: 1e6 * c
_GAMMA_REL_TOL = 1e-6
_SIGMA_REL_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class CommBudget:
    """Per-coordinate communication budget: ``bit_width`` bits per entry, a
    modular range of k aggregate standard deviations, and the norm regime
    used for the data term (``general``: ||sum x_i|| <= c n; ``optimistic``:
    <= c sqrt(n), for nearly-orthogonal client vectors)."""

    bit_width: int
    k: float
    norm_mode: str = "general"

    def __post_init__(self):
        if self.bit_width < 1:
            raise ValueError(f"bit_width must be at least 1, got {self.bit_width}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {self.norm_mode!r}")

    def sum_norm_bound(self, c, n):
        if self.norm_mode == "general":
            return c * n
        return c * math.sqrt(n)


@dataclasses.dataclass(frozen=True)
class PrivacyReport:
    """One configuration's complete privacy summary.

    ``eps_zcdp`` is the epsilon with (eps^2/2)-zCDP, ``rho`` that same
    guarantee in rho form, and ``eps_dp`` the approximate-DP epsilon at
    ``delta``.  Composition over rounds multiplies rho by the round count and
    assumes every client participates in every round.
    """

    delta2: SensitivityBound
    tau: float
    eps_zcdp: float
    rho: float
    eps_dp: float
    delta: float
    branch_used: str

    def __post_init__(self):
        if not math.isclose(self.rho, 0.5 * self.eps_zcdp**2, rel_tol=1e-12):
            raise ValueError("rho must equal eps_zcdp^2 / 2")
        closed_form = self.rho + 2.0 * math.sqrt(self.rho * math.log(1.0 / self.delta))
        if self.eps_dp > closed_form * (1.0 + 1e-12):
            raise ValueError(
                f"eps_dp = {self.eps_dp} exceeds its closed-form bound {closed_form}"
            )


def tau(sigma_grid, n):
    """Convolution penalty tau = 10 sum_{k=1}^{n-1} exp(-2 pi^2 s^2 k/(k+1))
    for grid-unit noise scale s = sigma/gamma >= 1/2.

    Terms decrease in k, so once (remaining count) * (current term) drops
    below 1e-30 of the partial sum the rest is dropped.
    """
    if not sigma_grid >= 0.5:
        raise ValueError(f"sigma/gamma must be at least 1/2, got {sigma_grid}")
    if n < 1 or n != int(n):
        raise ValueError(f"n must be a positive integer, got {n}")
    rate = 2.0 * math.pi**2 * sigma_grid**2
    total = 0.0
    k = 1
    while k <= n - 1:
        stop = min(n - 1, k + _TAU_CHUNK - 1)
        ks = np.arange(k, stop + 1, dtype=np.float64)
        terms = np.exp(-rate * ks / (ks + 1.0))
        total += float(terms.sum())
        last = float(terms[-1])
        if last == 0.0 or (n - 1 - stop) * last <= _TAU_RELATIVE_TAIL * total:
            break
        k = stop + 1
    return 10.0 * total


def _branches(delta2, sigma, n, d, tau_value, delta1):
    scaled = delta2 / (math.sqrt(n) * sigma)
    values = {
        "quadrature": math.sqrt(scaled**2 + 0.5 * tau_value * d),
        "additive": scaled + tau_value * math.sqrt(d),
    }
    if delta1 is not None:
        values["cross"] = math.sqrt(
            scaled**2 + 2.0 * delta1 * tau_value / (math.sqrt(n) * sigma) + tau_value**2 * d
        )
    return values


def epsilon_zcdp(delta2, sigma, gamma, n, d, delta1=None):
    """zCDP epsilon for summing n clients' noised contributions.

    Default is the minimum of the two standard branches,

        sqrt(delta2^2/(n sigma^2) + tau d / 2)   ("quadrature")
        delta2/(sqrt(n) sigma) + tau sqrt(d)     ("additive");

    supplying ``delta1`` (an l1 sensitivity bound, at most sqrt(d) * delta2)
    adds the cross-term branch sqrt(delta2^2/(n sigma^2)
    + 2 delta1 tau/(sqrt(n) sigma) + tau^2 d).  Returns (eps, branch_used).
    """
    if not delta2 > 0:
        raise ValueError(f"delta2 must be positive, got {delta2}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")
    if delta1 is not None:
        if not 0 < delta1 <= math.sqrt(d) * delta2 * (1.0 + 1e-12):
            raise ValueError(
                f"delta1 must lie in (0, sqrt(d) * delta2], got {delta1}"
            )
    tau_value = tau(sigma / gamma, n)  # also enforces sigma/gamma >= 1/2
    values = _branches(delta2, sigma, n, d, tau_value, delta1)
    branch = min(values, key=values.get)
    assert all(values[branch] <= v for v in values.values())
    return values[branch], branch


def zcdp_to_dp(rho, delta):
    """Approximate-DP epsilon at ``delta`` for a rho-zCDP mechanism:

        eps(delta) = inf_{alpha > 1} rho alpha + log(1/(alpha delta))/(alpha - 1)
                     + log(1 - 1/alpha),

    minimized numerically (the objective is unimodal in alpha on every
    tested configuration) and capped by the closed form
    rho + 2 sqrt(rho log(1/delta)).  Floored at zero: a negative infimum
    (possible when delta is large relative to rho) certifies (0, delta)-DP.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_inv_delta = -math.log(delta)
    closed_form = rho + 2.0 * math.sqrt(rho * log_inv_delta)

    def objective(u):
        # alpha = 1 + e^u keeps the search unconstrained, and working with
        # alpha - 1 = e^u directly avoids cancellation near alpha = 1.
        alpha_m1 = math.exp(u)
        alpha = 1.0 + alpha_m1
        log_alpha = math.log1p(alpha_m1)
        # last term: log(1 - 1/alpha) = log((alpha - 1)/alpha) = u - log(alpha)
        return rho * alpha + (log_inv_delta - log_alpha) / alpha_m1 + (u - log_alpha)

    result = optimize.minimize_scalar(
        objective, bounds=(-50.0, 50.0), method="bounded", options={"xatol": 1e-10}
    )
    return max(0.0, min(closed_form, float(result.fun)))


def compose(rho_per_round, rounds):
    """rho after ``rounds`` adaptive repetitions (zCDP composes linearly)."""
    if rounds < 1 or rounds != int(rounds):
        raise ValueError(f"rounds must be a positive integer, got {rounds}")
    if not rho_per_round > 0:
        raise ValueError(f"rho must be positive, got {rho_per_round}")
    return rounds * rho_per_round


def calibrate_sigma(target_eps, c, gamma, beta, n, d):
    """Smallest sigma (original units) whose zCDP epsilon meets target_eps.

    epsilon(sigma) is continuous and strictly decreasing on [gamma/2, inf),
    so plain bisection applies; the bracket is [gamma/2, 1e6 c].  Returns
    gamma/2 when even the smallest admissible sigma already meets the
    target.
    """
    if not target_eps > 0:
        raise ValueError(f"target_eps must be positive, got {target_eps}")
    bound = delta2_bound(c, RoundingParams(gamma=gamma, beta=beta, dim=d))

    def eps_at(sigma):
        return epsilon_zcdp(bound.delta2, sigma, gamma, n, d)[0]

    lo = gamma / 2.0
    if eps_at(lo) <= target_eps:
        return lo
    hi = max(_SIGMA_SEARCH_FACTOR * c, 2.0 * lo)
    floor_eps = eps_at(hi)
    if floor_eps > target_eps:
        raise ValueError(
            f"target eps = {target_eps:.6g} is unachievable at gamma = {gamma:.6g}: "
            f"achievable range is [{floor_eps:.6g}, {eps_at(lo):.6g}]"
        )
    while hi - lo > _SIGMA_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= target_eps:
            hi = mid
        else:
            lo = mid
    return hi


def _smallest_feasible(feasible, lo, hi, points=64):
    """Smallest feasible point on a log grid over [lo, hi], refined by
    bisection against its infeasible left neighbor.  Fallback for when
    feasibility is not monotone; returns None if the whole grid fails."""
    grid = np.geomspace(lo, hi, points)
    for i, g in enumerate(grid):
        if feasible(float(g)):
            if i == 0:
                return float(grid[0])
            left, right = float(grid[i - 1]), float(g)
            while right - left > _GAMMA_REL_TOL * right:
                mid = 0.5 * (left + right)
                if feasible(mid):
                    right = mid
                else:
                    left = mid
            return right
    return None


def choose_gamma(budget, target_eps, c, beta, n, d, delta=1e-6):
    """Smallest granularity gamma whose calibrated configuration fits the
    bit-width budget, together with its sigma and privacy report.

    The fit condition puts k aggregate standard deviations inside the
    modular range: k * s(gamma) <= 2^(B-1), where

        s(gamma)^2 = S^2/(gamma^2 d) + n (1/4 + sigma(gamma)^2/gamma^2),

    S is the norm-mode bound on ||sum x_i||, and sigma(gamma) is calibrated
    to target_eps at each gamma.  s decreases in gamma, so the feasible set
    is one-sided and bisection finds its boundary; a log-grid fallback scan
    handles the (never observed) non-monotone case.
    """
    S = budget.sum_norm_bound(c, n)
    range_half = 2.0 ** (budget.bit_width - 1)

    def ratio_at(gamma):
        """k * s(gamma) / 2^(B-1), or None when no sigma meets the target."""
        try:
            sigma = calibrate_sigma(target_eps, c, gamma, beta, n, d)
        except ValueError:
            return None, None
        s_sq = S**2 / (gamma**2 * d) + n * (0.25 + sigma**2 / gamma**2)
        return budget.k * math.sqrt(s_sq) / range_half, sigma

    def feasible(gamma):
        ratio, _ = ratio_at(gamma)
        return ratio is not None and ratio <= 1.0

    def finish(gamma):
        _, sigma = ratio_at(gamma)
        return gamma, sigma, privacy_report(c, gamma, sigma, beta, n, d, delta)

    # The data term alone forces gamma >= k S / (2^(B-1) sqrt(d)), so this
    # start is always infeasible (strictly, since the noise terms are
    # positive) and doubling from it crosses the boundary.
    start = budget.k * S / (range_half * math.sqrt(d))
    hi = start
    found = False
    best_ratio, best_gamma = math.inf, start
    prev_ratio = math.inf
    for _ in range(200):
        hi *= 2.0
        ratio, _ = ratio_at(hi)
        if ratio is None:
            prev_ratio = math.inf
            continue
        if ratio < best_ratio:
            best_ratio, best_gamma = ratio, hi
        if ratio <= 1.0:
            found = True
            break
        if abs(prev_ratio - ratio) <= 1e-9 * ratio:
            break  # ratio has plateaued above 1: no headroom left
        prev_ratio = ratio
    if not found:
        # Doubling can step over a narrow feasible window; scan before
        # declaring the budget infeasible.
        scanned = _smallest_feasible(feasible, start, max(hi, 2.0 * start))
        if scanned is None:
            raise ValueError(
                f"no feasible gamma for bit_width={budget.bit_width}, k={budget.k}, "
                f"norm_mode={budget.norm_mode}: minimal k*s/2^(B-1) ratio is "
                f"{best_ratio:.4g} at gamma = {best_gamma:.4g}"
            )
        return finish(scanned)

    lo = hi / 2.0  # the previous doubling point, which was infeasible
    while hi - lo > _GAMMA_REL_TOL * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    gamma = hi

    # Verify the one-sidedness assumption above the boundary; fall back to a
    # grid scan if feasibility turns out not to be monotone here.
    if not all(feasible(gamma * factor) for factor in (1.5, 2.5, 5.0, 10.0)):
        scanned = _smallest_feasible(feasible, gamma / 1024.0, gamma * 1e4)
        if scanned is None:
            raise ValueError(
                f"no feasible gamma found by grid scan for bit_width={budget.bit_width}, "
                f"k={budget.k}, norm_mode={budget.norm_mode}"
            )
        gamma = scanned

    return finish(gamma)


def dropout_epsilon(delta2, sigma, gamma, n, d, drop_fraction, delta1=None):
    """zCDP epsilon when a ``drop_fraction`` of the n clients drop out.

    Only n' = ceil(n (1 - f)) noise shares survive; the per-client
    sensitivity is unaffected, so delta2 stays as supplied.
    """
    if not 0 <= drop_fraction < 1:
        raise ValueError(f"drop_fraction must lie in [0, 1), got {drop_fraction}")
    survivors = math.ceil(n * (1.0 - drop_fraction))
    eps, _ = epsilon_zcdp(delta2, sigma, gamma, survivors, d, delta1)
    return eps


def privacy_report(c, gamma, sigma, beta, n, d, delta, delta1=None):
    """Assemble the full PrivacyReport for one configuration."""
    bound = delta2_bound(c, RoundingParams(gamma=gamma, beta=beta, dim=d))
    tau_value = tau(sigma / gamma, n)
    eps, branch = epsilon_zcdp(bound.delta2, sigma, gamma, n, d, delta1)
    rho = 0.5 * eps * eps
    return PrivacyReport(
        delta2=bound,
        tau=tau_value,
        eps_zcdp=eps,
        rho=rho,
        eps_dp=zcdp_to_dp(rho, delta),
        delta=delta,
        branch_used=branch,
    )
