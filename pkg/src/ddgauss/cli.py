"""Command line: experiment sweeps (``dme``), one-shot privacy accounting
(``account``), and self-verification suites (``verify``).

Configuration precedence for ``dme``: explicit flags > config file values >
the DDGAUSS_SEED environment variable (seed only) > built-in defaults.  The
config file is JSON; a previous run's manifest sidecar is also accepted and
re-running from it reproduces the CSV byte for byte (the manifest's
``created_utc`` is metadata, not an input).

All numeric output is printed through a fixed significant-digit format
(default 12) so golden files stay stable.
"""

import csv
import dataclasses
import datetime
import json
import math
import os

import click
import numpy as np

from ddgauss import __version__
from ddgauss.accountant import NORM_MODES, compose, dropout_epsilon, epsilon_zcdp, tau, zcdp_to_dp
from ddgauss.dgauss import NoiseScale, convolution_max_log_ratio, exact_pmf, sample_dgauss_batch
from ddgauss.dme import DmeConfig, run_dme
from ddgauss.flatten import SignVector, flatten, unflatten, wht
from ddgauss.rounding import RoundingParams, SensitivityBound, conditional_round, delta2_bound, randomized_round

SEED_ENV_VAR = "DDGAUSS_SEED"
DEFAULT_DIGITS = 12

CSV_COLUMNS = (
    "eps",
    "delta",
    "B",
    "k",
    "norm_mode",
    "n",
    "d",
    "c",
    "gamma",
    "sigma",
    "mse_ddgauss_mean",
    "mse_ddgauss_ci",
    "mse_baseline_mean",
    "mse_baseline_ci",
    "wraparound_rate",
    "theory_bound",
    "status",
)

# Fields a dme config must provide (everything else has defaults).
_REQUIRED_CONFIG_FIELDS = ("n", "d", "c", "eps_targets", "delta", "bit_widths", "k_values")

# Seed for the verify suites' sample draws, pinned so the statistical checks
# are reproducible run to run.
VERIFY_SEED = 6


def _fmt(value, digits):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.{digits}g}"


def _rounded(value, digits):
    """Round a float through the output format so JSON and text agree."""
    return float(f"{value:.{digits}g}")


@click.group()
@click.version_option(version=__version__)
def main():
    """Distributed discrete Gaussian aggregation toolkit."""


# --------------------------------------------------------------------------
# dme


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config file, or a previous run's manifest.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default="dme_results.csv",
              show_default=True, help="CSV output path; the manifest sidecar adds .manifest.json.")
@click.option("--n", type=int, help="Number of clients.")
@click.option("--d", type=int, help="Vector dimension.")
@click.option("--c", type=float, help="Clip norm.")
@click.option("--eps", multiple=True, type=float, help="Target zCDP epsilon (repeatable).")
@click.option("--delta", type=float, help="Approximate-DP delta for reporting.")
@click.option("--bits", multiple=True, type=int, help="Bit width B (repeatable).")
@click.option("--k", multiple=True, type=float, help="Std-deviation multiplier k (repeatable).")
@click.option("--norm-mode", type=click.Choice(NORM_MODES), help="Sum-norm bound regime.")
@click.option("--trials", type=int, help="Dataset initializations per sweep point.")
@click.option("--beta", type=float, help="Conditional rounding failure parameter.")
@click.option("--seed", type=int, help=f"Master seed (default: ${SEED_ENV_VAR} or 0).")
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True,
              help="Significant digits in the CSV.")
def dme(config_path, output, n, d, c, eps, delta, bits, k, norm_mode, trials, beta, seed, digits):
    """Run the mean-estimation sweep and write one CSV row per point."""
    values = {}
    if config_path:
        with open(config_path) as fh:
            document = json.load(fh)
        if "config" in document and document.get("tool") == "ddgauss":
            document = document["config"]
        values.update(document)

    overrides = {
        "n": n,
        "d": d,
        "c": c,
        "eps_targets": tuple(eps) or None,
        "delta": delta,
        "bit_widths": tuple(bits) or None,
        "k_values": tuple(k) or None,
        "norm_mode": norm_mode,
        "trials": trials,
        "beta": beta,
        "master_seed": seed,
    }
    values.update({key: v for key, v in overrides.items() if v is not None})

    if "master_seed" not in values:
        values["master_seed"] = int(os.environ.get(SEED_ENV_VAR, "0"))
    for field in _REQUIRED_CONFIG_FIELDS:
        if field not in values:
            raise click.UsageError(f"missing required config field: {field}")
    known = {f.name for f in dataclasses.fields(DmeConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise click.UsageError(f"unknown config fields: {', '.join(unknown)}")
    try:
        cfg = DmeConfig(**values)
    except ValueError as error:
        raise click.UsageError(str(error))

    rows = run_dme(cfg)

    with open(output, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    _fmt(row.eps, digits),
                    _fmt(cfg.delta, digits),
                    _fmt(row.bit_width, digits),
                    _fmt(row.k, digits),
                    cfg.norm_mode,
                    _fmt(cfg.n, digits),
                    _fmt(cfg.d, digits),
                    _fmt(cfg.c, digits),
                    _fmt(row.gamma, digits),
                    _fmt(row.sigma, digits),
                    _fmt(row.mse_ddgauss, digits),
                    _fmt(row.mse_ddgauss_ci, digits),
                    _fmt(row.mse_baseline, digits),
                    _fmt(row.mse_baseline_ci, digits),
                    _fmt(row.wraparound_rate, digits),
                    _fmt(row.mse_theory_bound, digits),
                    row.status,
                ]
            )

    manifest = {
        "tool": "ddgauss",
        "version": __version__,
        "master_seed": cfg.master_seed,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": dataclasses.asdict(cfg),
    }
    with open(output + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {len(rows)} rows to {output}")


# --------------------------------------------------------------------------
# account


@main.command()
@click.option("--n", required=True, type=int, help="Number of clients.")
@click.option("--d", required=True, type=int, help="Vector dimension.")
@click.option("--sigma", required=True, type=float, help="Noise scale, original units.")
@click.option("--gamma", required=True, type=float, help="Grid granularity.")
@click.option("--c", type=float, help="Clip norm (omit when overriding delta2).")
@click.option("--beta", type=float, default=math.exp(-0.5), show_default="exp(-1/2)",
              help="Conditional rounding failure parameter.")
@click.option("--delta", type=float, default=1e-6, show_default=True,
              help="Delta for the approximate-DP conversion.")
@click.option("--rounds", "-T", type=int, default=1, show_default=True,
              help="Compose over this many rounds (full participation).")
@click.option("--drop-fraction", type=float, help="Also report epsilon with this dropout fraction.")
@click.option("--delta2-override", type=float,
              help="Use this l2 sensitivity instead of the rounding bound.")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as one JSON object.")
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True)
def account(n, d, sigma, gamma, c, beta, delta, rounds, drop_fraction, delta2_override,
            as_json, digits):
    """Print the privacy report for one configuration."""
    try:
        if delta2_override is not None:
            bound = SensitivityBound(
                delta2=delta2_override, delta2_grid=delta2_override / gamma, branch="override"
            )
        elif c is not None:
            bound = delta2_bound(c, RoundingParams(gamma=gamma, beta=beta, dim=d))
        else:
            raise click.UsageError("pass --c or --delta2-override")
        eps, branch = epsilon_zcdp(bound.delta2, sigma, gamma, n, d)
        tau_value = tau(sigma / gamma, n)
        rho = 0.5 * eps * eps
        rho_composed = compose(rho, rounds)
        eps_dp = zcdp_to_dp(rho, delta)
        report = {
            "delta2": _rounded(bound.delta2, digits),
            "delta2_branch": bound.branch,
            "tau": _rounded(tau_value, digits),
            "eps_zcdp": _rounded(eps, digits),
            "branch_used": branch,
            "rho": _rounded(rho, digits),
            "rounds": rounds,
            "rho_composed": _rounded(rho_composed, digits),
            "delta": _rounded(delta, digits),
            "eps_dp": _rounded(eps_dp, digits),
        }
        if drop_fraction is not None:
            eps_drop = dropout_epsilon(bound.delta2, sigma, gamma, n, d, drop_fraction)
            report["drop_fraction"] = _rounded(drop_fraction, digits)
            report["eps_zcdp_dropout"] = _rounded(eps_drop, digits)
    except ValueError as error:
        raise click.UsageError(str(error))

    if as_json:
        click.echo(json.dumps(report, indent=2))
        return
    width = max(len(key) for key in report)
    for key, value in report.items():
        shown = value if isinstance(value, str) else _fmt(value, digits)
        click.echo(f"{key:<{width}} = {shown}")


# --------------------------------------------------------------------------
# verify


@dataclasses.dataclass(frozen=True)
class SuiteCheck:
    """One verification check: what was measured and whether it passed."""

    name: str
    passed: bool
    detail: str


def _check(name, passed, detail):
    return SuiteCheck(name=name, passed=bool(passed), detail=detail)


def _verify_rng(*key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((VERIFY_SEED,) + key)))


def _suite_convolution(digits):
    scale = NoiseScale.from_variance(3)
    measured = convolution_max_log_ratio(2, scale, 60)
    checks = [
        _check(
            "two_fold_log_ratio",
            measured <= 1e-12,
            f"max |log ratio| = {_fmt(measured, digits)} (bound 1e-12)",
        )
    ]
    # n-fold closeness against the series bound 5 sum e^(-2 pi^2 s^2 k/(k+1)),
    # which is tau/2.
    for count in (3, 5):
        measured = convolution_max_log_ratio(count, scale, 60)
        bound = tau(math.sqrt(3.0), count) / 2.0
        checks.append(
            _check(
                f"{count}_fold_log_ratio",
                measured <= bound,
                f"max |log ratio| = {_fmt(measured, digits)} (bound {_fmt(bound, digits)})",
            )
        )
    return checks


def _suite_sampler(digits):
    unit = NoiseScale(1)
    radius = 30
    law = exact_pmf(unit, radius, tolerance=1e-15)
    draws = sample_dgauss_batch(unit, 1_000_000, _verify_rng(1))
    counts = np.bincount((draws + radius).clip(0, 2 * radius), minlength=2 * radius + 1)
    empirical = counts / draws.size
    tv = 0.5 * float(np.abs(empirical - law.masses).sum())
    checks = [
        _check("tv_distance", tv <= 0.005, f"TV = {_fmt(tv, digits)} (bound 0.005)"),
    ]
    law_var = float(np.sum(law.masses * np.arange(-radius, radius + 1, dtype=np.float64) ** 2))
    checks.append(
        _check(
            "law_variance_below_scale",
            law_var < 1.0,
            f"exact pmf variance = {_fmt(law_var, digits)} (< 1)",
        )
    )
    for s, key in ((1.0, 1), (3.0, 9)):
        sample = draws if key == 1 else sample_dgauss_batch(NoiseScale(s), 1_000_000, _verify_rng(key))
        variance = float(sample.var())
        checks.append(
            _check(
                f"sample_variance_s{key}",
                variance < s * s,
                f"variance = {_fmt(variance, digits)} (< {_fmt(s * s, digits)})",
            )
        )
    return checks


def _suite_transform(digits):
    rng = _verify_rng(2)
    d = 4096
    x = rng.normal(size=d)
    y = wht(x)
    unitarity = abs(float(np.linalg.norm(y)) / float(np.linalg.norm(x)) - 1.0)
    checks = [
        _check("unitarity", unitarity <= 1e-9, f"norm ratio error = {_fmt(unitarity, digits)}"),
        _check(
            "involution",
            float(np.max(np.abs(wht(y, direction="inverse") - x))) <= 1e-9,
            "double transform returns the input",
        ),
    ]
    xi = SignVector.from_seed(VERIFY_SEED, d)
    round_trip = float(np.max(np.abs(unflatten(flatten(x, xi), xi) - x)))
    checks.append(
        _check(
            "flatten_round_trip",
            round_trip <= 1e-9,
            f"max |round trip - input| = {_fmt(round_trip, digits)}",
        )
    )
    return checks


def _suite_rounding(digits):
    rng = _verify_rng(3)
    gamma, beta, d, c = 0.25, math.exp(-0.5), 256, 1.0
    params = RoundingParams(gamma=gamma, beta=beta, dim=d)
    bound = delta2_bound(c, params)
    worst = 0.0
    for _ in range(200):
        x = rng.normal(size=d)
        x *= rng.uniform(0.0, c) / np.linalg.norm(x)
        rounded, _ = conditional_round(x / gamma, c, params, rng)
        worst = max(worst, float(np.linalg.norm(rounded)) / bound.delta2_grid)
    checks = [
        _check(
            "conditional_norm_cap",
            worst <= 1.0,
            f"max ||rounded|| / delta2_grid = {_fmt(worst, digits)} (<= 1)",
        )
    ]
    reps, dim = 50_000, 64
    target = rng.normal(size=dim) * 0.1
    acc = np.zeros(dim)
    for _ in range(reps):
        acc += randomized_round(target, gamma, rng)
    bias = float(np.max(np.abs(acc / reps - target)))
    threshold = 5.0 * gamma / (2.0 * math.sqrt(reps))
    checks.append(
        _check(
            "unbiasedness",
            bias <= threshold,
            f"max |empirical bias| = {_fmt(bias, digits)} (threshold {_fmt(threshold, digits)})",
        )
    )
    return checks


_SUITES = {
    "convolution": _suite_convolution,
    "sampler": _suite_sampler,
    "transform": _suite_transform,
    "rounding": _suite_rounding,
}


def run_suite(name, digits=DEFAULT_DIGITS):
    """Run one verification suite; returns its list of SuiteChecks."""
    return _SUITES[name](digits)


@main.command()
@click.argument("suites", nargs=-1, required=True, type=click.Choice(sorted(_SUITES)))
@click.option("--digits", type=int, default=DEFAULT_DIGITS, show_default=True)
@click.pass_context
def verify(ctx, suites, digits):
    """Run verification suites; exit 0 only if every check passes."""
    failed = 0
    for name in dict.fromkeys(suites):
        for check in run_suite(name, digits):
            status = "PASS" if check.passed else "FAIL"
            failed += not check.passed
            click.echo(f"{status} {name}.{check.name}: {check.detail}")
    if failed:
        click.echo(f"{failed} check(s) failed")
        ctx.exit(1)
    click.echo("all checks passed")


if __name__ == "__main__":
    main()
