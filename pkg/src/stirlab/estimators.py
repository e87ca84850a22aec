"""Survival probabilities, critical-value scans and the asymptotics report.

Survival to infinity is not observable, so a trajectory counts as a survival
proxy hit when its mass reaches ``policy.mass_cap`` before ``policy.horizon``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .rng import replicate_seed
from .simulator import MASS_CAP, OUTCOME_NAMES, BatchResult, ModelParams, StopPolicy, run_batch
from .walk import neighbor_occupation_series

DEFAULT_THRESHOLD = 0.05
DEFAULT_MAX_REPS = 100_000
Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("wilson_interval needs trials >= 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes={successes} outside [0, {trials}]")
    n = float(trials)
    p = successes / n
    z2 = z * z
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = z / (1 + z2 / n) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == trials else min(1.0, centre + half)
    return low, high


@dataclass(frozen=True)
class SurvivalEstimate:
    params: ModelParams
    policy: StopPolicy
    seed: int
    reps: int
    successes: int
    rho_hat: float
    ci_low: float
    ci_high: float
    outcomes: dict[str, int] = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.rho_hat * (1 - self.rho_hat) / self.reps)


def _estimate(p: ModelParams, policy: StopPolicy, seed: int, batches: list[BatchResult]) -> SurvivalEstimate:
    reps = sum(b.reps for b in batches)
    hits = sum(b.count(MASS_CAP) for b in batches)
    outcomes = {name: sum(b.count(code) for b in batches) for code, name in OUTCOME_NAMES.items()}
    lo, hi = wilson_interval(hits, reps)
    return SurvivalEstimate(p, policy, seed, reps, hits, hits / reps, lo, hi, outcomes)


def survival_probability(p: ModelParams, policy: StopPolicy, reps: int, seed: int,
                         threads: int | None = None) -> SurvivalEstimate:
    """Fraction of trajectories from one particle that reach the mass cap."""
    if reps < 30:
        raise ValueError("survival_probability needs reps >= 30")
    return _estimate(p, policy, seed, [run_batch(p, policy, reps, seed, threads=threads)])


@dataclass(frozen=True)
class LevelRecord:
    """One bisection level: the estimate and how it was classified."""

    lam: float
    estimate: SurvivalEstimate
    verdict: str  # "super", "sub" or "inconclusive"


@dataclass(frozen=True)
class CriticalScanResult:
    d: int
    N: float
    lambda_lo: float
    lambda_hi: float
    lambda_hat: float
    threshold: float
    seed: int
    diagnostics: list[LevelRecord]
    inconclusive: bool
    monotonicity_violations: int

    @property
    def n_times_gap(self) -> float:
        return self.N * (self.lambda_hat - 1.0)


def _classify(d: int, N: float, lam: float, threshold: float, reps: int, max_reps: int,
              policy: StopPolicy, seed: int, threads: int | None) -> LevelRecord:
    """Double the replicates until the Wilson interval excludes ``threshold``.

    Earlier replicates are kept: doubling runs replicates n .. 2n-1 of the
    same level seed.
    """
    p = ModelParams(d, N, lam)
    batches = [run_batch(p, policy, reps, seed, threads=threads)]
    while True:
        est = _estimate(p, policy, seed, batches)
        if est.ci_low > threshold:
            return LevelRecord(lam, est, "super")
        if est.ci_high < threshold:
            return LevelRecord(lam, est, "sub")
        if est.reps >= max_reps:
            return LevelRecord(lam, est, "inconclusive")
        extra = min(est.reps, max_reps - est.reps)
        batches.append(run_batch(p, policy, extra, seed, start=est.reps, threads=threads))


def _monotonicity_violations(levels: list[LevelRecord]) -> int:
    """Pairs of levels where rho_hat drops with lambda by more than 2 sigma."""
    ordered = sorted(levels, key=lambda r: r.lam)
    bad = 0
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            se = math.hypot(a.estimate.stderr, b.estimate.stderr)
            if a.estimate.rho_hat - b.estimate.rho_hat > 2 * se and se > 0:
                bad += 1
    return bad


def critical_scan(d: int, N: float, threshold: float = DEFAULT_THRESHOLD, reps_per_level: int = 1000,
                  policy: StopPolicy | None = None, seed: int = 0, tol_lambda: float | None = None,
                  max_reps: int = DEFAULT_MAX_REPS, max_widen: int = 20,
                  threads: int | None = None) -> CriticalScanResult:
    """Bisection for the birth rate at which the proxy survival probability
    crosses ``threshold``.

    The bracket starts at [1, 1 + 4 theta/N] and is widened upward until its
    top level is supercritical.  Levels are classified only once the Wilson
    interval excludes the threshold; if ``max_reps`` is reached first the
    scan stops there and is flagged inconclusive.  Level ``k`` draws its
    replicates from ``replicate_seed(seed, k)``.
    """
    if not 0 < threshold < 0.5:
        raise ValueError("threshold must lie in (0, 0.5)")
    if reps_per_level < 30 or max_reps < reps_per_level:
        raise ValueError("need 30 <= reps_per_level <= max_reps")
    policy = policy or StopPolicy()
    theta = neighbor_occupation_series(d).theta if tol_lambda is None or d >= 3 else None
    if tol_lambda is None:
        tol_lambda = theta / (4 * N)
    width0 = 4 * theta / N if theta is not None else 8 * tol_lambda
    levels: list[LevelRecord] = []

    def level(lam: float) -> LevelRecord:
        rec = _classify(d, N, lam, threshold, reps_per_level, max_reps, policy,
                        replicate_seed(seed, len(levels)), threads)
        levels.append(rec)
        return rec

    def result(lo: float, hi: float, inconclusive: bool) -> CriticalScanResult:
        return CriticalScanResult(d, N, lo, hi, 0.5 * (lo + hi), threshold, seed, levels,
                                  inconclusive, _monotonicity_violations(levels))

    lo, hi = 1.0, 1.0 + width0
    r = level(lo)
    if r.verdict != "sub":
        # a critical branching process dominates at lambda = 1
        return result(lo, hi, True)
    for _ in range(max_widen):
        r = level(hi)
        if r.verdict == "super":
            break
        if r.verdict == "inconclusive":
            return result(lo, hi, True)
        lo, hi = hi, 1.0 + 2 * (hi - 1.0)
    else:
        return result(lo, hi, True)
    while hi - lo > tol_lambda:
        mid = 0.5 * (lo + hi)
        r = level(mid)
        if r.verdict == "inconclusive":
            return result(lo, hi, True)
        if r.verdict == "super":
            hi = mid
        else:
            lo = mid
    return result(lo, hi, False)


@dataclass(frozen=True)
class ScanConfig:
    threshold: float = DEFAULT_THRESHOLD
    reps_per_level: int = 1000
    max_reps: int = DEFAULT_MAX_REPS
    policy: StopPolicy = field(default_factory=StopPolicy)
    seed: int = 0
    tol_lambda: float | None = None
    threads: int | None = None


REPORT_COLUMNS = ["d", "N", "lambda_lo", "lambda_hat", "lambda_hi", "N_times_gap", "theta",
                  "green_bound", "konno_lower", "flags"]


@dataclass(frozen=True)
class ReportRow:
    d: int
    N: float
    lambda_lo: float
    lambda_hat: float
    lambda_hi: float
    N_times_gap: float
    theta: float
    green_bound: float
    konno_lower: float
    flags: str

    def as_list(self) -> list:
        return [self.d, self.N, repr(self.lambda_lo), repr(self.lambda_hat), repr(self.lambda_hi),
                repr(self.N_times_gap), repr(self.theta), repr(self.green_bound),
                repr(self.konno_lower), self.flags]


def konno_lower(d: int) -> float:
    return 1.0 / (2 * d * (2 * d - 1))


def asymptotics_report(d: int, N_list: list[float], config: ScanConfig | None = None) -> list[ReportRow]:
    """One critical scan per N, next to theta and the Green's-function bounds.

    ``flags`` joins ``outlier`` (N(lambda_hat - 1) outside [theta/2, 2 theta]),
    ``inconclusive`` and ``nonmonotone`` with ``;``.
    """
    if not N_list:
        return []
    config = config or ScanConfig()
    series = neighbor_occupation_series(d)
    green_bound = (series.green - 1) / (2 * d)
    rows = []
    for i, N in enumerate(N_list):
        scan = critical_scan(d, N, config.threshold, config.reps_per_level, config.policy,
                             replicate_seed(config.seed, i), config.tol_lambda, config.max_reps,
                             threads=config.threads)
        gap = scan.n_times_gap
        flags = []
        if not 0.5 * series.theta <= gap <= 2 * series.theta:
            flags.append("outlier")
        if scan.inconclusive:
            flags.append("inconclusive")
        if scan.monotonicity_violations:
            flags.append("nonmonotone")
        rows.append(ReportRow(d, N, scan.lambda_lo, scan.lambda_hat, scan.lambda_hi, gap,
                              series.theta, green_bound, konno_lower(d), ";".join(flags)))
    return rows


def write_report_csv(rows: list[ReportRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())
