"""First split of the founding particle in the speeded-up process.

Over the window [0, tau_N), tau_N = ln N / N^2, the founder dies at rate N and
splits at rate N + theta.  F1 is the event of exactly one split and no death on
either branch; Z1 additionally requires the two children to be neighbours at
tau_N.  Only the children's difference matters after the split, and it moves
as the stirred difference chain W (see :mod:`stirlab.walk`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy import special

from .parallel import run_chunked
from .rng import exponential, randbelow, replicate_seeds, seed_state, uniform
from .walk import chain_jump, h_integral, poisson_cutoff, walk_terms


@dataclass(frozen=True)
class LineageParams:
    d: int
    N: float
    theta: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.N + self.theta <= 0:
            raise ValueError("birth rate N + theta must be positive")

    @property
    def tau_N(self) -> float:
        return math.log(self.N) / self.N**2

    @property
    def branch_rate(self) -> float:
        """Total death + split rate of one particle, 2N + theta."""
        return 2 * self.N + self.theta


@dataclass(frozen=True)
class LineageTrialOutcome:
    f1: bool
    z1: bool
    split_time: float | None


@njit(cache=True, nogil=True)
def _trial(state, d, N, theta, tau, x):
    """Returns (f1, z1, split_time); split_time is nan without a first split."""
    a = 2.0 * N + theta
    s = exponential(state, a)
    if s >= tau:
        return False, False, np.nan
    if uniform(state) * a < N:
        return False, False, np.nan
    remaining = tau - s
    # both children: death N + split (N + theta) each
    if exponential(state, 2.0 * a) < remaining:
        return False, False, s
    # difference right after the split: a uniform unit vector
    for j in range(d):
        x[j] = 0
    m = randbelow(state, 2 * d)
    x[m // 2] = 1 if m % 2 == 0 else -1
    l1 = 1
    rate_out = 4.0 * d * N * N
    rate_in = (4.0 * d - 1.0) * N * N
    clock = 0.0
    while True:
        clock += exponential(state, rate_in if l1 == 1 else rate_out)
        if clock >= remaining:
            break
        l1 = chain_jump(state, x, d, l1, True)
    return True, l1 == 1, s


@njit(cache=True, nogil=True)
def _trial_kernel(d, N, theta, tau, seeds, f1, z1, split, start, stop):
    state = np.empty(4, dtype=np.uint64)
    x = np.zeros(d, dtype=np.int64)
    for r in range(start, stop):
        seed_state(seeds[r - start], state)
        a, b, s = _trial(state, d, N, theta, tau, x)
        f1[r] = a
        z1[r] = b
        split[r] = s


def simulate_lineage_trial(p: LineageParams, seed: int) -> LineageTrialOutcome:
    f1 = np.zeros(1, dtype=np.bool_)
    z1 = np.zeros(1, dtype=np.bool_)
    split = np.zeros(1)
    _trial_kernel(p.d, float(p.N), float(p.theta), p.tau_N, np.array([seed], dtype=np.uint64),
                  f1, z1, split, 0, 1)
    s = float(split[0])
    return LineageTrialOutcome(bool(f1[0]), bool(z1[0]), None if math.isnan(s) else s)


def f1_analytic(p: LineageParams) -> float:
    """P(F1) = (N+theta)/(2N+theta) e^{-(2N+theta)tau} (1 - e^{-(2N+theta)tau})."""
    x = p.branch_rate * p.tau_N
    return (p.N + p.theta) / p.branch_rate * math.exp(-x) * -math.expm1(-x)


def z1_analytic(p: LineageParams, n_max: int | None = None, variant: str = "F1") -> float:
    """E[Z1] in the uniform-split-time form

        (N+theta)/(2N+theta) e^{-k tau} (1 - e^{-(2N+theta) tau}) / (4dN^2 tau) * int_0^{4dN^2 tau} h,

    with k = 2N + theta (``variant="F1"``) or k = 2(N + theta) (``"printed"``).
    The integral is computed by adaptive quadrature.  This form becomes exact
    only as N -> infinity; :func:`z1_exact` gives the finite-N value.
    """
    if variant not in ("F1", "printed"):
        raise ValueError(f"unknown variant {variant!r}")
    tau = p.tau_N
    c = 4 * p.d * p.N**2
    if n_max is not None and n_max < poisson_cutoff(c * tau):
        raise ValueError(f"n_max={n_max} below the Poisson cutoff {poisson_cutoff(c * tau)}")
    k = p.branch_rate if variant == "F1" else 2 * (p.N + p.theta)
    x = p.branch_rate * tau
    pre = (p.N + p.theta) / p.branch_rate * math.exp(-k * tau) * -math.expm1(-x)
    return pre * h_integral(c * tau, p.d) / (c * tau)


def z1_exact(p: LineageParams) -> float:
    """Exact E[Z1] at finite N.

    With a = 2N + theta and r = tau - (split time), the joint density of a lone
    split at tau - r followed by two quiet children is (N+theta) e^{-a tau} e^{-a r},
    so split times near tau are favoured.  The children's difference then runs
    the W chain for time r from a uniform unit vector.  Uniformizing W at rate
    c = 4dN^2 and integrating the Poisson weights against e^{-a r} gives

        E[Z1] = (N+theta) e^{-a tau} sum_n w_{n+1} c^n (a+c)^{-(n+1)} P(Gamma(n+1) <= (a+c) tau)

    where w_n = P(W~_n in nbhd | W~_0 = 0) is the jump-chain occupation.
    """
    a = p.branch_rate
    c = 4 * p.d * p.N**2
    tau = p.tau_N
    n_max = poisson_cutoff((a + c) * tau) + 40
    _, _, w = walk_terms(p.d, n_max + 1)
    n = np.arange(n_max + 1)
    weights = np.exp(n * math.log(c / (a + c))) / (a + c) * special.gammainc(n + 1, (a + c) * tau)
    return float((p.N + p.theta) * math.exp(-a * tau) * np.sum(w[1:] * weights))


@dataclass(frozen=True)
class Z1Estimate:
    params: LineageParams
    reps: int
    f1_mean: float
    f1_stderr: float
    z1_mean: float
    z1_stderr: float
    inclusion_violations: int


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def estimate_z1(p: LineageParams, reps: int, seed: int, threads: int | None = None) -> Z1Estimate:
    """Monte Carlo of P(F1) and E[Z1] over independent lineage trials."""
    if reps < 1000:
        raise ValueError("estimate_z1 needs reps >= 1000")
    f1 = np.zeros(reps, dtype=np.bool_)
    z1 = np.zeros(reps, dtype=np.bool_)
    split = np.zeros(reps)

    def fill(a, b):
        _trial_kernel(p.d, float(p.N), float(p.theta), p.tau_N, replicate_seeds(seed, a, b),
                      f1, z1, split, a, b)

    run_chunked(fill, reps, threads, chunk=1 << 15)
    pf = float(f1.mean())
    pz = float(z1.mean())
    return Z1Estimate(p, reps, pf, _binomial_se(pf, reps), pz, _binomial_se(pz, reps),
                      int(np.count_nonzero(z1 & ~f1)))


GENEALOGY_COLUMNS = ["N", "theta", "d", "reps", "f1_mc", "f1_analytic", "z1_mc", "z1_analytic",
                     "f1_stderr", "z1_stderr"]


def write_genealogy_csv(rows: list[Z1Estimate], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GENEALOGY_COLUMNS)
        for e in rows:
            p = e.params
            w.writerow([p.N, p.theta, p.d, e.reps, repr(e.f1_mean), repr(f1_analytic(p)),
                        repr(e.z1_mean), repr(z1_analytic(p)), repr(e.f1_stderr), repr(e.z1_stderr)])
