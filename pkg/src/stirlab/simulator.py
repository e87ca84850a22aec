"""Event-driven kinetic Monte Carlo for the contact process with stirring.

Raw dynamics on Z^d, started from one particle at the origin: each particle
dies at rate 1, attempts a birth onto a uniform neighbour at rate lambda
(suppressed if the target is occupied), and attempts a stirring jump onto a
uniform neighbour at rate 2dN (a no-op if the target is occupied).

Per-particle stirring generates the same set-valued process as exchanging the
values on every edge at rate N: an occupied-empty edge fires at rate N either
way, and exchanges across empty-empty or occupied-occupied edges change nothing.

With k particles the total rate is k (1 + lambda + 2dN); a uniform particle and
an event type proportional to the rates are drawn at each Exponential waiting
time.  In speeded-up mode all rates are multiplied by N, which reports raw time
Nt as t.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from numba import njit

from .lattice import (COUNT, EMPTY, PAIRS, add_site, find_slot, in_range, move_particle, pack_key,
                      recount_pairs, remove_particle, table_insert, unit_shift)
from .parallel import run_chunked
from .rng import exponential, randbelow, replicate_seeds, seed_state, uniform

EXTINCT = 0
MASS_CAP = 1
ALIVE = 2
TRUNCATED = 3
OVERFLOW = 4
OUTCOME_NAMES = {EXTINCT: "extinct", MASS_CAP: "mass_cap", ALIVE: "alive",
                 TRUNCATED: "truncated", OVERFLOW: "overflow"}

UNOBSERVED = -1
DEFAULT_MAX_EVENTS = 10**9

TimeScale = Literal["raw", "speeded_up"]


@dataclass(frozen=True)
class ModelParams:
    d: int
    N: float
    birth_rate: float
    time_scale: TimeScale = "raw"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.birth_rate < 0:
            raise ValueError("birth rate must be >= 0")
        if self.time_scale not in ("raw", "speeded_up"):
            raise ValueError(f"unknown time scale {self.time_scale!r}")

    @classmethod
    def from_theta(cls, d: int, N: float, theta: float, time_scale: TimeScale = "raw") -> ModelParams:
        """lambda = 1 + theta / N."""
        return cls(d, N, 1.0 + theta / N, time_scale)

    @property
    def theta(self) -> float:
        return (self.birth_rate - 1.0) * self.N

    @property
    def rate_scale(self) -> float:
        return float(self.N) if self.time_scale == "speeded_up" else 1.0


@dataclass(frozen=True)
class StopPolicy:
    horizon: float = 200.0
    mass_cap: int = 1000
    checkpoints: tuple[float, ...] = ()
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.mass_cap < 1:
            raise ValueError("mass_cap must be >= 1")
        cp = tuple(float(c) for c in self.checkpoints)
        if list(cp) != sorted(cp) or any(c < 0 or c > self.horizon for c in cp):
            raise ValueError("checkpoints must be sorted and lie in [0, horizon]")
        object.__setattr__(self, "checkpoints", cp)


@dataclass(frozen=True)
class TrajectorySummary:
    outcome: str
    stop_time: float
    mass_samples: np.ndarray = field(repr=False)
    pair_samples: np.ndarray = field(repr=False)
    checkpoints: tuple[float, ...]
    event_count: int
    seed: int
    pair_mismatches: int = 0

    @property
    def truncated(self) -> bool:
        return self.outcome == "truncated"

    def to_json(self) -> str:
        return json.dumps({"outcome": self.outcome, "stop_time": self.stop_time,
                           "checkpoints": list(self.checkpoints),
                           "event_count": self.event_count, "seed": self.seed})

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "pairs"])
            for t, m, p in zip(self.checkpoints, self.mass_samples, self.pair_samples):
                w.writerow([repr(t), int(m), int(p)])


MIN_TABLE = 256


@njit(cache=True, nogil=True)
def _rebuild(size, pkeys, count):
    tkeys = np.full(size, EMPTY, dtype=np.int64)
    tvals = np.zeros(size, dtype=np.int64)
    for i in range(count):
        table_insert(tkeys, tvals, pkeys[i], i)
    return tkeys, tvals


@njit(cache=True, nogil=True)
def _run_one(d, N, lam, scale, horizon, mass_cap, checkpoints, max_events, verify, track,
             state, pos, pkeys, meta, coords, mass_out, pair_out):
    """One trajectory from delta_0.  Returns (outcome, stop_time, events, mismatches).

    The hash table starts small and doubles at load 1/4, so sparse runs with a
    large mass cap keep it cache-resident.
    """
    tkeys, tvals = _rebuild(MIN_TABLE, pkeys, 0)
    meta[COUNT] = 0
    meta[PAIRS] = 0
    for j in range(d):
        coords[j] = 0
    add_site(tkeys, tvals, pos, pkeys, meta, coords, pack_key(coords, d), d, track)
    n_cp = checkpoints.shape[0]
    ci = 0
    t = 0.0
    events = 0
    mismatches = 0
    per_particle = 1.0 + lam + 2.0 * d * N
    outcome = ALIVE
    if meta[COUNT] >= mass_cap:
        outcome = MASS_CAP
    while outcome == ALIVE:
        k = meta[COUNT]
        t_next = t + exponential(state, k * per_particle * scale)
        # state is right-continuous: a checkpoint before the next event sees the current state
        while ci < n_cp and checkpoints[ci] < t_next:
            mass_out[ci] = k
            pair_out[ci] = meta[PAIRS]
            if verify and recount_pairs(tkeys, pkeys, k, d) != meta[PAIRS]:
                mismatches += 1
            ci += 1
        if t_next > horizon:
            t = horizon
            break
        if events >= max_events:
            outcome = TRUNCATED
            break
        t = t_next
        events += 1
        i = randbelow(state, k)
        u = uniform(state) * per_particle
        if u < 1.0:
            remove_particle(tkeys, tvals, pos, pkeys, meta, i, d, track)
            if meta[COUNT] == 0:
                outcome = EXTINCT
            continue
        m = randbelow(state, 2 * d)
        ax = m // 2
        step = 1 if m % 2 == 0 else -1
        for j in range(d):
            coords[j] = pos[i, j]
        coords[ax] += step
        key = pkeys[i] + step * unit_shift(ax, d)
        if find_slot(tkeys, key) >= 0:
            continue
        if not in_range(coords, d):
            outcome = OVERFLOW
            break
        if u < 1.0 + lam:
            if 4 * (k + 1) > tkeys.shape[0]:
                tkeys, tvals = _rebuild(2 * tkeys.shape[0], pkeys, k)
            add_site(tkeys, tvals, pos, pkeys, meta, coords, key, d, track)
            if meta[COUNT] >= mass_cap:
                outcome = MASS_CAP
        else:
            move_particle(tkeys, tvals, pos, pkeys, meta, i, coords, key, d, track)
    fill = 0 if outcome == EXTINCT else (meta[COUNT] if outcome == ALIVE else UNOBSERVED)
    fill_pairs = 0 if outcome == EXTINCT else (meta[PAIRS] if outcome == ALIVE else UNOBSERVED)
    while ci < n_cp:
        if outcome == ALIVE and checkpoints[ci] > horizon:
            break
        mass_out[ci] = fill
        pair_out[ci] = fill_pairs
        ci += 1
    return outcome, t, events, mismatches


@njit(cache=True, nogil=True)
def _batch_kernel(d, N, lam, scale, horizon, mass_cap, checkpoints, max_events, verify, track,
                  seeds, outcome, stop_time, events, mismatches, masses, pairs, start, stop):
    pos = np.zeros((mass_cap + 1, d), dtype=np.int64)
    pkeys = np.zeros(mass_cap + 1, dtype=np.int64)
    meta = np.zeros(2, dtype=np.int64)
    coords = np.zeros(d, dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    for r in range(start, stop):
        seed_state(seeds[r - start], state)
        o, t, e, mm = _run_one(d, N, lam, scale, horizon, mass_cap, checkpoints, max_events, verify,
                               track, state, pos, pkeys, meta, coords, masses[r], pairs[r])
        outcome[r] = o
        stop_time[r] = t
        events[r] = e
        mismatches[r] = mm


@dataclass(frozen=True)
class BatchResult:
    """Raw per-replicate arrays for ``reps`` trajectories of one configuration."""

    params: ModelParams
    policy: StopPolicy
    seed: int
    outcome: np.ndarray
    stop_time: np.ndarray
    events: np.ndarray
    masses: np.ndarray
    pairs: np.ndarray
    pair_mismatches: int

    @property
    def reps(self) -> int:
        return self.outcome.size

    def count(self, code: int) -> int:
        return int(np.count_nonzero(self.outcome == code))


def run_batch(p: ModelParams, policy: StopPolicy, reps: int, seed: int, start: int = 0,
              threads: int | None = None, verify_pairs: bool = False,
              track_pairs: bool | None = None) -> BatchResult:
    """Replicates ``start .. start+reps-1`` of the master ``seed``.

    Pair counts are maintained only when some checkpoint can observe them
    (``track_pairs=None``); with ``track_pairs=False`` the ``pairs`` array is
    filled with UNOBSERVED.  Skipping them roughly halves the cost per event.
    """
    cps = np.asarray(policy.checkpoints, dtype=np.float64)
    track = cps.size > 0 if track_pairs is None else bool(track_pairs)
    if verify_pairs and not track:
        raise ValueError("verify_pairs needs pair tracking")
    outcome = np.zeros(reps, dtype=np.int64)
    stop_time = np.zeros(reps)
    events = np.zeros(reps, dtype=np.int64)
    mism = np.zeros(reps, dtype=np.int64)
    masses = np.zeros((reps, cps.size), dtype=np.int64)
    pairs = np.zeros((reps, cps.size), dtype=np.int64)

    def fill(a, b):
        _batch_kernel(p.d, float(p.N), float(p.birth_rate), p.rate_scale, float(policy.horizon),
                      int(policy.mass_cap), cps, int(policy.max_events), verify_pairs, track,
                      replicate_seeds(seed, start + a, start + b), outcome, stop_time, events, mism,
                      masses, pairs, a, b)

    run_chunked(fill, reps, threads, chunk=64)
    if not track:
        pairs.fill(UNOBSERVED)
    if np.any(outcome == OVERFLOW):
        raise OverflowError("a trajectory left the representable lattice box")
    return BatchResult(p, policy, seed, outcome, stop_time, events, masses, pairs, int(mism.sum()))


def run_trajectory(p: ModelParams, policy: StopPolicy, seed: int, verify_pairs: bool = False) -> TrajectorySummary:
    """One trajectory; ``seed`` seeds its stream directly."""
    cps = np.asarray(policy.checkpoints, dtype=np.float64)
    out = [np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(1, dtype=np.int64),
           np.zeros(1, dtype=np.int64)]
    masses = np.zeros((1, cps.size), dtype=np.int64)
    pairs = np.zeros((1, cps.size), dtype=np.int64)
    _batch_kernel(p.d, float(p.N), float(p.birth_rate), p.rate_scale, float(policy.horizon),
                  int(policy.mass_cap), cps, int(policy.max_events), verify_pairs, cps.size > 0,
                  np.array([seed], dtype=np.uint64), out[0], out[1], out[2], out[3], masses, pairs, 0, 1)
    code = int(out[0][0])
    if code == OVERFLOW:
        raise OverflowError("trajectory left the representable lattice box")
    return TrajectorySummary(OUTCOME_NAMES[code], float(out[1][0]), masses[0], pairs[0],
                             policy.checkpoints, int(out[2][0]), seed, int(out[3][0]))


@dataclass(frozen=True)
class MassCurve:
    checkpoints: tuple[float, ...]
    mean: np.ndarray
    stderr: np.ndarray
    reps: int
    samples: np.ndarray = field(repr=False)

    def decrease_z(self) -> np.ndarray:
        """z-scores of mean(m_i - m_{i+1}) for successive checkpoints.

        The differences are paired within each trajectory, so the standard
        error accounts for the correlation between checkpoints.
        """
        diffs = self.samples[:, :-1] - self.samples[:, 1:]
        se = diffs.std(axis=0, ddof=1) / math.sqrt(self.reps)
        return diffs.mean(axis=0) / se


def mass_curve(p: ModelParams, policy: StopPolicy, reps: int, seed: int,
               threads: int | None = None) -> MassCurve:
    """Mean particle count at each checkpoint; extinct runs contribute zeros."""
    if not policy.checkpoints:
        raise ValueError("mass_curve needs at least one checkpoint")
    batch = run_batch(p, policy, reps, seed, threads=threads, track_pairs=False)
    bad = batch.count(MASS_CAP) + batch.count(TRUNCATED)
    if bad:
        raise RuntimeError(f"{bad} trajectories stopped early; raise mass_cap or max_events")
    m = batch.masses.astype(float)
    se = m.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(m.shape[1], np.nan)
    return MassCurve(policy.checkpoints, m.mean(axis=0), se, reps, m)


def write_mass_curve_csv(curve: MassCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_mass", "stderr", "reps"])
        for t, m, s in zip(curve.checkpoints, curve.mean, curve.stderr):
            w.writerow([repr(t), repr(float(m)), repr(float(s)), curve.reps])
