import json
import math
import random

import numpy as np
import pytest
from scipy import stats

from stirlab.simulator import (EXTINCT, MASS_CAP, TRUNCATED, UNOBSERVED, ModelParams, StopPolicy,
                               mass_curve, run_batch, run_trajectory, write_mass_curve_csv)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0, 10, 1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 0.5, 1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 10, -1.0)
    with pytest.raises(ValueError):
        ModelParams(3, 10, 1.0, "fast")
    p = ModelParams.from_theta(3, 20, 0.5)
    assert p.birth_rate == 1.025 and p.theta == pytest.approx(0.5)
    assert ModelParams(3, 20, 1.0, "speeded_up").rate_scale == 20


def test_policy_validation():
    with pytest.raises(ValueError):
        StopPolicy(horizon=0)
    with pytest.raises(ValueError):
        StopPolicy(mass_cap=0)
    with pytest.raises(ValueError):
        StopPolicy(horizon=5, checkpoints=(2.0, 1.0))
    with pytest.raises(ValueError):
        StopPolicy(horizon=5, checkpoints=(6.0,))


def test_deterministic_and_thread_independent():
    p = ModelParams(3, 5, 1.5)
    pol = StopPolicy(horizon=20, mass_cap=200, checkpoints=(1.0, 5.0, 10.0))
    a = run_batch(p, pol, 300, seed=42, threads=1)
    b = run_batch(p, pol, 300, seed=42, threads=3)
    for name in ("outcome", "stop_time", "events", "masses", "pairs"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = run_batch(p, pol, 100, seed=42, start=200)
    assert np.array_equal(a.stop_time[200:], c.stop_time)
    t1 = run_trajectory(p, pol, seed=7)
    t2 = run_trajectory(p, pol, seed=7)
    assert t1.to_json() == t2.to_json()
    assert np.array_equal(t1.mass_samples, t2.mass_samples)
    assert np.array_equal(t1.pair_samples, t2.pair_samples)


def test_no_births_extinction_time():
    p = ModelParams(3, 10, 0.0)
    b = run_batch(p, StopPolicy(horizon=1e6, mass_cap=10), 10_000, seed=3)
    assert b.count(EXTINCT) == b.reps
    t = b.stop_time
    assert abs(t.mean() - 1.0) <= 3 * t.std(ddof=1) / math.sqrt(b.reps)
    assert stats.kstest(t, "expon").pvalue > 0.01
    # a lone particle stirs at rate 2dN = 60 and dies at rate 1
    ev = b.events
    assert abs(ev.mean() - 61) <= 3 * ev.std(ddof=1) / math.sqrt(b.reps)


def test_trajectory_invariants():
    p = ModelParams(3, 4, 1.8)
    cps = tuple(np.linspace(0, 30, 31))
    b = run_batch(p, StopPolicy(horizon=30, mass_cap=400, checkpoints=cps), 300, seed=8,
                  verify_pairs=True)
    assert b.pair_mismatches == 0
    for r in range(b.reps):
        m, pr = b.masses[r], b.pairs[r]
        if b.outcome[r] == MASS_CAP:
            seen = m != UNOBSERVED
            m, pr = m[seen], pr[seen]
        assert np.all(pr % 2 == 0)
        assert np.all(pr <= 6 * m)
        if b.outcome[r] == EXTINCT:
            dead = np.asarray(cps) >= b.stop_time[r]
            assert np.all(m[dead] == 0)
    assert b.masses[:, 0].tolist() == [1] * b.reps


def test_truncation():
    b = run_batch(ModelParams(3, 10, 1.0), StopPolicy(horizon=100, checkpoints=(50.0,), max_events=50),
                  200, seed=1)
    cut = b.outcome == TRUNCATED
    assert cut.sum() > 50
    assert np.all(b.events[cut] == 50)
    assert np.all(b.masses[cut, 0] == UNOBSERVED)
    assert np.all(b.outcome[~cut] == EXTINCT) and np.all(b.events[~cut] <= 50)


def test_speeded_up_matches_raw():
    p_raw = ModelParams(3, 5, 0.9)
    p_fast = ModelParams(3, 5, 0.9, "speeded_up")
    pol_raw = StopPolicy(horizon=2000, mass_cap=10**5)
    pol_fast = StopPolicy(horizon=400, mass_cap=10**5)
    raw = run_batch(p_raw, pol_raw, 1000, seed=1)
    fast = run_batch(p_fast, pol_fast, 1000, seed=1)
    assert raw.count(EXTINCT) == fast.count(EXTINCT) == 1000
    # same streams: identical trajectories, times scaled by N
    assert np.allclose(raw.stop_time, 5 * fast.stop_time, rtol=1e-12)
    other = run_batch(p_fast, pol_fast, 1000, seed=2)
    assert stats.ks_2samp(raw.stop_time, 5 * other.stop_time).pvalue > 0.01


@pytest.mark.parametrize("lam", [1.0, 1.5])
def test_branching_domination(lam):
    cps = (1.0, 2.0, 3.0, 5.0)
    curve = mass_curve(ModelParams(3, 5, lam), StopPolicy(horizon=5, mass_cap=10**5, checkpoints=cps),
                       4000, seed=int(lam * 10))
    for t, m, se in zip(cps, curve.mean, curve.stderr):
        assert m <= math.exp((lam - 1) * t) + 3 * se


def test_critical_mass_bounded():
    cps = (2.0, 5.0, 10.0)
    curve = mass_curve(ModelParams(3, 10, 1.0), StopPolicy(horizon=10, mass_cap=10**5, checkpoints=cps),
                       4000, seed=5)
    assert np.all(curve.mean <= 1 + 3 * curve.stderr)


def test_mass_curve_rejects_capped_runs():
    with pytest.raises(RuntimeError):
        mass_curve(ModelParams(3, 2, 3.0), StopPolicy(horizon=20, mass_cap=5, checkpoints=(10.0,)),
                   200, seed=1)
    with pytest.raises(ValueError):
        mass_curve(ModelParams(3, 2, 1.0), StopPolicy(), 10, seed=1)


def test_outputs(tmp_path):
    p = ModelParams(3, 3, 1.2)
    pol = StopPolicy(horizon=5, mass_cap=100, checkpoints=(1.0, 2.0))
    s = run_trajectory(p, pol, seed=11)
    s.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,mass,pairs" and len(lines) == 3
    doc = json.loads(s.to_json())
    assert doc["seed"] == 11 and doc["outcome"] in ("extinct", "alive", "mass_cap")
    curve = mass_curve(p, pol, 50, seed=2)
    write_mass_curve_csv(curve, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "t,mean_mass,stderr,reps"


def edge_stirring_sample(d, N, lam, t_end, rng):
    """Reference model with one clock per edge: mass at t_end (state set, Gillespie)."""
    occ = {(0,) * d}
    t = 0.0
    units = []
    for j in range(d):
        for s in (1, -1):
            e = [0] * d
            e[j] = s
            units.append(tuple(e))
    while occ:
        # occupied-empty edges swap at rate N; deaths at rate 1; births lam/2d per direction
        moves = []
        for x in occ:
            for e in units:
                y = tuple(a + b for a, b in zip(x, e))
                if y not in occ:
                    moves.append((x, y))
        rate_swap = N * len(moves)
        rate_birth = lam / (2 * d) * len(moves)
        total = len(occ) + rate_swap + rate_birth
        t += rng.expovariate(total)
        if t > t_end:
            break
        u = rng.random() * total
        if u < len(occ):
            occ.remove(rng.choice(sorted(occ)))
        elif u < len(occ) + rate_swap:
            x, y = moves[rng.randrange(len(moves))]
            occ.remove(x)
            occ.add(y)
        else:
            x, y = moves[rng.randrange(len(moves))]
            occ.add(y)
    return len(occ)


def test_per_particle_stirring_matches_edge_clocks():
    d, N, lam, t_end, reps = 2, 2.0, 1.6, 2.0, 3000
    rng = random.Random(12345)
    ref = np.array([edge_stirring_sample(d, N, lam, t_end, rng) for _ in range(reps)], dtype=float)
    b = run_batch(ModelParams(d, N, lam), StopPolicy(horizon=t_end, mass_cap=10**4,
                                                     checkpoints=(t_end,)), reps, seed=77)
    ours = b.masses[:, 0].astype(float)
    se = math.hypot(ref.std(ddof=1), ours.std(ddof=1)) / math.sqrt(reps)
    assert abs(ref.mean() - ours.mean()) <= 3 * se
    assert abs((ref == 0).mean() - (ours == 0).mean()) <= 3 * math.sqrt(0.5 / reps)
