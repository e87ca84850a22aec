import math

import numpy as np
import pytest

from stirlab.genealogy import (LineageParams, estimate_z1, f1_analytic, simulate_lineage_trial,
                               write_genealogy_csv, z1_analytic, z1_exact)


def test_params():
    p = LineageParams(3, 10)
    assert p.tau_N == math.log(10) / 100
    assert p.branch_rate == 20
    for bad in (dict(d=3, N=1), dict(d=0, N=4), dict(d=3, N=4, theta=-5)):
        with pytest.raises(ValueError):
            LineageParams(**bad)


def test_f1_closed_form():
    assert f1_analytic(LineageParams(3, 10)) == pytest.approx(0.5 * 10**-0.2 * (1 - 10**-0.2), rel=1e-12)
    assert f1_analytic(LineageParams(3, 10)) == pytest.approx(0.11643, abs=1e-5)
    assert f1_analytic(LineageParams(3, 1e6)) < 1e-4
    for N in np.geomspace(2, 1e5, 60):
        v = f1_analytic(LineageParams(3, N))
        assert 0 < v <= 0.5


def test_trial_outcomes_consistent():
    p = LineageParams(3, 4, 0.05)
    splits = 0
    for seed in range(4000):
        o = simulate_lineage_trial(p, seed)
        assert not o.z1 or o.f1
        if o.split_time is None:
            assert not o.f1
        else:
            splits += 1
            assert 0 <= o.split_time < p.tau_N
    assert splits > 0
    assert simulate_lineage_trial(p, 17) == simulate_lineage_trial(p, 17)


def test_estimate_needs_reps():
    with pytest.raises(ValueError):
        estimate_z1(LineageParams(3, 8), 999, seed=1)


@pytest.mark.parametrize("N,theta", [(4, 0.0), (10, 0.0), (40, 0.05)])
def test_f1_monte_carlo(N, theta):
    p = LineageParams(3, N, theta)
    est = estimate_z1(p, 100_000, seed=N)
    assert abs(est.f1_mean - f1_analytic(p)) <= 3 * est.f1_stderr
    assert est.inclusion_violations == 0
    assert est.z1_mean <= est.f1_mean


@pytest.mark.parametrize("N,theta", [(8, 0.0), (8, 0.5), (32, 0.0)])
def test_z1_exact_against_monte_carlo(N, theta):
    p = LineageParams(3, N, theta)
    est = estimate_z1(p, 200_000, seed=3 * N + 1)
    assert abs(est.z1_mean - z1_exact(p)) <= 3 * est.z1_stderr


def test_z1_variants():
    p0 = LineageParams(3, 16, 0.0)
    assert z1_analytic(p0, variant="F1") == z1_analytic(p0, variant="printed")
    p1 = LineageParams(3, 16, 0.5)
    assert z1_analytic(p1, variant="printed") < z1_analytic(p1, variant="F1")
    with pytest.raises(ValueError):
        z1_analytic(p0, variant="other")
    with pytest.raises(ValueError):
        z1_analytic(p0, n_max=1)


def test_z1_analytic_limit(series3):
    target = 3 * series3.theta
    vals = [N * z1_analytic(LineageParams(3, N)) for N in (8, 32, 128, 1024)]
    gaps = [abs(v - target) for v in vals]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert all(a < b for a, b in zip(vals, vals[1:]))
    exact = [N * z1_exact(LineageParams(3, N)) for N in (8, 32, 128, 1024)]
    assert all(abs(e - target) > 0 for e in exact)
    assert abs(exact[-1] - vals[-1]) < 0.01 * target


def test_z1_exact_exceeds_uniform_form():
    # the split time given F1 has density proportional to e^{(2N+theta)u}, which
    # favours late splits and hence children that are still close at tau_N
    for N in (8, 32, 128):
        p = LineageParams(3, N)
        assert z1_exact(p) > z1_analytic(p)


def test_scaling_band(series3):
    target = 3 * series3.theta
    for N in (32, 128):
        est = estimate_z1(LineageParams(3, N), 100_000, seed=N)
        assert 0.5 * target <= N * est.z1_mean <= 1.5 * target


def test_genealogy_csv(tmp_path):
    p = LineageParams(3, 8)
    est = estimate_z1(p, 1000, seed=1)
    path = tmp_path / "g.csv"
    write_genealogy_csv([est], path)
    header, row = path.read_text().splitlines()
    assert header == "N,theta,d,reps,f1_mc,f1_analytic,z1_mc,z1_analytic,f1_stderr,z1_stderr"
    assert row.startswith("8,0.0,3,1000,")
