import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankwedge.degenerate import (
    EXPORT_COLUMNS,
    classify_corner_degenerate,
    degenerate_corner_prob,
    degenerate_ranks,
    degenerate_regulators,
    degenerate_simulate,
    export_degenerate,
)
from rankwedge.errors import DomainError
from rankwedge.localtime import estimate_local_time
from rankwedge.model import Corner, ModelParams
from rankwedge.pathgen import gen_brownian_pair
from rankwedge.rng import PathSeed
from rankwedge.skorokhod import SampledPath

DT = 1e-3


def dparams(g=1.0, h=0.5, x1=0.5, x2=0.5):
    return ModelParams(g, h, sigma=0.0, x1=x1, x2=x2)


def zeros(T, dt=DT):
    return SampledPath(np.zeros(int(round(T / dt)) + 1), dt)


def test_regulators_activate_when_sum_drifts_down():
    p = dparams(g=0.5, h=1.0, x1=0.5, x2=0.5)
    V = zeros(4.0)
    lam, ly, dev = degenerate_regulators(V, p)
    t = V.times
    np.testing.assert_allclose(lam.values, np.maximum(-1.0 + 0.5 * t, 0.0), atol=1e-12)
    assert lam.values[int(round(2.0 / DT))] == pytest.approx(0.0, abs=1e-12)
    assert dev == 0.0


def test_regulators_idle_when_sum_drifts_up():
    lam, _, _ = degenerate_regulators(zeros(4.0), dparams(g=1.0, h=0.5))
    assert np.all(lam.values == 0)


def test_ly_on_the_diagonal():
    p = dparams(g=1.0, h=0.5, x1=0.5, x2=0.5)
    V = zeros(3.0)
    lam, ly, _ = degenerate_regulators(V, p)
    np.testing.assert_allclose(lam.values + 2 * ly.values, p.lam * V.times, atol=1e-12)
    np.testing.assert_allclose(ly.values, p.lam * V.times / 2, atol=1e-12)


@pytest.mark.parametrize(
    "kw", [dict(g=0.0, h=0.5, sigma=0.0), dict(g=1.0, h=0.5, sigma=0.5)]
)
def test_rejects_bad_params(kw):
    p = ModelParams(x1=1, x2=0, **kw)
    with pytest.raises(DomainError):
        degenerate_regulators(zeros(1.0), p)
    with pytest.raises(DomainError):
        degenerate_simulate(p, 1.0, DT, 0)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    g=st.floats(0.05, 2),
    h=st.floats(0, 2),
    x1=st.floats(0, 2),
    x2=st.floats(0.01, 2),
)
def test_bundle_invariants(seed, g, h, x1, x2):
    p = ModelParams(g, h, sigma=0.0, x1=x1, x2=x2)
    b = degenerate_simulate(p, 3.0, DT, PathSeed(seed, 0))
    t = b.times
    R1, R2 = b.R1.values, b.R2.values
    assert np.all(np.diff(b.Lambda.values) >= 0) and np.all(np.diff(b.LY.values) >= 0)
    assert b.Lambda.values[0] == 0 and b.LY.values[0] == 0
    assert np.all(R1 >= R2) and np.all(R2 >= 0)
    assert np.abs(R1 + R2 - (p.xi_sum + p.nu * t + b.V.values + b.Lambda.values)).max() <= 1e-9
    assert np.abs(b.X1.values - b.X2.values - b.Y.values).max() <= 1e-12
    assert np.array_equal(np.maximum(b.X1.values, b.X2.values), R1)
    assert np.array_equal(np.minimum(b.X1.values, b.X2.values), R2)
    assert np.array_equal(np.abs(b.Y.values), b.G.values)
    assert b.envelope_deviation < 1e-10
    assert b.X1.values[0] == x1 and b.X2.values[0] == x2


def test_laggard_is_ballistic_between_pushes():
    p = dparams(g=1.0, h=0.5)
    b = degenerate_simulate(p, 5.0, DT, 3)
    flat = np.diff(b.LY.values) == 0
    assert flat.any()
    np.testing.assert_allclose(np.diff(b.R2.values)[flat] / DT, p.g, atol=1e-9)


def test_lambda_supported_on_leader_zeros():
    p = dparams(g=0.5, h=1.0, x1=0.2, x2=0.1)
    for i in range(5):
        b = degenerate_simulate(p, 5.0, DT, PathSeed(2, i))
        rises = np.diff(b.Lambda.values, prepend=0.0) > 0
        assert rises.any()
        assert np.all(b.R1.values[rises] <= 1e-12)
        assert np.all(np.abs(b.Y.values[rises]) <= 1e-12)


def test_corner_excursions_forced_negative():
    p = dparams(g=0.5, h=1.0, x1=0.2, x2=0.1)
    n_forced = 0
    for i in range(10):
        b = degenerate_simulate(p, 5.0, DT, PathSeed(4, i))
        flags = b.excursions.origin_flags
        n_forced += int(flags.sum())
        assert np.all(b.excursions.marks[flags] == -1)
        # on an excursion leaving the corner, name 1 is the laggard
        for (a, c), f in zip(b.excursions.intervals, flags):
            if f:
                assert np.all(b.X1.values[a:c] <= b.X2.values[a:c])
    assert n_forced > 0


def _lt_errors(p, dt, seeds, T=2.0, eps=0.01):
    errs = []
    for seed in seeds:
        b = degenerate_simulate(p, T, dt, seed)
        lam_T = b.Lambda.values[-1]
        tot = lam_T + 2 * b.LY.values[-1]
        s = SampledPath(b.X1.values + b.X2.values, dt)
        e_sum = estimate_local_time(s, 1.0, eps).final
        e_gap = estimate_local_time(b.G, 1.0, eps).final
        errs.append((abs(e_sum - lam_T) / (lam_T + 1), abs(e_gap - tot) / (tot + 1)))
    return np.array(errs)


def test_regulators_match_local_time_estimates():
    # grid reflection leaves an O(sqrt(dt)) atom at 0, so the band of width
    # 0.01 needs sqrt(dt) well below it
    p = dparams(g=0.5, h=1.0, x1=0.5, x2=0.5)
    errs = _lt_errors(p, 1e-6, [PathSeed(6, i) for i in range(3)])
    assert np.all(errs <= 0.2)


def test_local_time_bias_shrinks_with_dt():
    p = dparams(g=0.5, h=1.0, x1=0.5, x2=0.5)
    seeds = [PathSeed(6, i) for i in range(4)]
    coarse = _lt_errors(p, 1e-4, seeds).mean(axis=0)
    fine = _lt_errors(p, 1e-5, seeds).mean(axis=0)
    assert np.all(fine < coarse)


def test_corner_visits_when_h_at_least_g():
    p = dparams(g=0.5, h=1.0, x1=0.5, x2=0.5)
    n = 500
    hits = 0
    for i in range(n):
        V = gen_brownian_pair(50_001, 1e-3, PathSeed(9, i), 1.0, 0.0).V
        _, _, r1, _, _ = degenerate_ranks(V, p)
        hits += r1.values.min() <= 0.01
    assert hits / n >= 0.99


def test_corner_probability_examples():
    assert degenerate_corner_prob(dparams(g=1, h=0.5, x1=0.5, x2=0.5)) == pytest.approx(math.exp(-1), abs=1e-12)
    assert degenerate_corner_prob(dparams(g=0.5, h=1)) == 1.0
    assert degenerate_corner_prob(dparams(g=1, h=1)) == 1.0
    assert degenerate_corner_prob(dparams(g=1, h=0.5, x1=1e-12, x2=0)) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DomainError):
        degenerate_corner_prob(ModelParams(1, 0.5, sigma=0.5, x1=1, x2=0))


def test_classify_corner_degenerate():
    assert classify_corner_degenerate(dparams(g=1, h=0.5)) is Corner.POSITIVE_PROBABILITY
    assert classify_corner_degenerate(dparams(g=0.5, h=1)) is Corner.ALMOST_SURELY


def test_export_schema(tmp_path):
    b = degenerate_simulate(dparams(), 0.01, DT, 0)
    out = tmp_path / "d.csv"
    export_degenerate(b, out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(EXPORT_COLUMNS)
    assert len(lines) == 1 + len(b.times)
