import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rankwedge.errors import DomainError, NonConvergence
from rankwedge.model import ModelParams
from rankwedge.skorokhod import (
    SampledPath,
    bridge_maxima,
    forcing_terms,
    picard_diagnostics,
    regulator_residuals,
    running_max_positive,
    skorokhod_reflect_1d,
    solve_coupled_regulators,
)

from conftest import params

DT = 1e-3
RATIO_BOUND = 1 / math.sqrt(2) + 0.05


def zero_path(n, dt=DT):
    return SampledPath(np.zeros(n), dt)


def grid(T, dt=DT):
    return dt * np.arange(int(round(T / dt)) + 1)


def random_drivers(n, seed, scale=1.0, dt=DT):
    r = np.random.default_rng(seed)
    inc = r.standard_normal((2, n - 1)) * math.sqrt(dt) * scale
    v = np.zeros((2, n))
    np.cumsum(inc, axis=1, out=v[:, 1:])
    return SampledPath(v[0], dt), SampledPath(v[1], dt)


def stepwise_oracle(w_a, w_l):
    """Exact per-step fixed point of the coupled running maxima.

    With ``c = max(2A_prev, w_a + Lambda_prev, 0)`` and ``d = w_a + w_l``,
    the step's equations reduce to ``A = max(c/2, d)``.
    """
    n = w_a.size
    a = np.zeros(n)
    lam = np.zeros(n)
    a_prev = lam_prev = 0.0
    for k in range(n):
        c = max(2.0 * a_prev, w_a[k] + lam_prev, 0.0)
        ak = max(0.5 * c, w_a[k] + w_l[k])
        lk = max(lam_prev, w_l[k] + ak, 0.0)
        a[k], lam[k] = ak, lk
        a_prev, lam_prev = ak, lk
    return a, lam


# --- SampledPath ---------------------------------------------------------------------


def test_sampled_path_validation():
    with pytest.raises(DomainError):
        SampledPath([], 0.1)
    with pytest.raises(DomainError):
        SampledPath([0.0, np.nan], 0.1)
    with pytest.raises(DomainError):
        SampledPath([0.0], 0.0)
    p = SampledPath([1.0, 2.0], 0.5, t0=1.0)
    assert np.array_equal(p.times, [1.0, 1.5])
    with pytest.raises(ValueError):
        p.values[0] = 3.0


# --- 1-d reflection ------------------------------------------------------------------


@pytest.mark.parametrize(
    "z, refl, reg",
    [
        ([0, 0.1, 0.2, 0.3], [0, 0.1, 0.2, 0.3], [0, 0, 0, 0]),
        ([0, -0.1, -0.2, -0.3], [0, 0, 0, 0], [0, 0.1, 0.2, 0.3]),
        ([1, -1, 0, -2], [1, 0, 1, 0], [0, 1, 1, 2]),
    ],
)
def test_reflect_examples(z, refl, reg):
    r, l = skorokhod_reflect_1d(SampledPath(z, 1.0))
    np.testing.assert_allclose(r.values, refl, atol=1e-15)
    np.testing.assert_allclose(l.values, reg, atol=1e-15)


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-1e3, 1e3)))
def test_reflect_matches_brute_force(z):
    r, l = skorokhod_reflect_1d(SampledPath(z, 1.0))
    brute = np.array([max(0.0, max(-z[: k + 1])) for k in range(z.size)])
    assert np.array_equal(l.values, brute)
    assert np.all(r.values >= 0)
    assert np.all(np.diff(l.values) >= 0)
    assert l.values[0] == max(-z[0], 0.0)
    # flat off zero: the regulator only rises where the reflected path is 0
    rises = np.flatnonzero(np.diff(l.values) > 0) + 1
    assert np.all(r.values[rises] == 0.0)


def test_running_max_positive_in_place():
    x = np.array([-1.0, 2.0, 1.0, 3.0])
    out = np.empty(4)
    running_max_positive(x, out=out)
    assert out.tolist() == [0.0, 2.0, 2.0, 3.0]


# --- coupled regulators --------------------------------------------------------------


def test_deterministic_example_one():
    t = grid(4.0)
    p = ModelParams(g=0, h=1, sigma=math.sqrt(0.5), x1=1, x2=1)
    assert (p.y0, p.lam, p.r2) == (0, 1, 1)
    reg = solve_coupled_regulators(zero_path(t.size), zero_path(t.size), p)
    a_exact = np.where(t <= 2, t / 2, t - 1)
    np.testing.assert_allclose(reg.A.values, a_exact, atol=1e-10, rtol=0)
    np.testing.assert_allclose(reg.Lambda.values, np.maximum(t - 2, 0), atol=1e-10, rtol=0)


def test_deterministic_example_two():
    t = grid(3.0)
    p = ModelParams(g=1, h=0, sigma=math.sqrt(0.5), x1=1, x2=0)
    reg = solve_coupled_regulators(zero_path(t.size), zero_path(t.size), p)
    np.testing.assert_allclose(reg.A.values, np.maximum(t - 1, 0) / 2, atol=1e-12, rtol=0)
    assert np.all(reg.Lambda.values == 0)


def test_decoupled_limit():
    vf, v2 = random_drivers(1001, 3)
    p = ModelParams(g=0.3, h=0.8, sigma=0.6, x1=1e6, x2=1e6 + 0.2)
    reg = solve_coupled_regulators(vf, v2, p)
    assert np.all(reg.Lambda.values == 0)
    z = SampledPath(abs(p.y0) - p.lam * vf.times + vf.values, DT)
    _, one_d = skorokhod_reflect_1d(z)
    np.testing.assert_allclose(2 * reg.A.values, one_d.values, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("sigma_sq", [0.25, 0.5, 0.75, 1.0])
def test_matches_stepwise_oracle(seed, sigma_sq):
    vf, v2 = random_drivers(2001, seed, scale=2.0)
    p = params(sigma_sq, g=0.4, h=0.7, x1=0.3, x2=0.1)
    reg = solve_coupled_regulators(vf, v2, p)
    w_a, w_l = forcing_terms(vf, v2, p)
    a, lam = stepwise_oracle(w_a, w_l)
    np.testing.assert_allclose(reg.A.values, a, atol=1e-10, rtol=0)
    np.testing.assert_allclose(reg.Lambda.values, lam, atol=1e-10, rtol=0)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    g=st.floats(0, 2),
    h=st.floats(0, 2),
    s=st.floats(0.05, 1.0),
    x1=st.floats(0, 1),
    x2=st.floats(0.01, 1),
)
def test_residuals_and_monotonicity(seed, g, h, s, x1, x2):
    vf, v2 = random_drivers(501, seed)
    p = ModelParams(g, h, sigma=s, x1=x1, x2=x2)
    tol = 1e-12
    reg = solve_coupled_regulators(vf, v2, p, tol=tol)
    r_a, r_l = regulator_residuals(reg, vf, v2, p)
    # the stopping rule bounds the last step; the contraction bounds the rest
    assert r_a <= 4 * tol and r_l <= 4 * tol
    assert np.all(np.diff(reg.A.values) >= 0) and np.all(np.diff(reg.Lambda.values) >= 0)
    assert reg.A.values[0] == 0 and reg.Lambda.values[0] == 0


def test_length_one_path():
    p = params(0.5)
    reg = solve_coupled_regulators(SampledPath([0.0], DT), SampledPath([0.0], DT), p)
    assert reg.A.values.tolist() == [0.0] and reg.Lambda.values.tolist() == [0.0]


def test_input_validation():
    p = params(0.5)
    with pytest.raises(DomainError):
        solve_coupled_regulators(zero_path(5), zero_path(6), p)
    with pytest.raises(DomainError):
        solve_coupled_regulators(SampledPath([1.0, 0.0], DT), zero_path(2), p)
    with pytest.raises(DomainError):
        solve_coupled_regulators(zero_path(5), zero_path(5), ModelParams(1, 0.5, sigma=0, x1=1, x2=0))
    with pytest.raises(DomainError):
        solve_coupled_regulators(zero_path(5), zero_path(5), p, tol=0)
    with pytest.raises(DomainError):
        solve_coupled_regulators(zero_path(5), zero_path(5), p, max_iter=0)


def test_non_convergence_reports_gaps():
    t = grid(4.0)
    p = ModelParams(g=0, h=1, sigma=math.sqrt(0.5), x1=1, x2=1)
    with pytest.raises(NonConvergence) as info:
        solve_coupled_regulators(zero_path(t.size), zero_path(t.size), p, max_iter=3)
    assert len(info.value.gaps) == 3


# --- Picard diagnostics --------------------------------------------------------------


def _ratios(gaps):
    g = np.asarray(gaps)
    g = g[g > 0]
    return g[1:] / g[:-1]


def test_deterministic_gaps_decay_geometrically():
    t = grid(4.0)
    p = ModelParams(g=0, h=1, sigma=math.sqrt(0.5), x1=1, x2=1)
    gaps = picard_diagnostics(zero_path(t.size), zero_path(t.size), p)
    assert gaps[-1] < 1e-12
    assert np.all(_ratios(gaps) <= RATIO_BOUND)


def test_fixed_point_at_start_converges_in_one_iteration():
    p = ModelParams(g=0.5, h=1, sigma=0.7, x1=50, x2=1)
    gaps = picard_diagnostics(zero_path(101), zero_path(101), p)
    assert gaps == [0.0]


@pytest.mark.parametrize("seed", range(10))
def test_iteration_count_bound(seed):
    vf, v2 = random_drivers(1001, 100 + seed)
    p = params(0.5, g=1, h=1, x1=0.2, x2=0.1)
    tol = 1e-12
    gaps = picard_diagnostics(vf, v2, p, tol=tol)
    # the contraction shrinks the first gap, not 1, down to tol
    bound = math.ceil(math.log(tol / max(gaps[0], tol)) / math.log(1 / math.sqrt(2))) + 2
    assert len(gaps) <= bound
    assert np.all(_ratios(gaps) <= RATIO_BOUND)


# --- bridge maxima -------------------------------------------------------------------


def test_bridge_maxima_dominate_endpoints(rng):
    w = np.cumsum(rng.standard_normal(1000)) * 0.03
    u = 1.0 - rng.random(999)
    m = bridge_maxima(w, 1.0, 1e-3, u)
    assert m[0] == w[0]
    assert np.all(m[1:] >= np.maximum(w[:-1], w[1:]) - 1e-15)


def test_bridge_maximum_law(rng):
    # a standard bridge pinned at 0 over dt has P(max > m) = exp(-2 m^2 / dt)
    from scipy import stats

    dt, var = 0.01, 0.5
    u = 1.0 - rng.random(20000)
    m = bridge_maxima(np.zeros(20001), var, dt, u)[1:]
    cdf = lambda x: 1.0 - np.exp(-2.0 * np.maximum(x, 0) ** 2 / (var * dt))
    assert stats.kstest(m, cdf).pvalue > 1e-3


def test_bridge_solver_keeps_identities():
    vf, v2 = random_drivers(2001, 8)
    p = params(0.5)
    r = np.random.default_rng(1)
    u = (1.0 - r.random(2000), 1.0 - r.random(2000))
    reg = solve_coupled_regulators(vf, v2, p, bridge_uniforms=u)
    grid_reg = solve_coupled_regulators(vf, v2, p)
    assert np.all(np.diff(reg.A.values) >= 0) and np.all(np.diff(reg.Lambda.values) >= 0)
    # monitoring between grid points can only push harder
    assert np.all(reg.A.values >= grid_reg.A.values - 1e-12)
