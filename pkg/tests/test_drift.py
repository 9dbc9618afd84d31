import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subgeo.companion import build_companion
from subgeo.drift import (DriftSpec, GeometricPhi, GridConfig, MCConfig, PolyPhi, PolyV,
                          SubexpPhi, SubexpV, check_epsilon_decay, check_g_envelope,
                          conditional_expectation, default_drift_spec, drift_grid, subexp_b2,
                          tail_grid, verify_drift, verify_drift_autoshrink)
from subgeo.errors import BudgetExceeded, DimensionMismatch, DomainError
from subgeo.model import (Custom, EstarSlope, HSpec, ModelSpec, NoiseSpec, ZeroTerm)
from subgeo.rng import stream

COMP1 = build_companion(())
COMP2 = build_companion((0.75,))


def example1(rho, r0=0.5, variance=1.0):
    return ModelSpec(1, (), EstarSlope("S1", r0, HSpec("i", rho=rho)), NoiseSpec.gaussian(variance))


def linear_ar(a=0.9, variance=1.0):
    return ModelSpec(1, (), Custom(lambda x: (a - 1.0) * x[..., 0], name="linear"),
                     NoiseSpec.gaussian(variance))


# --- V and phi ---------------------------------------------------------------

def test_subexp_v_scalar():
    V = SubexpV(0.1, 0.1, 0.5, COMP1)
    assert V(np.array([4.0])) == pytest.approx(math.exp(0.2))
    assert V(np.array([0.0])) == 1.0


def test_poly_v_two_lags():
    V = PolyV(4.0, 0.01, 1.0, COMP2)
    expected = 1 + 0.25**4 + 0.01 * (16 / 7) ** 1.5
    assert V(np.array([1.0, 1.0])) == pytest.approx(expected)


def test_v_dimension_checked():
    with pytest.raises(DimensionMismatch):
        PolyV(4.0, 0.01, 1.0, COMP2)(np.array([1.0, 2.0, 3.0]))


def test_phi_values():
    assert GeometricPhi(0.1)(2.0) == pytest.approx(0.2)
    assert PolyPhi(0.5, 0.5)(4.0) == pytest.approx(1.0)
    # v0 = e^2 - 1 puts v + v0 at e^2 for v = 1
    assert SubexpPhi(0.1, 1.0)(1.0) == pytest.approx(0.1 * math.exp(2) / 2)


@pytest.mark.parametrize("phi", [GeometricPhi(0.1), PolyPhi(0.5, 0.5), SubexpPhi(0.1, 1.0)])
def test_phi_domain(phi):
    with pytest.raises(DomainError):
        phi(0.5)


def test_phi_validation():
    with pytest.raises(ValueError):
        SubexpPhi(0.1, 1.0, v0=1.0)
    with pytest.raises(ValueError):
        PolyPhi(1.5, 0.5)
    with pytest.raises(ValueError):
        PolyPhi(0.5, 1.0)
    with pytest.raises(ValueError):
        GeometricPhi(0.0)


@given(st.floats(0.01, 1.0), st.floats(0.05, 5.0),
       st.lists(st.floats(1.0, 1e12), min_size=3, max_size=3, unique=True))
def test_subexp_phi_concave_increasing(c, alpha, vs):
    phi = SubexpPhi(c, alpha)
    v1, v2, v3 = sorted(vs)
    f1, f2, f3 = phi(v1), phi(v2), phi(v3)
    assert f1 <= f2 <= f3
    # chord slopes are non-increasing for a concave function
    s12 = (f2 - f1) / (v2 - v1)
    s23 = (f3 - f2) / (v3 - v2)
    assert s23 <= s12 * (1 + 1e-9) + 1e-12


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.99), st.floats(1.0, 1e12), st.floats(1.0, 1e12))
def test_poly_phi_sublinear(c, alpha, v, w):
    phi = PolyPhi(c, alpha)
    lo, hi = min(v, w), max(v, w)
    assert phi(lo) <= phi(hi) * (1 + 1e-12)
    assert phi(hi) / hi <= phi(lo) / lo * (1 + 1e-12)


@given(st.integers(0, 2**31), st.sampled_from(["poly", "subexp"]))
def test_v_at_least_one_and_radially_increasing(seed, kind):
    rng = np.random.default_rng(seed)
    comp = build_companion((0.5, 0.2))
    if kind == "poly":
        V = PolyV(4.0, 0.01, 1.0, comp)
    else:
        V = SubexpV(0.1, subexp_b2(0.1, 0.5, comp), 0.5, comp)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    radii = np.array([0.0, 0.5, 1.0, 3.0, 10.0, 40.0])
    vals = V(radii[:, None] * d)
    assert np.all(vals >= 1.0)
    assert np.all(np.diff(vals) >= -1e-12 * vals[1:])


def test_subexp_b2_respects_constraint():
    comp = build_companion((0.9,))
    b1, b3 = 0.1, 0.5
    b2 = subexp_b2(b1, b3, comp)
    assert b2 * comp.iota_norm ** b3 / (1 - comp.eta ** b3) < b1


def test_default_drift_spec_shapes():
    m = example1(1.5)
    spec = default_drift_spec(m, "subexp", 1.5)
    assert spec.V.b3 == pytest.approx(0.5)
    assert isinstance(spec.phi, SubexpPhi) and spec.phi.alpha == pytest.approx(2.0)
    geo = default_drift_spec(example1(1.0), "subexp", 1.0)
    assert isinstance(geo.phi, GeometricPhi)
    poly = default_drift_spec(m, "poly", 1.0, s0=4)
    assert poly.phi.alpha == pytest.approx(0.75)
    with pytest.raises(ValueError):
        default_drift_spec(m, "poly", 1.0)


def test_scaled_spec():
    spec = default_drift_spec(example1(1.0), "poly", 1.0, s0=4, c=0.02, s1=0.02)
    half = spec.scaled(0.5)
    assert half.phi.c == pytest.approx(0.01)
    assert half.V.s1 == pytest.approx(0.01)


# --- envelope and decay ------------------------------------------------------

@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_envelope_example1(rho):
    cert = check_g_envelope(example1(rho).nonlinear.g, rho)
    assert cert.passed and cert.r > 0 and cert.K0 > 0
    assert cert.worst_margin >= 0


def test_envelope_identity_fails():
    cert = check_g_envelope(lambda u: u, 1.0)
    assert not cert.passed


def test_envelope_rho_range():
    with pytest.raises(ValueError):
        check_g_envelope(lambda u: 0 * u, 2.5)


def test_decay_zero_remainder():
    m = example1(1.0)
    fit = check_epsilon_decay(m, m.nonlinear.g, 1.0)
    assert fit.passes and fit.slope == -math.inf


def test_decay_slow_remainder_fails():
    g = lambda u: 0.9 * u
    term = Custom(lambda x: -0.1 * x[..., 0] + 1.0 / (1.0 + np.abs(x[..., 0])), g_func=g, rho=0.0)
    m = ModelSpec(1, (), term, NoiseSpec.gaussian())
    fit = check_epsilon_decay(m, g, 2.0)
    assert not fit.passes
    assert fit.slope == pytest.approx(-2.0, abs=0.1)


# --- Monte Carlo -------------------------------------------------------------

def test_conditional_expectation_linear_gaussian():
    m = linear_ar(0.9)
    V = PolyV(2.0, 0.01, 1.0, COMP1)
    mean, half = conditional_expectation(m, V, np.array([3.0]), 200_000, stream(1, 0))
    exact = 1 + 0.81 * 9 + 1
    assert abs(mean - exact) <= half


def test_control_variates_shrink_interval():
    m = linear_ar(0.9)
    V = PolyV(2.0, 0.01, 1.0, COMP1)
    x = np.array([3.0])
    _, h_plain = conditional_expectation(m, V, x, 50_000, stream(2, 0))
    mean, h_cv = conditional_expectation(m, V, x, 50_000, stream(2, 0), control_variates=True)
    # V is quadratic in eps so the regression is exact
    assert h_cv < 1e-6 * h_plain
    assert mean == pytest.approx(1 + 0.81 * 9 + 1, rel=1e-9)


def test_control_variates_need_mean_zero():
    noise = NoiseSpec("custom", sampler=lambda rng, n: rng.normal(size=n),
                      moment_class=NoiseSpec.gaussian().moment_class, mean_zero=False)
    m = ModelSpec(1, (), ZeroTerm(), noise)
    with pytest.raises(ValueError):
        conditional_expectation(m, PolyV(2.0, 0.01, 1.0, COMP1), np.array([1.0]), 100,
                                stream(0, 0), control_variates=True)


def test_drift_grid_shape():
    pts, rad = drift_grid(2, GridConfig(radii=(1, 10), directions=8))
    assert pts.shape == (24, 2)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), rad)


def test_tail_grid_keeps_v_finite():
    spec = default_drift_spec(example1(1.5), "subexp", 1.5)
    grid = tail_grid(spec)
    pts, _ = drift_grid(1, grid)
    assert np.all(np.isfinite(spec.V(pts) ** 2))


def test_verify_drift_passes_for_example1():
    m = example1(1.0)
    spec = default_drift_spec(m, "poly", 1.0, s0=4)
    rep = verify_drift(m, spec, mc=MCConfig(reps=50_000))
    assert rep.passed
    assert rep.suggested_C_radius < max(GridConfig().radii)
    out = io.StringIO()
    rep.to_csv(out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "x1,margin,ci,pass"
    assert len(lines) == 1 + rep.grid.shape[0]


def test_verify_drift_workers_reproducible():
    m = example1(1.0)
    spec = default_drift_spec(m, "poly", 1.0, s0=4)
    grid = GridConfig(radii=(5, 50))
    a = verify_drift(m, spec, grid, MCConfig(reps=5000, seed=3))
    b = verify_drift(m, spec, grid, MCConfig(reps=5000, seed=3, workers=4))
    np.testing.assert_array_equal(a.expected, b.expected)


def test_verify_drift_random_walk_fails():
    m = ModelSpec(1, (), ZeroTerm(), NoiseSpec.gaussian())
    spec = DriftSpec(PolyV(2.0, 0.01, 1.0, COMP1), PolyPhi(1e-3, 0.5))
    rep = verify_drift(m, spec, mc=MCConfig(reps=20_000))
    assert not rep.passed
    assert rep.suggested_C_radius == max(GridConfig().radii)


def test_heavy_tail_guard_warns():
    m = ModelSpec(1, (), EstarSlope("S1", 0.5, HSpec("i", rho=1.0)), NoiseSpec.student_t(5))
    spec = default_drift_spec(m, "poly", 1.0)
    with pytest.warns(RuntimeWarning):
        rep = verify_drift(m, spec, GridConfig(radii=(10, 20)), MCConfig(reps=3200))
    assert rep.estimator == "mom"


def test_budget_exceeded_carries_partial():
    m = example1(1.0)
    spec = default_drift_spec(m, "poly", 1.0, s0=4)
    mc = MCConfig(reps=1000, target_halfwidth=1e-9, max_reps=4000)
    with pytest.raises(BudgetExceeded) as info:
        verify_drift(m, spec, GridConfig(radii=(10,)), mc)
    assert info.value.partial is not None
    assert np.all(info.value.partial.reps == 4000)


def test_spec_model_mismatch():
    m = example1(1.0)
    spec = default_drift_spec(ModelSpec(2, (0.5,), ZeroTerm(), NoiseSpec.gaussian()), "poly",
                              1.0, s0=4)
    with pytest.raises(DimensionMismatch):
        verify_drift(m, spec)


def test_autoshrink_reduces_constant():
    # the pull is about 4 r0 |u|^3 = 0.2 |u|^3, so c = 1 is too strong
    m = example1(1.0, r0=0.05)
    spec = default_drift_spec(m, "poly", 1.0, s0=4, c=1.0)
    grid = GridConfig(radii=(10, 100))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep, used = verify_drift_autoshrink(m, spec, grid, MCConfig(reps=20_000))
    assert rep.passed
    assert used.phi.c < 0.2


def test_v_at_least_one_on_random_states():
    rng = np.random.default_rng(7)
    comp = build_companion((0.6, -0.2, 0.1))
    X = rng.standard_cauchy((10_000, 4)) * 10
    for V in (PolyV(4.0, 0.01, 1.5, comp), SubexpV(0.1, subexp_b2(0.1, 0.5, comp), 0.5, comp)):
        with np.errstate(over="ignore"):
            vals = V(X)
        assert np.all(vals >= 1.0)


@pytest.mark.parametrize("phi", [GeometricPhi(0.01), PolyPhi(0.01, 0.75), SubexpPhi(0.01, 2.0)])
def test_phi_shape_on_log_grid(phi):
    v = np.logspace(0, 6, 400)
    f = phi(v)
    assert np.all(np.diff(f) > 0)
    slopes = np.diff(f) / np.diff(v)
    assert np.all(np.diff(slopes) <= 1e-12)


@pytest.mark.parametrize("rho", [0.5, 1.0])
def test_example1_polynomial_drift(rho):
    m = example1(rho)
    spec = default_drift_spec(m, "poly", rho, s0=4)
    assert verify_drift(m, spec, mc=MCConfig(reps=50_000)).passed


def test_fig1_left_positive_cone_shrinks_with_radius():
    """With s1 = 0.01 the drift is positive in a thin cone up to |x| ~ 100 and negative beyond."""
    from subgeo.config import load
    m = load("fig1_left").model
    spec = default_drift_spec(m, "poly", 1.0, s0=4, s1=0.01)
    grid = GridConfig(radii=(100, 1000), directions=256)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = verify_drift(m, spec, grid, MCConfig(reps=20_000))
    near, far = rep.radii == 100, rep.radii == 1000
    # the far margins are ~1e-5 V, below the block-median resolution, so compare signs
    assert np.any(rep.margins[near] > 0)
    assert np.all(rep.margins[far] < 0)


def test_fig1_left_smaller_s1_passes_default_grid():
    from subgeo.config import load
    m = load("fig1_left").model
    spec = default_drift_spec(m, "poly", 1.0, s0=4, s1=0.005)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = verify_drift(m, spec, GridConfig(), MCConfig(reps=50_000))
    assert rep.passed
