import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import kv

from oscmult.geometry import make_space
from oscmult.special import ConvergenceError
from oscmult.transform import (
    NORMALIZATION,
    RADIAL_TEST_FUNCTIONS,
    RadialGrid,
    SpectralGrid,
    TailTooLargeError,
    calibrate_normalization,
    forward_transform,
    inverse_transform,
    inverse_transform_shifted,
    radial_from_csv,
    radial_to_csv,
    roundtrip_error,
    sample_radial,
    spectral_from_csv,
    spectral_to_csv,
)

SPACES = [("RealHyp", 3), ("ComplexHyp", 2), ("QuatHyp", 2)]


def gauss(t):
    return np.exp(-np.asarray(t) ** 2)


def h3_gauss_kernel(t):
    """Inverse of exp(-lam^2/4) on H^3: (2 pi sinh t)^-1 int lam e^(-lam^2/4) sin(lam t) = t e^(-t^2) / (sqrt(pi) sinh t)."""
    return t * np.exp(-t * t) / (math.sqrt(math.pi) * np.sinh(t))


def test_zero_inputs(h3):
    out = forward_transform(h3, lambda t: np.zeros_like(t), [0.5, 1.0, 5.0], t_max=5)
    assert np.all(out.values == 0)
    res = inverse_transform(h3, lambda lam: np.zeros_like(lam), [0.1, 1.0, 3.0], lambda_max=20)
    assert np.all(res.grid.values == 0)


def test_forward_matches_h3_sine_reduction(h3):
    # the oracle (4 pi / lam) int e^(-t^2) sin(lam t) sinh t dt agrees up to one constant
    lams = [0.5, 1.0, 5.0]
    out = forward_transform(h3, gauss, lams, t_max=12)
    ratios = []
    for lam, v in zip(out.lambda_nodes, out.values):
        integral = integrate.quad(lambda t: math.exp(-t * t) * math.sin(lam * t) * math.sinh(t), 0, 12, epsabs=0, epsrel=1e-12, limit=400)[0]
        ratios.append(v.real / (4 * math.pi / lam * integral))
        assert abs(v.imag) < 1e-14
    assert np.allclose(ratios, ratios[0], rtol=1e-8, atol=0)
    # measure on the Cartan side is J(t) dt = 4 sinh^2 t dt, hence the constant 1/pi
    assert ratios[0] == pytest.approx(1 / math.pi, rel=1e-8)


@given(st.floats(-3, 3), st.floats(0.6, 2), st.floats(0.6, 2))
@settings(max_examples=8)
def test_forward_linearity(a, s1, s2):
    sp = make_space("ComplexHyp", 2)
    f = lambda t: np.exp(-s1 * np.asarray(t) ** 2)
    g = lambda t: np.cos(np.asarray(t)) * np.exp(-s2 * np.asarray(t) ** 2)
    lams = [0.3, 2.0, 7.0]
    lhs = forward_transform(sp, lambda t: a * f(t) + g(t), lams, t_max=12, tol=1e-6).values
    rhs = a * forward_transform(sp, f, lams, t_max=12, tol=1e-6).values + forward_transform(sp, g, lams, t_max=12, tol=1e-6).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_forward_tail_guard(h3):
    with pytest.raises(TailTooLargeError):
        forward_transform(h3, lambda t: np.exp(-np.asarray(t)), [1.0], t_max=5)


def test_inverse_gaussian_symbol_oracle(h3):
    ts = np.linspace(0.05, 4.5, 40)
    res = inverse_transform(h3, lambda lam: np.exp(-lam * lam / 4), ts, lambda_max=40)
    ref = h3_gauss_kernel(ts)
    assert np.max(np.abs(res.grid.values / ref - 1)) < 1e-6


def poisson_symbol(lam, sigma=1.0):
    return np.exp(-sigma * np.sqrt(lam * lam + 1 + 0j))


def h3_poisson_kernel(t, sigma=1.0):
    """Inverse of exp(-sigma sqrt(lam^2 + 1)) on H^3 from int e^(-sigma sqrt(lam^2+1)) cos(lam t) = sigma K_1(r)/r."""
    r = np.sqrt(sigma * sigma + t * t)
    return sigma * t * kv(2, r) / (2 * math.pi * r * r * np.sinh(t))


def test_poisson_symbol_oracle(h3):
    ts = np.linspace(0.3, 4, 8)
    res = inverse_transform(h3, poisson_symbol, ts, lambda_max=60)
    assert np.max(np.abs(res.grid.values / h3_poisson_kernel(ts) - 1)) < 1e-10


def test_shifted_route_keeps_relative_accuracy(h3):
    # kernels decaying like e^(-2 rho t) keep their relative accuracy on the lifted contour
    ts = np.linspace(3.0, 30.0, 10)
    res = inverse_transform_shifted(h3, poisson_symbol, ts, lambda_max=60)
    ref = h3_poisson_kernel(ts)
    err = np.abs(res.grid.values - ref)
    assert np.max(err / ref) < 1e-10
    assert np.all(err <= res.error)


def test_shifted_route_error_is_honest_for_fast_decay(h3):
    # a Gaussian kernel drops below the contour's rounding floor; the reported error says so
    ts = np.linspace(3.0, 10.0, 15)
    res = inverse_transform_shifted(h3, lambda lam: np.exp(-lam * lam / 4), ts, lambda_max=40)
    assert np.all(np.abs(res.grid.values - h3_gauss_kernel(ts)) <= res.error)


@pytest.mark.parametrize("family,k", SPACES)
def test_shifted_and_direct_routes_agree(family, k):
    sp = make_space(family, k)
    ts = np.array([3.0, 3.5, 4.0])
    m = lambda lam: np.exp(-np.sqrt(lam * lam + sp.rho**2 + 0j))
    a = inverse_transform(sp, m, ts, lambda_max=80)
    b = inverse_transform_shifted(sp, m, ts, lambda_max=80)
    diff = np.abs(a.grid.values - b.grid.values)
    assert np.max(diff / np.abs(b.grid.values)) < 1e-6
    assert np.all(diff <= a.error + b.error)


@pytest.mark.parametrize("family,k", SPACES)
def test_even_real_symbol_gives_real_kernel(family, k):
    sp = make_space(family, k)
    res = inverse_transform(sp, lambda lam: np.exp(-lam * lam / 10) * np.cos(lam), np.linspace(0, 5, 21), lambda_max=60)
    assert np.max(np.abs(res.grid.values.imag)) < 1e-10


@pytest.mark.parametrize("family,k", SPACES)
@pytest.mark.parametrize("symbol,lam_max", [("gauss", 60), ("algebraic", 200)])
def test_doubling_lambda_max_within_error(family, k, symbol, lam_max):
    sp = make_space(family, k)
    power = -(sp.n + 3) / 2
    m = {"gauss": lambda lam: np.exp(-lam * lam / 50), "algebraic": lambda lam: (1 + lam * lam) ** power}[symbol]
    ts = np.linspace(0.05, 6, 30)
    a = inverse_transform(sp, m, ts, lambda_max=lam_max)
    b = inverse_transform(sp, m, ts, lambda_max=2 * lam_max)
    assert np.all(np.abs(a.grid.values - b.grid.values) <= a.error)


def test_regularized_inverse_extrapolates(h3):
    ts = np.linspace(0.2, 3, 8)
    ref = h3_gauss_kernel(ts)
    m = lambda lam: np.exp(-lam * lam / 4)
    coarse = inverse_transform(h3, m, ts, regularizer_eps=1e-2, lambda_max=200)
    fine = inverse_transform(h3, m, ts, regularizer_eps=1e-3, lambda_max=200)
    assert set(coarse.by_eps) == {1e-2, 5e-3, 2.5e-3}
    for res in (coarse, fine):
        assert np.all(np.abs(res.grid.values - ref) <= res.error)
    # the extrapolation beats the least damped sample
    assert np.all(np.abs(coarse.grid.values - ref) < np.abs(coarse.by_eps[2.5e-3] - ref))
    assert np.max(np.abs(fine.grid.values - ref) / ref) < np.max(np.abs(coarse.grid.values - ref) / ref)


def test_nondecaying_symbol_needs_regularizer(h3):
    with pytest.raises(ConvergenceError):
        inverse_transform(h3, lambda lam: np.ones_like(lam), [1.0], lambda_max=50)
    with pytest.raises(ValueError):
        inverse_transform(h3, lambda lam: np.ones_like(lam), [1.0], regularizer_eps=-1)


@pytest.mark.parametrize("family,k", [("RealHyp", 3), ("ComplexHyp", 2)])
def test_normalization_constant(family, k):
    assert calibrate_normalization(make_space(family, k)) == pytest.approx(NORMALIZATION, rel=1e-8)
    assert NORMALIZATION == 1 / (2 * math.pi)


def test_gauss_round_trip_h3(h3):
    assert roundtrip_error(h3, "gauss") < 1e-6
    assert set(RADIAL_TEST_FUNCTIONS) == {"gauss", "gauss_poly", "gauss_cos", "bump2", "bump3"}


def test_grid_validation():
    with pytest.raises(ValueError):
        RadialGrid([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        RadialGrid([1.0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        SpectralGrid([2.0, 1.0], [1.0, 2.0])


def test_csv_round_trip(tmp_path):
    grid = sample_radial(gauss, t_max=3, lambda_max=5)
    radial_to_csv(grid, tmp_path / "r.csv", header_note="test grid")
    back = radial_from_csv(tmp_path / "r.csv")
    assert np.array_equal(back.t_nodes, grid.t_nodes) and np.array_equal(back.values, grid.values)
    spec = SpectralGrid(np.array([0.1, 1.0]), np.array([1 + 2j, -3e-300 + 0j]))
    spectral_to_csv(spec, tmp_path / "s.csv")
    again = spectral_from_csv(tmp_path / "s.csv")
    assert np.array_equal(again.values, spec.values)
    assert (tmp_path / "r.csv").read_text().startswith("# test grid\nt,re,im\n")
