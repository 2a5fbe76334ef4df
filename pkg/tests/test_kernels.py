import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import h3_alpha_one_kernel, h3_branch_cut_kernel, h3_wave_kernel
from oscmult.geometry import make_space
from oscmult.kernels import (
    WaveKernelSpec,
    decay_check_q1,
    kernel_table_csv,
    l1_norm,
    oscillating_kernel,
    smoothstep,
    split_kernel,
    subordination_assemble,
    subordination_symbol,
    wave_kernel,
    wave_symbol,
)
from oscmult.multipliers import MultiplierSpec, eval_m
from oscmult.special import ConvergenceError
from oscmult.transform import RadialGrid, forward_transform, gauss_panels, radial_nodes

pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")


# -- wave kernels --------------------------------------------------------------


@pytest.mark.parametrize("sigma", [0.25, 0.5, 2.0])
def test_wave_kernel_matches_bessel_form(h3, sigma):
    ts = np.array([0.3, 2.0, 6.0, 12.0])
    res = wave_kernel(WaveKernelSpec(h3, sigma), ts, far_from=3.0)
    ref = h3_wave_kernel(sigma, ts)
    err = np.abs(res.grid.values - ref)
    assert np.max(err / np.abs(ref)) < 1e-4
    assert np.all(err <= res.error)


def test_wave_kernel_matches_fourier_quadrature(h3):
    res = wave_kernel(WaveKernelSpec(h3, 0.5), [2.0])
    ref = h3_alpha_one_kernel(0.0, 2.0, sigma=0.5)
    assert abs(res.grid.values[0] / ref - 1) < 1e-4


@pytest.mark.parametrize("family,k", [("RealHyp", 3), ("ComplexHyp", 2)])
def test_forward_of_wave_kernel_recovers_symbol(family, k):
    sp = make_space(family, k)
    spec = WaveKernelSpec(sp, 1.0)
    t, w = radial_nodes(30.0, 5.0)
    res = wave_kernel(spec, t, far_from=3.0)
    lams = np.array([1.0, 2.0, 5.0])
    back = forward_transform(sp, RadialGrid(t, res.grid.values, weights=w), lams, tol=1e-6).values
    assert np.max(np.abs(back / wave_symbol(spec)(lams) - 1)) < 1e-5


@given(st.floats(0.01, 10), st.floats(0.2, 2), st.floats(0, 1e3))
def test_wave_symbol_modulus(sigma, alpha, lam):
    sp = make_space("RealHyp", 3)
    m = wave_symbol(WaveKernelSpec(sp, sigma, alpha))
    z = (lam * lam + sp.rho**2) ** (alpha / 2)
    assert abs(m(np.array([lam]))[0]) == pytest.approx(math.exp(-sigma * z), rel=1e-12, abs=1e-300)
    # the supremum over real lam is attained at lam = 0
    assert abs(m(np.array([0.0]))[0]) == pytest.approx(math.exp(-sigma * sp.rho**alpha), rel=1e-15)
    assert abs(m(np.array([lam]))[0]) <= math.exp(-sigma * sp.rho**alpha) * (1 + 1e-15)


def test_wave_kernel_reproducible_and_thread_independent(h2c):
    spec = WaveKernelSpec(h2c, 0.7)
    ts = np.linspace(0.1, 5, 40)
    a = wave_kernel(spec, ts)
    b = wave_kernel(spec, ts)
    c = wave_kernel(spec, ts, threads=4)
    assert np.array_equal(a.grid.values, b.grid.values)
    assert np.array_equal(a.grid.values, c.grid.values)


def test_wave_spec_validation(h3):
    with pytest.raises(ValueError):
        WaveKernelSpec(h3, 0.0)
    with pytest.raises(ValueError):
        WaveKernelSpec(h3, 1.0, alpha=-1)


# -- oscillating kernels -------------------------------------------------------


def test_zero_symbol_gives_zero_kernel(h3):
    res = oscillating_kernel(h3, MultiplierSpec(0.5, 0, 1.0), [0.5, 1.5, 4.0], symbol=lambda lam: np.zeros_like(lam), far_from=3.0)
    assert np.all(res.grid.values == 0)


@pytest.mark.parametrize("t", [0.5, 1.5, 2.0, 3.0, 5.0])
def test_kappa_1_2_matches_fourier_quadrature(h3, t):
    res = oscillating_kernel(h3, MultiplierSpec(1, 2, 1.0), [t], far_from=3.0)
    ref = h3_alpha_one_kernel(2.0, t)
    assert abs(res.grid.values[0] - ref) <= res.error[0]
    assert abs(res.grid.values[0] / ref - 1) < 1e-5


@pytest.mark.parametrize("t", [0.5, 2.0, 5.0, 10.0, 20.0])
def test_kappa_half_matches_branch_cut(h3, t):
    res = oscillating_kernel(h3, MultiplierSpec(0.5, 0, 1.0), [t], far_from=3.0)
    ref = h3_branch_cut_kernel(0.5, 0.0, t)
    assert abs(res.grid.values[0] - ref) <= res.error[0]


def test_symmetrized_symbol_gives_real_kernel(h2c):
    spec = MultiplierSpec(0.5, 1.0, h2c.rho)
    sym = lambda lam: eval_m(spec, lam).real
    res = oscillating_kernel(h2c, spec, np.linspace(0.2, 2.5, 12), symbol=sym)
    assert np.max(np.abs(res.grid.values.imag)) < 1e-9


def test_unregularized_inversion_needs_decay(h3):
    with pytest.raises(ConvergenceError):
        oscillating_kernel(h3, MultiplierSpec(0.5, 0, 1.0), [1.0], eps=0)
    with pytest.raises(ValueError):
        oscillating_kernel(h3, MultiplierSpec(0.5, 0, 2.0), [1.0])


# -- split -------------------------------------------------------------------


def test_smoothstep_values():
    assert smoothstep(0.5) == pytest.approx(0.5, abs=1e-15)
    assert smoothstep(-1.0) == 0 and smoothstep(2.0) == 1
    x = np.linspace(0, 1, 101)
    assert np.all(np.diff(smoothstep(x)) >= 0)


@given(st.floats(-1, 2), st.integers(1, 9))
def test_smoothstep_symmetry(x, order):
    assert smoothstep(x, order) + smoothstep(1 - x, order) == pytest.approx(1.0, abs=1e-12)


def test_smoothstep_flatness_at_ends():
    # order 7: S(h) = binom(15, 7) h^8 / 8 + O(h^9) = 6435 h^8 + ...
    h = 1e-2
    assert smoothstep(h) == pytest.approx(6435 * h**8, rel=0.2)
    assert 1 - smoothstep(1 - h) == pytest.approx(6435 * h**8, rel=0.2)


def test_split_kernel_examples():
    t, w = gauss_panels(0.0, 4.0, 0.25, 8)
    vals = np.exp(-t) * (1 + 0.5j)
    split = split_kernel(RadialGrid(t, vals, weights=w))
    near, far = split.kappa0.values, split.kappa_inf.values
    assert np.all(far[t <= 1] == 0)
    assert np.all(near[t >= 2] == 0)
    assert np.array_equal(near + far, vals)
    mid = RadialGrid(np.sort([0.0, 0.5, 1.5, 3.0] + list(np.linspace(1.01, 1.99, 16))), np.ones(20))
    sm = split_kernel(mid)
    i = int(np.searchsorted(mid.t_nodes, 1.5))
    assert sm.kappa0.values[i] == pytest.approx(0.5) and sm.kappa_inf.values[i] == pytest.approx(0.5)
    assert sm.kappa_inf.values[np.searchsorted(mid.t_nodes, 0.5)] == 0
    assert sm.kappa0.values[np.searchsorted(mid.t_nodes, 3.0)] == 0


@given(st.lists(st.floats(-5, 5), min_size=80, max_size=80))
def test_split_consistency(vals):
    t = np.linspace(0, 4, 80)
    grid = RadialGrid(t, np.array(vals))
    s = split_kernel(grid)
    assert np.allclose(s.kappa0.values + s.kappa_inf.values, grid.values, rtol=0, atol=1e-15)


def test_split_requires_fine_grid():
    with pytest.raises(ValueError):
        split_kernel(RadialGrid(np.linspace(0, 4, 10), np.ones(10)))
    with pytest.raises(ValueError):
        split_kernel(RadialGrid(np.linspace(0, 1.9, 100), np.ones(100)))


# -- decay -------------------------------------------------------------------


def test_decay_sigma_one_stabilizes_by_five(h3):
    rep = decay_check_q1(h3, 1.0)
    assert rep.stable
    assert rep.stabilized_at <= 5.0
    assert rep.usable_t_max == 8.0
    assert math.isfinite(rep.sup)


def test_decay_negative_control_blows_up(h3):
    rep = decay_check_q1(h3, 1.0, weight_rate=3 * h3.rho)
    assert rep.growth_ratio >= 10
    assert not rep.stable


def test_decay_sup_scales_at_most_linearly_in_sigma(h3):
    sups = {s: decay_check_q1(h3, s, t_range=(0.05, 8.0), n_points=160).sup for s in (2.0, 3.0, 4.0)}
    # least-squares c in sup ~ c sigma from sigma = 2, 3
    c = (2 * sups[2.0] + 3 * sups[3.0]) / 13
    assert sups[4.0] <= 1.1 * c * 4.0


# -- L1 norms ----------------------------------------------------------------


def test_l1_norm_nonincreasing_for_large_sigma(h3):
    norms = [l1_norm(h3, s).value for s in (2.0, 4.0, 7.0, 10.0)]
    assert all(b <= a for a, b in zip(norms, norms[1:]))


def test_l1_norm_only_wave_case(h3):
    with pytest.raises(ValueError):
        l1_norm(h3, 1.0, alpha=0.5)


# -- subordination -----------------------------------------------------------


@pytest.mark.parametrize("alpha,beta", [(1, 2), (0.5, 1), (1, 1 + 1j), (2, 3)])
def test_subordination_symbol_identity(alpha, beta):
    spec = MultiplierSpec(alpha, beta, 1.0)
    for lam in np.linspace(0, 30, 20):
        assert abs(subordination_symbol(alpha, beta, 1.0, lam) - eval_m(spec, lam)) < 1e-10


def test_subordination_with_unit_ratio_is_plain_sigma_integral(h3):
    # beta / alpha = 1: Gamma(1) = 1 and the weight is sigma^0
    t = np.array([2.0])
    res = subordination_assemble(h3, 1.0, 1.0, t)
    ref = h3_alpha_one_kernel(1.0, 2.0)
    assert abs(res.value[0] / ref - 1) < 1e-3


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_subordination_matches_direct_inversion(h3, t):
    res = subordination_assemble(h3, 1.0, 2.0, [t])
    direct = oscillating_kernel(h3, MultiplierSpec(1, 2, 1.0), [t]).grid.values[0]
    assert abs(res.value[0] / direct - 1) < 1e-3


def test_subordination_validation(h3):
    with pytest.raises(ValueError):
        subordination_assemble(h3, 1.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        subordination_assemble(h3, 1.0, 1.0, [0.0])


def test_kernel_table_header(tmp_path, h3):
    res = wave_kernel(WaveKernelSpec(h3, 1.0), [0.5, 1.0])
    kernel_table_csv(tmp_path / "k.csv", res.grid, header_note="q1 wave kernel; t in distance units")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "# q1 wave kernel; t in distance units"
    assert lines[1].split(",")[:4] == ["t", "re", "im", "abs"]
