import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscmult.geometry import make_space
from oscmult.multipliers import MultiplierSpec, conjugate, smoothness_order
from oscmult.kunze_stein import (
    InsufficientRangeError,
    KSTotal,
    ShellBound,
    Verdict,
    certify,
    ks_total,
    local_threshold,
    shell_decay_fit,
    shell_integral,
    shell_nodes,
    shell_weight,
    shells_to_csv,
)
from oscmult.transform import RadialGrid

H3 = make_space("RealHyp", 3)
N_HALF = smoothness_order(3, 0.5)
CONVERGED = KSTotal(1.0, 1.0, 1e-4, True, 40, None)
DIVERGED = KSTotal(math.inf, 5.0, math.inf, False, 40, None)


def zero_far(j_max=20):
    t, w = shell_nodes(j_max)
    return RadialGrid(t, np.zeros_like(t), weights=w, error=np.zeros_like(t))


# -- weights and shells --------------------------------------------------------


@pytest.mark.parametrize("eta", [0.25, 0.5, 0.9])
@pytest.mark.parametrize("p", [2, 4, 1.5])
def test_shell_weight_h3_closed_form(eta, p):
    t = np.linspace(0.5, 30, 25)
    ref = (np.sinh(eta * t) / (eta * np.sinh(t))) ** (2 * min(1 / p, 1 - 1 / p))
    assert np.max(np.abs(shell_weight(H3, t, p, eta) / ref - 1)) < 1e-8


def test_shell_weight_at_full_eta_is_one():
    # phi_{-i rho} is the constant function 1
    t = np.linspace(0, 20, 21)
    assert np.max(np.abs(shell_weight(H3, t, 2, 1.0) - 1)) < 1e-9
    with pytest.raises(ValueError):
        shell_weight(H3, t, 2, 1.5)


def test_zero_kernel_shells():
    far = zero_far()
    assert shell_integral(H3, far, 2, 0.5, 3) == ShellBound(3, 0.0, 0.0)
    tot = ks_total(H3, far, 2, 0.5, 20)
    assert (tot.I_total, tot.tail_bound, tot.converged) == (0.0, 0.0, True)


def test_shell_validation():
    far = zero_far()
    with pytest.raises(ValueError):
        shell_integral(H3, far, 2, 0.5, 0)
    with pytest.raises(ValueError):
        shell_integral(H3, far, 2, 0.5, 30)
    with pytest.raises(ValueError):
        ks_total(H3, far, 2, 0.5, 10)


def test_shells_positive_and_monotone_in_eta(h3_far_half):
    for j in (1, 5, 20, 39):
        full = shell_integral(H3, h3_far_half, 2, 1.0, j)
        half = shell_integral(H3, h3_far_half, 2, 0.5, j)
        assert 0 < half.value <= full.value < math.inf


# -- decay fits ----------------------------------------------------------------


def synthetic(values, err=0.0):
    return [ShellBound(j, float(v), err) for j, v in enumerate(values, start=1)]


def test_fit_exact_power_law():
    js = np.arange(1, 31)
    fit = shell_decay_fit(synthetic(js**-5.0), N=5)
    assert fit.power_slope == pytest.approx(-5.0, abs=0.01)
    assert fit.meets_power and fit.ok


def test_fit_exponential_counts_as_faster():
    js = np.arange(1, 31)
    fit = shell_decay_fit(synthetic(np.exp(-0.3 * js) * js**2.0), N=8)
    assert fit.exp_rate == pytest.approx(0.3, abs=1e-8)
    assert fit.faster_than_power and fit.ok


def test_fit_slow_power_fails():
    js = np.arange(1, 31)
    fit = shell_decay_fit(synthetic(js**-2.0), N=5)
    assert not fit.meets_power
    assert not fit.faster_than_power
    assert not fit.ok


def test_fit_stops_at_noise_floor():
    shells = synthetic(np.arange(1, 31) ** -5.0, err=1e-6)
    # j^-5 > 10 * 1e-6 holds up to j = 9
    with pytest.raises(InsufficientRangeError):
        shell_decay_fit(shells)
    assert shell_decay_fit(shells, min_shells=5).usable == 9


@given(st.floats(1.5, 8))
def test_summable_power_law_converges(slope):
    # partial sums of j^-s with s > 1 are Cauchy; the fitted tail closes them
    js = np.arange(1, 41)
    far = synthetic(js**-slope)
    fit = shell_decay_fit(far, N=None)
    assert fit.power_slope == pytest.approx(-slope, abs=1e-6)


# -- totals on the far kernel of kappa_{1/2,0} -------------------------------------


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("eta", [0.5, 0.9])
def test_ks_total_converges(h3_far_half, p, eta):
    tot = ks_total(H3, h3_far_half, p, eta, 40, N_HALF)
    assert tot.converged
    assert tot.fit.ok
    assert math.isfinite(tot.I_total) and tot.I_total > 0
    assert tot.tail_bound < 0.01 * tot.partial_sum


def test_ks_total_nondecreasing_in_eta(h3_far_half):
    totals = [ks_total(H3, h3_far_half, 4, eta, 40, N_HALF).I_total for eta in (0.3, 0.5, 0.7, 0.9)]
    assert all(b >= a for a, b in zip(totals, totals[1:]))


def test_ks_total_negative_control(h3_far_half):
    # p near 1 makes the weight exponent s(p) vanish: Cartan growth is left uncompensated
    tot = ks_total(H3, h3_far_half, 1.0001, 0.5, 40, N_HALF)
    assert not tot.converged


def test_shells_csv(tmp_path, h3_far_half):
    tot = ks_total(H3, h3_far_half, 2, 0.5, 40, N_HALF)
    shells_to_csv(tmp_path / "s.csv", tot.shells)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("# cocentric shells") and lines[1] == "j,I_j,err"
    assert len(lines) == 42


# -- certificates ------------------------------------------------------------------


def test_certificate_examples():
    cert = certify(H3, MultiplierSpec(0.5, 0.5, 1.0), 4, far=CONVERGED)
    assert cert.local_condition.threshold == pytest.approx(3 / 8)
    assert cert.local_condition.satisfied
    assert cert.verdict is Verdict.BoundedCertified
    cert = certify(H3, MultiplierSpec(1, 0.4, 1.0), 4, group_flags={"delta_lt_2rho": True})
    assert cert.local_condition.threshold == pytest.approx(0.5)
    assert cert.verdict is Verdict.NotCovered
    assert certify(H3, MultiplierSpec(2, 5, 1.0), 4).verdict is Verdict.L2Only
    assert certify(H3, MultiplierSpec(0.5, 0.5, 1.0), 4, far=DIVERGED).verdict is Verdict.NotCovered


def test_alpha_one_needs_group_hypothesis():
    spec = MultiplierSpec(1, 2, 1.0)
    assert certify(H3, spec, 4).verdict is Verdict.NotCovered
    assert certify(H3, spec, 4, group_flags={"ct": True}).verdict is Verdict.BoundedCertified
    assert certify(H3, spec, 4, group_flags={"delta_lt_2rho": True}).verdict is Verdict.BoundedCertified


def test_boundary_warning_and_json():
    cert = certify(H3, MultiplierSpec(0.5, 0, 1.0), 2, eta_ratio=1.0)
    assert cert.verdict is Verdict.BoundedCertified
    assert any("boundary" in w for w in cert.warnings)
    data = json.loads(cert.to_json())
    assert data["verdict"] == "BoundedCertified" and data["b_prime"] == 1 and data["beta"] == [0.0, 0.0]


def test_local_threshold_formula():
    assert local_threshold(3, 0.5, 4) == pytest.approx(0.375)
    assert local_threshold(3, 1, 4) == pytest.approx(0.5)
    assert local_threshold(5, 0.3, 2) == 0


alphas = st.sampled_from([0.25, 0.5, 0.75, 1.0, 1.5])
ps = st.floats(1.05, 20)
betas = st.floats(0, 4)
flags = st.fixed_dictionaries({"delta_lt_2rho": st.booleans(), "ct": st.booleans()})


@given(alphas, ps, betas, st.floats(0, 2), flags, st.booleans())
def test_certificate_monotone_in_beta(alpha, p, beta, extra, group, far_ok):
    far = CONVERGED if far_ok else DIVERGED
    lo = certify(H3, MultiplierSpec(alpha, beta, 1.0), p, 0.5, group, far=far).verdict
    hi = certify(H3, MultiplierSpec(alpha, beta + extra, 1.0), p, 0.5, group, far=far).verdict
    if lo is Verdict.BoundedCertified:
        assert hi is Verdict.BoundedCertified


@given(alphas, betas, flags, st.booleans())
def test_certificate_duality(alpha, beta, group, far_ok):
    far = CONVERGED if far_ok else DIVERGED
    for p in np.linspace(1.1, 10, 20):
        a = certify(H3, MultiplierSpec(alpha, beta, 1.0), p, 0.5, group, far=far).verdict
        b = certify(H3, MultiplierSpec(alpha, beta, 1.0), conjugate(p), 0.5, group, far=far).verdict
        assert a is b


@given(st.floats(0.05, 5), betas, st.floats(0, 1))
def test_p2_always_bounded(alpha, beta, eta):
    assert certify(H3, MultiplierSpec(alpha, beta, 1.0), 2, eta).verdict is Verdict.BoundedCertified


@pytest.mark.slow
def test_certify_computes_far_integral_when_needed():
    cert = certify(H3, MultiplierSpec(0.5, 0.5, 1.0), 4, eta_ratio=0.5, j_max=20)
    assert cert.far_integral["shells"] == 20
    assert cert.far_integral["converged"] is True
    assert cert.verdict is Verdict.BoundedCertified
