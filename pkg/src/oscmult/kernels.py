"""Radial kernels of oscillating multipliers and damped wave propagators.

``q_{sigma,alpha}`` is the inverse transform of
``exp((i - sigma)(lam^2 + rho^2)^(alpha/2))`` and ``kappa_{alpha,beta}`` the
inverse transform of the oscillating symbol.  The two are tied by the
subordination identity

    kappa_{alpha,beta} = Gamma(beta/alpha)^-1 int_0^inf sigma^(beta/alpha - 1) q_{sigma,alpha} dsigma.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import betainc

from .geometry import SpaceParams, cartan_density, log_cartan_density
from .multipliers import MultiplierSpec, eval_m
from .special import ConvergenceError, log_gamma, log_plancherel_density
from .transform import (
    NORMALIZATION,
    InverseResult,
    RadialGrid,
    _weighted_phi_sums,
    gauss_panels,
    inverse_transform,
    inverse_transform_shifted,
    spectral_nodes,
)


@dataclass(frozen=True)
class WaveKernelSpec:
    sp: SpaceParams
    sigma: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def wave_symbol(spec: WaveKernelSpec):
    rho2 = spec.sp.rho**2

    def m(lam):
        lam = np.asarray(lam)
        if np.iscomplexobj(lam):
            # principal branch; Re(lam^2 + rho^2) > 0 on the strip |Im lam| < rho
            return np.exp((1j - spec.sigma) * np.exp(spec.alpha / 2 * np.log(lam * lam + rho2)))
        return np.exp((1j - spec.sigma) * (lam * lam + rho2) ** (spec.alpha / 2))

    return m


def wave_lambda_max(sigma: float, alpha: float = 1.0, rho: float = 1.0, digits: float = 45.0) -> float:
    """Spectral cutoff where the damping exp(-sigma lam^alpha) is below e^-digits."""
    return max((digits / sigma) ** (1 / alpha), 4 * rho, 10.0)


def _merge(parts, far_from):
    """Join a near-range and a far-range inversion into one sorted result."""
    if len(parts) == 1:
        return parts[0]
    near_res, far_res = parts
    t = np.concatenate([near_res.grid.t_nodes, far_res.grid.t_nodes])
    order = np.argsort(t, kind="stable")
    value = np.concatenate([near_res.grid.values, far_res.grid.values])[order]
    error = np.concatenate([near_res.error, far_res.error])[order]
    by_eps = {
        e: np.concatenate([near_res.by_eps[e], far_res.by_eps[e]])[order] for e in near_res.by_eps
    }
    meta = dict(near_res.grid.meta, far_from=far_from)
    return InverseResult(RadialGrid(t[order], value, error=error, meta=meta), by_eps, error)


def wave_kernel(
    spec: WaveKernelSpec,
    ts,
    lambda_max: float | None = None,
    far_from: float | None = None,
    threads: int = 1,
) -> InverseResult:
    """Damped wave kernel ``q_{sigma,alpha}`` at radii ``ts``.

    Radii at or beyond ``far_from`` use the lifted contour.
    """
    if lambda_max is None:
        lambda_max = wave_lambda_max(spec.sigma, spec.alpha, spec.sp.rho)
    rate = MultiplierSpec(spec.alpha, 0.0, spec.sp.rho).phase_rate(lambda_max)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    far = np.zeros(ts.size, dtype=bool) if far_from is None else ts >= far_from
    parts = []
    if np.any(~far):
        parts.append(inverse_transform(
            spec.sp, wave_symbol(spec), ts[~far], lambda_max=lambda_max, tol=math.inf,
            phase_rate=rate, threads=threads,
        ))
    if np.any(far):
        parts.append(inverse_transform_shifted(
            spec.sp, wave_symbol(spec), ts[far], lambda_max=lambda_max, phase_rate=rate,
        ))
    return _merge(parts, far_from)


def oscillating_kernel(
    sp: SpaceParams,
    spec: MultiplierSpec,
    ts,
    eps: float = 1e-3,
    lambda_max: float = 400.0,
    symbol=None,
    far_from: float | None = None,
    threads: int = 1,
) -> InverseResult:
    """``kappa_{alpha,beta}`` at radii ``ts`` by regularized inversion.

    ``symbol`` overrides ``m_{alpha,beta}`` (e.g. a zero or symmetrized
    symbol); the spectral panels are still sized from ``spec``.  Radii at or
    beyond ``far_from`` are computed on the lifted contour, which keeps
    relative accuracy where the kernel is exponentially small; the symbol
    must then accept complex arguments.
    """
    if abs(spec.rho - sp.rho) > 1e-12:
        raise ValueError("multiplier rho does not match the space")
    if eps == 0 and spec.beta.real < (sp.n + 1) / 2:
        raise ConvergenceError(
            "Re beta below (n+1)/2 needs eps > 0 for an absolutely convergent inversion"
        )
    m = symbol if symbol is not None else (lambda lam: eval_m(spec, lam))
    rate = spec.phase_rate(lambda_max)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    far = np.zeros(ts.size, dtype=bool) if far_from is None else ts >= far_from
    parts = []
    if np.any(~far):
        parts.append(inverse_transform(
            sp, m, ts[~far], regularizer_eps=eps, lambda_max=lambda_max, tol=math.inf,
            phase_rate=rate, threads=threads,
        ))
    if np.any(far):
        parts.append(inverse_transform_shifted(
            sp, m, ts[far], regularizer_eps=eps, lambda_max=lambda_max, phase_rate=rate,
        ))
    return _merge(parts, far_from)


# -- local / far split ------------------------------------------------------


def smoothstep(x, order: int = 7):
    """Polynomial step from 0 (x <= 0) to 1 (x >= 1) with ``order`` continuous derivatives.

    It is the normalized integral of ``x^order (1-x)^order``, i.e. the
    regularized incomplete beta function ``I_x(order+1, order+1)``, so
    ``S(1/2) = 1/2`` and ``S(x) + S(1-x) = 1``.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return betainc(order + 1, order + 1, x)


@dataclass
class KernelSplit:
    kappa0: RadialGrid
    kappa_inf: RadialGrid
    cutoff_order: int


def split_kernel(kappa: RadialGrid, cutoff_order: int = 7) -> KernelSplit:
    """Partition-of-unity split into a part on [0, 2] and a part on [1, inf)."""
    t = kappa.t_nodes
    if t[-1] <= 2:
        raise ValueError("kernel grid must extend beyond t = 2")
    if np.count_nonzero((t >= 1) & (t <= 2)) < 16:
        raise ValueError("grid too coarse: fewer than 16 nodes in [1, 2]")
    far_weight = smoothstep(t - 1.0, cutoff_order)
    far = kappa.values * far_weight
    near = kappa.values - far
    near = np.where(t >= 2, 0.0, near)
    far = np.where(t <= 1, 0.0, far)
    err = kappa.error
    return KernelSplit(
        kappa0=RadialGrid(t, near, weights=kappa.weights, error=err, meta=dict(kappa.meta)),
        kappa_inf=RadialGrid(t, far, weights=kappa.weights, error=err, meta=dict(kappa.meta)),
        cutoff_order=cutoff_order,
    )


# -- decay of the damped wave kernel ----------------------------------------


@dataclass
class DecayReport:
    sigma: float
    t: np.ndarray
    normalized: np.ndarray
    running_sup: np.ndarray
    sup: float
    stabilized_at: float
    stable: bool
    usable_t_max: float
    growth_ratio: float
    weight_rate: float
    meta: dict = field(default_factory=dict)


def decay_check_q1(
    sp: SpaceParams,
    sigma: float,
    t_range=(2.0, 8.0),
    weight_rate: float | None = None,
    n_points: int = 61,
    stable_tol: float = 0.05,
    kernel: InverseResult | None = None,
) -> DecayReport:
    """Sample ``|q_sigma(t)| (t+1)^(3/2) e^(w t)`` with ``w = 2 rho`` by default.

    The running sup is stable when its final value exceeds its value at the
    midpoint of the range by at most ``stable_tol``.  Radii where the
    quadrature error exceeds 10% of ``|q_sigma|`` are excluded and reported
    through ``usable_t_max``.
    """
    w = 2 * sp.rho if weight_rate is None else weight_rate
    lo, hi = t_range
    ts = np.linspace(lo, hi, n_points)
    res = kernel if kernel is not None else wave_kernel(WaveKernelSpec(sp, sigma), ts)
    t = res.grid.t_nodes
    q = np.abs(res.grid.values)
    usable = res.error <= 0.1 * q
    if not usable[0]:
        raise ConvergenceError("quadrature noise exceeds the kernel at the start of the range")
    cut = np.argmin(usable) if not usable.all() else t.size
    t, q = t[:cut], q[:cut]
    g = q * (t + 1) ** 1.5 * np.exp(w * t)
    run = np.maximum.accumulate(g)
    mid = lo + 0.5 * (hi - lo)
    at_mid = run[np.searchsorted(t, mid, side="right") - 1]
    # first radius after which the running sup grows by at most stable_tol
    final = run[-1]
    idx = int(np.argmax(run >= final / (1 + stable_tol)))
    return DecayReport(
        sigma=sigma,
        t=t,
        normalized=g,
        running_sup=run,
        sup=float(final),
        stabilized_at=float(t[idx]),
        stable=bool(final <= at_mid * (1 + stable_tol)),
        usable_t_max=float(t[-1]),
        growth_ratio=float(g[-1] / g[0]),
        weight_rate=w,
    )


# -- L^1 norms ---------------------------------------------------------------


@dataclass
class L1Result:
    sigma: float
    value: float
    body: float
    tail_estimate: float
    tail_bound: float
    envelope_constant: float
    t_cut: float


def _l1_nodes(sigma: float, t_cut: float):
    front = min(0.25, sigma / 2)
    near, wn = gauss_panels(0.5, 1.5, front, order=10)
    left, wl = gauss_panels(0.0, 0.5, 0.1, order=10)
    right, wr = gauss_panels(1.5, t_cut, 0.1, order=10)
    return np.concatenate([left, near, right]), np.concatenate([wl, wn, wr])


def l1_norm(sp: SpaceParams, sigma: float, alpha: float = 1.0, t_cut: float = 8.0, threads: int = 1) -> L1Result:
    """``||q_sigma||_{L^1(X)}`` with a tail beyond ``t_cut`` from the decay envelope.

    The envelope ``c (t+1)^(-3/2) e^(-2 rho t)`` is fitted on the last three
    units before ``t_cut``; the tail estimate uses ``c`` and the certified
    bound uses ``2c``.
    """
    if alpha != 1.0:
        raise ValueError("L^1 scaling is implemented for the wave case alpha = 1")
    t, w = _l1_nodes(sigma, t_cut)
    res = wave_kernel(WaveKernelSpec(sp, sigma, alpha), t, threads=threads)
    q = np.abs(res.grid.values)
    body = float(np.sum(w * q * cartan_density(sp, t)))
    fit = t >= t_cut - 3.0
    if np.any(res.error[fit] > 0.1 * q[fit]):
        raise ConvergenceError("decay envelope cannot be fitted: kernel below quadrature noise")
    c = float(np.max(q[fit] * (t[fit] + 1) ** 1.5 * np.exp(2 * sp.rho * t[fit])))

    def envelope(s):
        return c * (s + 1) ** -1.5 * np.exp(log_cartan_density(sp, s) - 2 * sp.rho * s)

    tail = integrate.quad(envelope, t_cut, np.inf, limit=200)[0]
    return L1Result(sigma, body + tail, body, tail, 2 * tail, c, t_cut)


def l1_scaling_fit(sp: SpaceParams, sigma_grid, t_cut: float = 8.0, threads: int = 1):
    """Slope of log ||q_sigma||_1 against log sigma, with the per-sigma results."""
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    if sigma_grid.size < 6:
        raise ValueError("need at least 6 values of sigma")
    results = [l1_norm(sp, s, t_cut=t_cut, threads=threads) for s in sigma_grid]
    norms = np.array([r.value for r in results])
    slope, _ = np.polyfit(np.log(sigma_grid), np.log(norms), 1)
    return float(slope), results


# -- subordination -----------------------------------------------------------


def subordination_symbol(alpha: float, beta: complex, rho: float, lam: float) -> complex:
    """Spectral side of subordination, computed by quadrature in sigma.

    Gamma(b)^-1 int_0^inf sigma^(b-1) exp((i - sigma) z) dsigma with
    ``b = beta/alpha`` and ``z = (lam^2 + rho^2)^(alpha/2)``; equals
    ``m_{alpha,beta}(lam)``.
    """
    b = complex(beta) / alpha
    z = (lam * lam + rho * rho) ** (alpha / 2)

    def part(fn):
        # sigma = exp(u): sigma^b exp(-sigma z)
        re = integrate.quad(lambda u: fn(np.exp(b * u - np.exp(u) * z)), -60, 10, limit=400, epsabs=0, epsrel=1e-12)
        return re[0]

    value = part(np.real) + 1j * part(np.imag)
    return complex(np.exp(1j * z - log_gamma(b)) * value)


@dataclass
class SubordinationResult:
    t: np.ndarray
    value: np.ndarray
    small_sigma_remainder: np.ndarray
    sigma_nodes: np.ndarray


def subordination_assemble(
    sp: SpaceParams,
    alpha: float,
    beta: complex,
    ts,
    sigma_min: float = 0.01,
    sigma_max: float = 60.0,
    n_sigma: int = 48,
    threads: int = 1,
) -> SubordinationResult:
    """``kappa_{alpha,beta}(t)`` assembled from damped wave kernels.

    The sigma-integral is split at sigma = 1 and each half is integrated in
    ``u = log sigma`` by Gauss-Legendre.  The piece below ``sigma_min`` is
    approximated by ``q_{sigma_min}(t) sigma_min^b / b`` and reported
    separately.  All wave kernels share one table of spherical functions.
    """
    beta = complex(beta)
    if beta.real <= 0:
        raise ValueError("subordination needs Re beta > 0")
    b = beta / alpha
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("subordination is evaluated at t > 0")
    half = n_sigma // 2
    x, w = np.polynomial.legendre.leggauss(half)
    lo_u = (x + 1) / 2 * (0 - math.log(sigma_min)) + math.log(sigma_min)
    lo_w = w / 2 * (0 - math.log(sigma_min))
    hi_u = (x + 1) / 2 * math.log(sigma_max)
    hi_w = w / 2 * math.log(sigma_max)
    us = np.concatenate([[math.log(sigma_min)], lo_u, hi_u])
    uw = np.concatenate([[0.0], lo_w, hi_w])
    sigmas = np.exp(us)

    lam_max = wave_lambda_max(sigma_min, alpha, sp.rho)
    rate = MultiplierSpec(alpha, 0.0, sp.rho).phase_rate(lam_max)
    lams, lw = spectral_nodes(lam_max, float(ts.max()), phase_rate=rate)
    z = (lams**2 + sp.rho**2) ** (alpha / 2)
    rows = np.exp(np.outer(1j - sigmas, z))
    # one row per damped wave symbol, all against the same phi table
    dens = np.exp(log_plancherel_density(sp, lams))
    coeffs = NORMALIZATION * lw * dens * rows
    q = _weighted_phi_sums(sp, lams, coeffs, ts, threads)  # (n_sigma+1, len(ts))

    inv_gamma = np.exp(-log_gamma(b))
    weights = uw * np.exp(b * us)  # sigma^(b-1) dsigma = sigma^b du
    body = inv_gamma * (weights @ q)
    remainder = inv_gamma * q[0] * sigma_min**b / b
    return SubordinationResult(ts, body + remainder, remainder, sigmas)


# -- tables ---------------------------------------------------------------


def kernel_table_csv(path, grid: RadialGrid, envelope_ratio=None, header_note: str = ""):
    """Write columns t, re, im, abs, envelope_ratio."""
    ratio = np.full(grid.t_nodes.size, np.nan) if envelope_ratio is None else np.asarray(envelope_ratio)
    with open(path, "w", newline="") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "re", "im", "abs", "envelope_ratio"])
        for t, v, r in zip(grid.t_nodes, grid.values, ratio):
            writer.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v))), repr(float(r))])
