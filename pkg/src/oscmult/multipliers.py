"""The oscillating symbol m_{alpha,beta} and its strip-class bookkeeping."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np


class StripError(ValueError):
    """Evaluation point or contour leaves the strip of analyticity."""


@dataclass(frozen=True)
class MultiplierSpec:
    alpha: float
    beta: complex
    rho: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if complex(self.beta).real < 0:
            raise ValueError(f"Re beta must be nonnegative, got {self.beta}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "beta", complex(self.beta))

    def phase_rate(self, lam_max: float) -> float:
        """Upper bound of |d/dlam (lam^2 + rho^2)^(alpha/2)| on [0, lam_max]."""
        lam = np.linspace(0.0, lam_max, 2001)
        return float(np.max(self.alpha * lam * (lam**2 + self.rho**2) ** (self.alpha / 2 - 1)))


@dataclass(frozen=True)
class StripClassParams:
    v: float
    N: int
    theta: float

    def __post_init__(self):
        if not 0 < self.v < 1:
            raise ValueError("v must lie in (0, 1)")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")


def _check_strip(spec: MultiplierSpec, lam):
    if np.any(np.abs(np.imag(lam)) >= spec.rho):
        raise StripError(f"|Im lambda| must stay below rho={spec.rho}")


def eval_m(spec: MultiplierSpec, lam):
    """(lam^2 + rho^2)^(-beta/2) exp(i (lam^2 + rho^2)^(alpha/2)) on |Im lam| < rho."""
    lam = np.asarray(lam, dtype=complex)
    _check_strip(spec, lam)
    z = lam * lam + spec.rho**2
    # Re z > 0 on the strip, so the principal logarithm is continuous there
    logz = np.log(z)
    out = np.exp(-spec.beta / 2 * logz + 1j * np.exp(spec.alpha / 2 * logz))
    return complex(out) if out.ndim == 0 else out


def symbol(spec: MultiplierSpec):
    """Vectorized callable ``lam -> m(lam)`` for real arguments."""
    return lambda lam: eval_m(spec, lam)


def default_contour_radius(spec: MultiplierSpec, lam) -> float:
    lam = complex(lam)
    room = 0.5 * (spec.rho - abs(lam.imag))
    x = abs(lam.real)
    rate = spec.alpha * x * (x * x + spec.rho**2) ** (spec.alpha / 2 - 1)
    return min(room, 1.0 / max(rate, 1.0), 0.5 * max(x, room))


def derivative(spec: MultiplierSpec, k: int, lam, contour_radius: float | None = None, points: int = 64):
    """k-th derivative of m by the trapezoid rule on a Cauchy circle.

    Returns ``(value, error_estimate)``; the estimate compares radii r and r/2.
    """
    if k < 0 or k > 10:
        raise ValueError("derivative order must lie in [0, 10]")
    lam = complex(lam)
    r = default_contour_radius(spec, lam) if contour_radius is None else float(contour_radius)
    if r <= 0 or abs(lam.imag) + r >= spec.rho:
        raise StripError(f"contour of radius {r} around {lam} leaves the strip")

    def cauchy(radius):
        theta = 2 * np.pi * np.arange(points) / points
        zs = lam + radius * np.exp(1j * theta)
        vals = eval_m(spec, zs)
        return math.factorial(k) / radius**k * np.mean(vals * np.exp(-1j * k * theta))

    full = cauchy(r)
    half = cauchy(r / 2)
    return complex(full), float(abs(full - half))


def japanese(lam):
    lam = np.asarray(lam)
    return np.sqrt(1 + np.abs(lam) ** 2)


@dataclass
class ClassRow:
    k: int
    theta: float
    sup_constant: float
    stable: bool


@dataclass
class ClassReport:
    passed: bool
    rows: list

    def to_json(self) -> str:
        return json.dumps({"pass": self.passed, "rows": [asdict(r) for r in self.rows]}, indent=2)


def class_membership(
    m,
    params: StripClassParams,
    rho: float,
    lambda_max: float = 1e3,
    tol: float = 0.05,
    n_lambda: int = 120,
    levels: int = 5,
) -> ClassReport:
    """Check the strip-class derivative bounds on a sampled strip.

    ``m`` is a :class:`MultiplierSpec` or a callable analytic on the strip
    ``|Im lam| <= v rho``.  For each ``k <= N`` the sup of
    ``|d^k m| <lam>^(k theta)`` over the grid up to ``lambda_max`` is
    compared with the sup up to ``lambda_max / 10``; the bound is stable when
    the two agree within ``tol``.
    """
    if isinstance(m, MultiplierSpec):
        spec = m
        deriv = lambda k, z: derivative(spec, k, z)[0]
    else:
        fn = m
        spec = None

        def deriv(k, z):
            room = 0.5 * (rho - abs(z.imag))
            r = min(room, 0.5)
            theta = 2 * np.pi * np.arange(64) / 64
            vals = fn(z + r * np.exp(1j * theta))
            return math.factorial(k) / r**k * np.mean(vals * np.exp(-1j * k * theta))

    reals = np.concatenate([[0.0], np.geomspace(1e-2, lambda_max, n_lambda)])
    imags = np.linspace(0.0, params.v * rho, levels)
    rows = []
    passed = True
    scale = None
    for k in range(params.N + 1):
        sups = np.zeros(reals.size)
        for i, x in enumerate(reals):
            best = 0.0
            for y in imags:
                z = complex(x, y)
                best = max(best, abs(deriv(k, z)) * float(japanese(z)) ** (k * params.theta))
            sups[i] = best
        if scale is None:
            scale = max(float(np.max(sups)), 1e-300)
        # contour roundoff grows like k!/r^k; values below it are zero
        floor = 1e-9 * scale * math.factorial(k) * 2.0**k
        sups = np.where(sups < floor, 0.0, sups)
        full = float(np.max(sups))
        early = float(np.max(sups[reals <= lambda_max / 10]))
        finite = math.isfinite(full)
        stable = finite and full <= early * (1 + tol)
        rows.append(ClassRow(k=k, theta=params.theta, sup_constant=full, stable=stable))
        passed = passed and stable
    return ClassReport(passed=passed, rows=rows)


# -- exponent bookkeeping ---------------------------------------------------


def _check_p(p: float):
    if not (p > 1 and math.isfinite(p)):
        raise ValueError(f"p must lie in (1, inf), got {p}")


def conjugate(p: float) -> float:
    _check_p(p)
    return p / (p - 1)


def s_p(p: float) -> float:
    """Kunze-Stein exponent 2 min(1/p, 1/p')."""
    _check_p(p)
    return 2 * min(1 / p, 1 - 1 / p)


def v_gamma(p: float, eta_ratio: float) -> float:
    """Strip width needed for L^p: s(p) |eta|/rho + |2/p - 1|."""
    _check_p(p)
    if not 0 <= eta_ratio <= 1:
        raise ValueError("eta_ratio must lie in [0, 1]")
    return s_p(p) * eta_ratio + abs(2 / p - 1)


def smoothness_order(n: int, theta: float) -> int:
    """Number of controlled derivatives, floor((n+1)/(2 theta)) + 1."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return int(math.floor((n + 1) / (2 * theta))) + 1


def b_prime(n: int) -> int:
    """Smallest integer >= (n-1)/2."""
    return -((1 - n) // 2)


def eta_ratio_from_bottom(lambda0: float, rho: float) -> float:
    """|eta_Gamma|/rho = sqrt(1 - lambda0/rho^2) for a bottom of spectrum lambda0."""
    if not 0 <= lambda0 <= rho**2:
        raise ValueError("bottom of spectrum must lie in [0, rho^2]")
    return math.sqrt(1 - lambda0 / rho**2)
