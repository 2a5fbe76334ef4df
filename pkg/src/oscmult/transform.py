"""Forward and inverse spherical transforms of radial functions.

Conventions: ``Hf(lam) = int_0^inf f(t) phi_lam(t) J(t) dt`` and

    f(t) = C_X int_0^inf Hf(lam) phi_lam(t) |c(lam)|^-2 dlam,

with ``J`` the radial density of :mod:`oscmult.geometry`.  With the
Jacobi c-function, ``J`` coincides with the Jacobi weight and
``C_X = 1/(2 pi)`` for every rank-one space;
:func:`calibrate_normalization` measures it by a round trip.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry import SpaceParams, cartan_density, log_cartan_density
from .special import ConvergenceError, jost_function, log_c_function, log_plancherel_density, phi_accuracy, phi_table

NORMALIZATION = 1 / (2 * math.pi)

DEFAULT_LAMBDA_MAX = 200.0
DEFAULT_T_MAX = 30.0
DEFAULT_TOL = 1e-8

_GL_ORDER = 20
_CHUNK = 2048


class TailTooLargeError(ConvergenceError):
    def __init__(self, tail: float, tol: float):
        super().__init__(f"estimated truncation tail {tail:.3e} exceeds tolerance {tol:.1e}")
        self.tail = tail


@dataclass
class RadialGrid:
    """Sampled radial function; ``weights`` are quadrature weights when known."""

    t_nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None
    error: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.t_nodes.shape != self.values.shape:
            raise ValueError("nodes and values differ in shape")
        if self.t_nodes.size and (np.any(np.diff(self.t_nodes) <= 0) or self.t_nodes[0] < 0):
            raise ValueError("radial nodes must be nonnegative and strictly increasing")

    @property
    def t_max(self) -> float:
        return float(self.t_nodes[-1])

    def __call__(self, t):
        return np.interp(t, self.t_nodes, self.values.real) + 1j * np.interp(
            t, self.t_nodes, self.values.imag
        )


@dataclass
class SpectralGrid:
    """Samples of an even symbol on ``lam >= 0``."""

    lambda_nodes: np.ndarray
    values: np.ndarray
    error: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambda_nodes = np.asarray(self.lambda_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.lambda_nodes.shape != self.values.shape:
            raise ValueError("nodes and values differ in shape")
        if self.lambda_nodes.size > 1 and np.any(np.diff(self.lambda_nodes) <= 0):
            raise ValueError("spectral nodes must be strictly increasing")

    @property
    def lambda_max(self) -> float:
        return float(self.lambda_nodes[-1])


# -- quadrature helpers -----------------------------------------------------


def gauss_panels(a: float, b: float, width: float, order: int = _GL_ORDER, breaks=()):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [a]
    for br in sorted(breaks):
        if a < br < b:
            edges.append(br)
    edges.append(b)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(1, int(math.ceil((hi - lo) / width - 1e-9)))
        panel_edges = np.linspace(lo, hi, count + 1)
        half = np.diff(panel_edges) / 2
        mid = (panel_edges[:-1] + panel_edges[1:]) / 2
        nodes.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def spectral_nodes(lambda_max: float, t_max: float, order: int = _GL_ORDER, phase_rate: float = 1.0):
    """Gauss panels in lam sized for integrands oscillating like exp(i lam (t + phase))."""
    width = min(1.0, 0.6 * order / (t_max + phase_rate + 1.0))
    return gauss_panels(0.0, lambda_max, width, order)


def _phi_chunks(sp, lams, ts, threads):
    chunks = [slice(i, min(i + _CHUNK, lams.size)) for i in range(0, lams.size, _CHUNK)]
    if threads and threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return chunks, list(pool.map(lambda s: phi_table(sp, lams[s], ts), chunks))
    return chunks, [phi_table(sp, lams[s], ts) for s in chunks]


def _weighted_phi_sums(sp, lams, coeffs, ts, threads=1):
    """sum_i coeffs[:, i] * phi_{lams[i]}(ts) with fixed chunk order.

    ``coeffs`` has shape (k, len(lams)); returns shape (k, len(ts)).
    """
    coeffs = np.atleast_2d(coeffs)
    ts = np.asarray(ts, dtype=float)
    total = np.zeros((coeffs.shape[0], ts.size), dtype=complex)
    chunks, tables = _phi_chunks(sp, lams, ts, threads)
    for s, table in zip(chunks, tables):
        total += coeffs[:, s] @ table
    return total


# -- forward transform ------------------------------------------------------


def radial_nodes(t_max: float, lambda_max: float, order: int = _GL_ORDER, breaks=()):
    width = min(0.5, 0.6 * order / (lambda_max + 1.0))
    return gauss_panels(0.0, t_max, width, order, breaks)


def sample_radial(f, t_max: float = DEFAULT_T_MAX, lambda_max: float = DEFAULT_LAMBDA_MAX, breaks=()) -> RadialGrid:
    """Sample a radial function on Gauss panels suitable for forward transforms."""
    t, w = radial_nodes(t_max, lambda_max, breaks=breaks)
    return RadialGrid(t, np.asarray(f(t), dtype=complex), weights=w, meta={"t_max": t_max})


def forward_transform(
    sp: SpaceParams,
    f,
    lambdas,
    t_max: float = DEFAULT_T_MAX,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
) -> SpectralGrid:
    """Spherical transform of a radial function at the requested ``lambdas``.

    ``f`` is a :class:`RadialGrid` (with quadrature weights, or else treated
    by the trapezoid rule) or a vectorized callable sampled on Gauss panels.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    lam_abs = np.abs(lambdas)
    if callable(f) and not isinstance(f, RadialGrid):
        grid = sample_radial(f, t_max, max(float(lam_abs.max(initial=0.0)), 1.0))
    else:
        grid = f
    t, vals = grid.t_nodes, grid.values
    if grid.weights is not None:
        w = grid.weights
    else:
        w = np.zeros_like(t)
        dt = np.diff(t)
        w[:-1] += dt / 2
        w[1:] += dt / 2

    # tail: |f phi_0 J| at the truncation radius over one unit of length
    edge = np.exp(log_cartan_density(sp, np.array([grid.t_max])))[0]
    phi0_edge = abs(phi_table(sp, [0.0], [grid.t_max])[0, 0])
    tail = float(abs(vals[-1]) * phi0_edge * edge)
    if tail > tol:
        raise TailTooLargeError(tail, tol)

    jw = w * cartan_density(sp, t)
    integrand = vals * jw
    # phi_table is indexed (lambda, t); contract over t
    out = np.empty(lam_abs.size, dtype=complex)
    order = np.argsort(lam_abs, kind="stable")
    sorted_lams = lam_abs[order]
    chunks, tables = _phi_chunks(sp, sorted_lams, t, threads)
    for s, table in zip(chunks, tables):
        out[order[s]] = table @ integrand
    return SpectralGrid(
        np.sort(lam_abs) if lam_abs.size else lam_abs,
        out[order],
        error=np.full(lam_abs.size, tail),
        meta={"t_max": grid.t_max, "tail": tail},
    )


# -- inverse transform ------------------------------------------------------


@dataclass
class InverseResult:
    grid: RadialGrid
    by_eps: dict
    error: np.ndarray


def _inverse_core(sp, lams, lam_weights, symbol_vals, ts, eps_list, threads):
    dens = np.exp(log_plancherel_density(sp, lams))
    base = NORMALIZATION * lam_weights * dens * symbol_vals
    coeffs = np.array([base * np.exp(-e * lams**2) for e in eps_list])
    return _weighted_phi_sums(sp, lams, coeffs, ts, threads)


def _truncation_bound(sp, m, lambda_max, eps, ts):
    """``C_X phi_0(t) int_Lambda^inf |m| |c|^-2 e^(-eps lam^2) dlam``, using ``|phi_lam| <= phi_0``."""

    def f(lam):
        x = np.array([lam])
        val = abs(complex(np.asarray(m(x), dtype=complex).ravel()[0]))
        return val * math.exp(float(log_plancherel_density(sp, x)[0]) - eps * lam * lam)

    tail = integrate.quad(f, lambda_max, math.inf, limit=200)[0]
    if not math.isfinite(tail):
        return np.full(ts.shape, math.inf)
    phi0 = np.abs(phi_table(sp, [0.0], ts)[0])
    return NORMALIZATION * tail * phi0


def _richardson(values, eps_list):
    """Eliminate the O(eps) and O(eps^2) terms from samples at eps, eps/2, eps/4."""
    v0, v1, v2 = values
    r1 = 2 * v1 - v0
    r2 = 2 * v2 - v1
    return (4 * r2 - r1) / 3, np.abs(r2 - r1) / 3 + np.abs(v2 - v1) * 1e-3


def inverse_transform(
    sp: SpaceParams,
    m,
    ts,
    regularizer_eps: float = 0.0,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    tol: float = DEFAULT_TOL,
    phase_rate: float = 1.0,
    threads: int = 1,
) -> InverseResult:
    """Inverse spherical transform of an even symbol ``m`` at radii ``ts``.

    With ``regularizer_eps > 0`` the symbol is damped by ``exp(-eps lam^2)``
    at eps, eps/2 and eps/4 and the results are Richardson-extrapolated to
    eps = 0.  ``phase_rate`` bounds ``|d arg m / d lam|`` and sets the panel
    width.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if regularizer_eps < 0:
        raise ValueError("regularizer_eps must be nonnegative")
    t_top = float(ts.max(initial=0.0))
    if regularizer_eps > 0:
        eps_list = [regularizer_eps, regularizer_eps / 2, regularizer_eps / 4]
        lambda_max = min(lambda_max, math.sqrt(40.0 / eps_list[-1]))
    else:
        eps_list = [0.0]
    lams, w = spectral_nodes(lambda_max, t_top, phase_rate=phase_rate)
    vals = np.asarray(m(lams), dtype=complex) * np.ones_like(lams)

    if regularizer_eps == 0:
        end = np.exp(log_plancherel_density(sp, np.array([lambda_max])))[0]
        edge = float(abs(vals[-1]) * end * math.exp(-eps_list[-1] * lambda_max**2))
        if edge > tol:
            raise ConvergenceError(
                f"symbol times Plancherel density is {edge:.3e} at lambda_max={lambda_max}; "
                "use regularizer_eps > 0 or a larger lambda_max"
            )

    # coarse rule on the same panels for the error estimate
    lams_c, w_c = spectral_nodes(lambda_max, t_top, order=_GL_ORDER // 2, phase_rate=phase_rate)
    vals_c = np.asarray(m(lams_c), dtype=complex) * np.ones_like(lams_c)

    fine = _inverse_core(sp, lams, w, vals, ts, eps_list, threads)
    coarse = _inverse_core(sp, lams_c, w_c, vals_c, ts, eps_list, threads)
    quad_err = np.abs(fine - coarse).max(axis=0)

    quad_err = quad_err + _truncation_bound(sp, m, lambda_max, eps_list[-1], ts)
    # rounding floor of the weighted sum (random-walk growth in the term count),
    # with |phi_lam(t)| <= phi_0(t)
    scale = NORMALIZATION * float(np.sum(np.abs(w * vals) * np.exp(log_plancherel_density(sp, lams))))
    floor = 4 * np.finfo(float).eps * math.sqrt(lams.size) * scale
    floor += phi_accuracy(sp, float(lams.max()), max(t_top, 0.5)) * scale
    quad_err = quad_err + floor * np.abs(phi_table(sp, [0.0], ts)[0])

    by_eps = {e: fine[i] for i, e in enumerate(eps_list)}
    if regularizer_eps > 0:
        value, extrap_err = _richardson(fine, eps_list)
        error = quad_err + extrap_err
    else:
        value = fine[0]
        error = quad_err
    order = np.argsort(ts, kind="stable")
    if np.any(np.diff(ts[order]) == 0):
        raise ValueError("radii must be distinct")
    grid = RadialGrid(
        ts[order],
        value[order],
        error=error[order],
        meta={"lambda_max": lambda_max, "eps": eps_list},
    )
    return InverseResult(grid=grid, by_eps={e: v[order] for e, v in by_eps.items()}, error=error[order])


def _shifted_sums(sp, xs, weights, symbol_vals, shift, ts, eps_list):
    lam = xs + 1j * shift
    base = NORMALIZATION * weights * symbol_vals * np.exp(-log_c_function(sp, -lam))
    damp = np.array([np.exp(-e * lam * lam) for e in eps_list])
    out = np.empty((len(eps_list), ts.size), dtype=complex)
    floor = np.empty(ts.size)
    for i, t in enumerate(ts):
        terms = base * jost_function(sp, lam, t)
        out[:, i] = damp @ terms
        floor[i] = 1e-15 * float(np.sum(np.abs(terms)))
    return out, floor


def inverse_transform_shifted(
    sp: SpaceParams,
    m,
    ts,
    shift: float = 0.9,
    regularizer_eps: float = 0.0,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    phase_rate: float = 1.0,
) -> InverseResult:
    """Inverse transform at large radii by integrating along ``Im lam = shift * rho``.

    Writing ``phi_lam = c(lam) Phi_lam + c(-lam) Phi_-lam`` turns the
    inversion into ``C int_R m(lam) Phi_lam(t) / c(-lam) dlam``.  Both
    ``1/c(-lam)`` and ``Phi_lam`` are analytic in the upper half plane, so for
    a symbol analytic on ``|Im lam| < rho`` the line can be lifted; the
    integrand then carries ``exp(-(1 + shift) rho t)`` and the exponential
    cancellation of the real-line integral disappears.  ``m`` must accept
    complex arguments.  Regularization and extrapolation follow
    :func:`inverse_transform`.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if not 0 < shift < 1:
        raise ValueError("shift must lie in (0, 1)")
    if np.any(ts <= 0):
        raise ValueError("the lifted contour needs t > 0")
    if regularizer_eps < 0:
        raise ValueError("regularizer_eps must be nonnegative")
    if regularizer_eps > 0:
        eps_list = [regularizer_eps, regularizer_eps / 2, regularizer_eps / 4]
        lambda_max = min(lambda_max, math.sqrt(40.0 / eps_list[-1]))
    else:
        eps_list = [0.0]
    gap = (1 - shift) * sp.rho
    width = min(1.0, 0.6 * _GL_ORDER / (float(ts.max()) + phase_rate + 1.0), gap)
    y = shift * sp.rho

    def rule(order):
        xs, w = gauss_panels(0.0, lambda_max, width, order)
        xs = np.concatenate([-xs[::-1], xs])
        w = np.concatenate([w[::-1], w])
        return xs, w, np.asarray(m(xs + 1j * y), dtype=complex) * np.ones(xs.size)

    xs, w, vals = rule(_GL_ORDER)
    xs_c, w_c, vals_c = rule(_GL_ORDER // 2)
    fine, floor = _shifted_sums(sp, xs, w, vals, y, ts, eps_list)
    coarse, _ = _shifted_sums(sp, xs_c, w_c, vals_c, y, ts, eps_list)
    quad_err = np.abs(fine - coarse).max(axis=0) + floor
    if regularizer_eps > 0:
        value, extrap_err = _richardson(fine, eps_list)
        error = quad_err + extrap_err
    else:
        value = fine[0]
        error = quad_err
    order = np.argsort(ts, kind="stable")
    grid = RadialGrid(
        ts[order],
        value[order],
        error=error[order],
        meta={"lambda_max": lambda_max, "eps": eps_list, "shift": shift},
    )
    return InverseResult(grid=grid, by_eps={e: fine[i][order] for i, e in enumerate(eps_list)}, error=error[order])


def roundtrip(sp: SpaceParams, f, ts, lambda_max: float = 40.0, t_max: float = 12.0, threads: int = 1):
    """Apply forward then inverse transforms to ``f`` and return samples at ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lams, w = spectral_nodes(lambda_max, float(ts.max()), phase_rate=0.0)
    grid = sample_radial(f, t_max, lambda_max)
    spec = forward_transform(sp, grid, lams, t_max=t_max, threads=threads)
    back = _inverse_core(sp, lams, w, spec.values, ts, [0.0], threads)[0]
    return back


def _bump(radius):
    def f(t):
        t = np.asarray(t, dtype=float)
        x = np.clip(t / radius, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            out = np.exp(1.0 - 1.0 / (1.0 - x * x))
        return np.where(t < radius, out, 0.0)

    return f


@dataclass(frozen=True)
class RadialTestFunction:
    fn: object
    t_max: float
    lambda_max: float


# smooth even radial functions: entire ones converge fast in lam, bumps slowly
RADIAL_TEST_FUNCTIONS = {
    "gauss": RadialTestFunction(lambda t: np.exp(-np.asarray(t) ** 2), 12.0, 40.0),
    "gauss_poly": RadialTestFunction(lambda t: (1 + np.asarray(t) ** 2) * np.exp(-np.asarray(t) ** 2 / 2), 14.0, 40.0),
    "gauss_cos": RadialTestFunction(lambda t: np.exp(-np.asarray(t) ** 2) * np.cos(2 * np.asarray(t)), 12.0, 40.0),
    "bump2": RadialTestFunction(_bump(2.0), 2.0, 200.0),
    "bump3": RadialTestFunction(_bump(3.0), 3.0, 200.0),
}


def roundtrip_error(sp: SpaceParams, name: str, ts=None, threads: int = 1) -> float:
    """Relative sup error of the round trip of a registered test function."""
    tf = RADIAL_TEST_FUNCTIONS[name]
    if ts is None:
        ts = np.linspace(0.0, min(tf.t_max, 4.0), 41)
    ts = np.asarray(ts, dtype=float)
    back = roundtrip(sp, tf.fn, ts, lambda_max=tf.lambda_max, t_max=tf.t_max, threads=threads)
    ref = tf.fn(ts)
    return float(np.max(np.abs(back - ref)) / np.max(np.abs(ref)))


def calibrate_normalization(sp: SpaceParams) -> float:
    """Measure C_X from the round trip of exp(-t^2) at the origin."""
    ts = np.array([0.0, 0.5])
    back = roundtrip(sp, lambda t: np.exp(-t * t), ts) / NORMALIZATION
    return float(np.real(1.0 / back[0]))


# -- CSV interchange --------------------------------------------------------


def write_grid_csv(path, nodes, values, header_note: str = "", node_name: str = "node"):
    with open(path, "w", newline="") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow([node_name, "re", "im"])
        for x, v in zip(nodes, values):
            writer.writerow([repr(float(x)), repr(float(np.real(v))), repr(float(np.imag(v)))])


def read_grid_csv(path):
    nodes, values = [], []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    for row in rows[1:]:
        nodes.append(float(row[0]))
        values.append(complex(float(row[1]), float(row[2])))
    return np.array(nodes), np.array(values)


def radial_to_csv(grid: RadialGrid, path, header_note: str = ""):
    write_grid_csv(path, grid.t_nodes, grid.values, header_note, node_name="t")


def radial_from_csv(path) -> RadialGrid:
    t, v = read_grid_csv(path)
    return RadialGrid(t, v)


def spectral_to_csv(grid: SpectralGrid, path, header_note: str = ""):
    write_grid_csv(path, grid.lambda_nodes, grid.values, header_note, node_name="lambda")


def spectral_from_csv(path) -> SpectralGrid:
    lam, v = read_grid_csv(path)
    return SpectralGrid(lam, v)
