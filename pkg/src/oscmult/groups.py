"""Discrete isometry groups of H^2 and H^3 and their orbit sums.

Elements are 2x2 matrices: real ones act on the upper half-plane by
Moebius maps, complex ones on the upper half-space through

    (z, h) -> ( ((a z + b) conj(c z + d) + a conj(c) h^2) / D,  h / D ),
    D = |c z + d|^2 + |c|^2 h^2.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .geometry import Family, ModelPoint, SpaceParams, hyperbolic_distance_array
from .kernels import WaveKernelSpec, wave_kernel

MAX_WORD_LENGTH = 18
DEFAULT_MAX_WORDS = 5_000_000
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class GroupKind(str, enum.Enum):
    Cyclic = "Cyclic"
    Schottky = "Schottky"
    FreeFuchsian = "FreeFuchsian"


class GroupValidationError(ValueError):
    pass


class WordCountError(ValueError):
    pass


class NonDiscreteWarning(UserWarning):
    pass


class TailUnboundedError(ValueError):
    pass


def _unimodular(m):
    m = np.array(m, dtype=complex).reshape(2, 2)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-14:
        raise GroupValidationError("generator matrix is singular")
    return m / np.sqrt(det)


def isometric_circle(m):
    """(center, radius) of ``|c z + d| = 1``; None when ``c = 0``."""
    c, d = m[1, 0], m[1, 1]
    if abs(c) < 1e-14:
        return None
    return -d / c, 1.0 / abs(c)


def schottky_pairing(c1: complex, c2: complex, r: float):
    """Matrix ``z -> c2 - r^2 / (z - c1)`` pairing the circles of radius r at c1 and c2."""
    return np.array([[c2, -r * r - c1 * c2], [1.0, -c1]], dtype=complex) / r


def loxodromic(length: float, rotation: float = 0.0):
    """Translation of ``length`` along the vertical axis through 0 (twist ``rotation`` in H^3)."""
    k = math.exp(length / 2) * np.exp(0.5j * rotation)
    return np.array([[k, 0], [0, 1 / k]], dtype=complex)


@dataclass
class GroupModel:
    kind: GroupKind
    generators: list
    model_dim: int

    def __post_init__(self):
        self.kind = GroupKind(self.kind)
        if self.model_dim not in (2, 3):
            raise GroupValidationError("model_dim must be 2 or 3")
        if not self.generators:
            raise GroupValidationError("at least one generator is needed")
        self.generators = [_unimodular(g) for g in self.generators]
        if self.kind is GroupKind.Cyclic and len(self.generators) != 1:
            raise GroupValidationError("a cyclic group has exactly one generator")
        for i, g in enumerate(self.generators):
            if self.model_dim == 2 and np.max(np.abs(g.imag)) > 1e-12:
                raise GroupValidationError(f"generator {i} is not real; use model_dim = 3")
            tr = g[0, 0] + g[1, 1]
            if self.model_dim == 2 or abs(tr.imag) < 1e-12:
                if abs(tr.real) < 2 - 1e-12:
                    raise GroupValidationError(f"generator {i} is elliptic (|trace| = {abs(tr):.6g} < 2)")
            elif np.allclose(np.eye(2), g) or np.allclose(-np.eye(2), g):
                raise GroupValidationError(f"generator {i} is the identity")
        if self.kind is GroupKind.Schottky:
            self._check_schottky()

    def _check_schottky(self):
        circles = []
        for i, g in enumerate(self.generators):
            for m in (g, np.linalg.inv(g)):
                ic = isometric_circle(m)
                if ic is None:
                    raise GroupValidationError(f"generator {i} fixes infinity; no isometric circle")
                circles.append(ic)
        for i in range(len(circles)):
            for j in range(i + 1, len(circles)):
                (c1, r1), (c2, r2) = circles[i], circles[j]
                if abs(c1 - c2) <= r1 + r2:
                    raise GroupValidationError("isometric circles are not pairwise disjoint")

    @property
    def rank(self) -> int:
        return len(self.generators)

    def letters(self):
        """Matrices indexed by letter: 2i is generator i, 2i+1 its inverse."""
        out = []
        for g in self.generators:
            out.append(g)
            out.append(np.linalg.inv(g))
        return np.array(out)

    def word_string(self, letters) -> str:
        if len(letters) == 0:
            return "e"
        return "".join(
            _LETTERS[k // 2] if k % 2 == 0 else _LETTERS[k // 2].upper() for k in letters
        )

    def word_count(self, L: int) -> int:
        r = 2 * self.rank
        if r == 2:
            return 1 + 2 * L
        return 1 + r * ((r - 1) ** L - 1) // (r - 2)


def act(mats, point: ModelPoint):
    """Images of ``point`` under a stack of matrices, as coordinate arrays."""
    mats = np.asarray(mats)
    a, b, c, d = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 0], mats[..., 1, 1]
    if point.dim == 2:
        z = complex(point.coords[0], point.coords[1])
        w = (a * z + b) / (c * z + d)
        # the height from Im w loses everything near the boundary; use Im z / |cz+d|^2
        return np.stack([w.real, z.imag / np.abs(c * z + d) ** 2], axis=-1)
    z = complex(point.coords[0], point.coords[1])
    h = point.coords[2]
    den = np.abs(c * z + d) ** 2 + np.abs(c) ** 2 * h * h
    num = (a * z + b) * np.conj(c * z + d) + a * np.conj(c) * h * h
    w = num / den
    return np.stack([w.real, w.imag, h / den], axis=-1)


@dataclass
class OrbitEnumeration:
    group: GroupModel
    x: ModelPoint
    y: ModelPoint
    L: int
    lengths: np.ndarray
    distances: np.ndarray
    letter_levels: list
    next_level_min: float

    @property
    def complete_radius(self) -> float:
        """Every orbit point closer than this is enumerated."""
        return self.next_level_min

    def counts(self, radii):
        """Orbit counting function N(R) at the given radii."""
        d = np.sort(self.distances)
        return np.searchsorted(d, np.asarray(radii, dtype=float), side="right")

    def words(self):
        """Word labels in enumeration order: a, A = a^-1, b, B, ..."""
        return [self.group.word_string(w) for level in self.letter_levels for w in level]

    def to_csv(self, path, header_note: str = "poinc orbit; distance in units of the model metric"):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {header_note}\n")
            writer = csv.writer(fh)
            writer.writerow(["word", "length", "distance"])
            for w, n, d in zip(self.words(), self.lengths, self.distances):
                writer.writerow([w, int(n), repr(float(d))])


def enumerate_orbit(
    g: GroupModel,
    x: ModelPoint,
    y: ModelPoint,
    L: int,
    max_words: int = DEFAULT_MAX_WORDS,
) -> OrbitEnumeration:
    """All reduced words up to length ``L`` with ``d(x, w y)``, level by level.

    One more level is generated (distances only) to find the radius below
    which the enumeration is complete.
    """
    if x.dim != g.model_dim or y.dim != g.model_dim:
        raise ValueError("points and group live in different models")
    if L < 0:
        raise ValueError("L must be nonnegative")
    if (L > MAX_WORD_LENGTH and g.rank > 1) or g.word_count(L + 1) > max_words:
        raise WordCountError(
            f"{g.word_count(L)} reduced words at L={L} exceed the guard "
            f"(L <= {MAX_WORD_LENGTH}, at most {max_words} words)"
        )
    gens = g.letters()
    xa = np.array(x.coords)
    mats = np.eye(2, dtype=complex)[None]
    last = np.array([-1])
    words = [np.zeros((1, 0), dtype=np.int8)]
    lengths = [np.zeros(1, dtype=int)]
    dists = [hyperbolic_distance_array(xa, act(mats, y))]
    next_min = math.inf
    for level in range(1, L + 2):
        new_m, new_last, new_words = [], [], []
        for k in range(len(gens)):
            keep = last != (k ^ 1)
            if not np.any(keep):
                continue
            new_m.append(mats[keep] @ gens[k])
            new_last.append(np.full(np.count_nonzero(keep), k))
            if level <= L:
                prev = words[-1][keep]
                new_words.append(np.hstack([prev, np.full((prev.shape[0], 1), k, dtype=np.int8)]))
        mats = np.concatenate(new_m)
        last = np.concatenate(new_last)
        d = hyperbolic_distance_array(xa, act(mats, y))
        if level > L:
            next_min = float(d.min())
            break
        words.append(np.concatenate(new_words))
        lengths.append(np.full(d.size, level))
        dists.append(d)
    lengths = np.concatenate(lengths)
    distances = np.concatenate(dists)
    _discreteness_alarm(g, y, words, min(L, 3))
    return OrbitEnumeration(g, x, y, L, lengths, distances, words, next_min)


def _discreteness_alarm(g, y, words, depth):
    gens = g.letters()
    pts = []
    for level in words[: depth + 1]:
        for w in level:
            m = np.eye(2, dtype=complex)
            for k in w:
                m = m @ gens[k]
            pts.append(act(m[None], y)[0])
    pts = np.array(pts)
    if len(pts) < 2:
        return
    dd = hyperbolic_distance_array(pts[:, None, :], pts[None, :, :])
    np.fill_diagonal(dd, np.inf)
    if dd.min() < 1e-9:
        warnings.warn(
            "two distinct short words move the basepoint to the same place; "
            "the generators may not define a discrete free group",
            NonDiscreteWarning,
            stacklevel=3,
        )


# -- Poincare series and critical exponent -----------------------------------


def poincare_partial(orbit: OrbitEnumeration, s: float):
    """Partial Poincare sum over the enumerated words and the share of the last level."""
    if not s > 0:
        raise ValueError("s must be positive")
    terms = np.exp(-s * orbit.distances)
    # sum in increasing size for reproducible rounding
    total = float(np.sum(np.sort(terms)))
    last = float(np.sum(np.sort(terms[orbit.lengths == orbit.L])))
    return {"partial_sum": total, "last_level": last}


@dataclass
class DeltaEstimate:
    delta_hat: float
    ci: float
    radii: np.ndarray
    counts: np.ndarray
    truncation_warning: bool


class InsufficientDataError(ValueError):
    pass


def critical_exponent_estimate(orbit: OrbitEnumeration, n_radii: int = 24) -> DeltaEstimate:
    """Slope of ``log N(R)`` against R over the upper half of the complete range.

    The CI is two standard errors of the regression slope.
    """
    r_top = orbit.complete_radius
    if not math.isfinite(r_top):
        r_top = float(orbit.distances.max())
    positive = orbit.distances[orbit.distances > 0]
    r_bottom = max(r_top / 2, float(positive.min()) if positive.size else 0.0)
    radii = np.linspace(r_bottom, r_top, n_radii)
    counts = orbit.counts(radii)
    if np.unique(counts).size < 5:
        raise InsufficientDataError("fewer than 5 distinct orbit counts in the complete range")
    A = np.column_stack([np.ones_like(radii), radii])
    y = np.log(counts)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(radii.size - 2, 1)
    se = math.sqrt(s2 * np.linalg.inv(A.T @ A)[1, 1])
    # words of maximal length lying inside the complete radius point to truncation bias
    trunc = bool(np.any((orbit.lengths == orbit.L) & (orbit.distances <= r_top)))
    return DeltaEstimate(max(float(coef[1]), 0.0), 2 * se, radii, counts, trunc)


@dataclass
class GroupClassification:
    delta_hat: float
    ci: float
    two_rho: float
    delta_lt_2rho: bool | None
    ct_flag: bool
    divergence_note: str = ""


def classify(
    g: GroupModel,
    orbit: OrbitEnumeration,
    ct_assertion: bool | None = None,
    sp: SpaceParams | None = None,
    estimate: DeltaEstimate | None = None,
) -> GroupClassification:
    """Compare the critical exponent with 2 rho; (CT) is recorded, never inferred."""
    est = estimate or critical_exponent_estimate(orbit)
    two_rho = 2 * sp.rho if sp is not None else float(g.model_dim - 1)
    if est.delta_hat + est.ci < two_rho:
        lt = True
    elif est.delta_hat - est.ci >= two_rho:
        lt = False
    else:
        lt = None
    note = ""
    if sp is not None and sp.family in (Family.QuatHyp, Family.OctPlane):
        note = "lattices in this family are of divergence type (informational)"
    return GroupClassification(est.delta_hat, est.ci, two_rho, lt, bool(ct_assertion), note)


# -- quotient kernel ---------------------------------------------------------


def quotient_wave_kernel(
    g: GroupModel,
    sp: SpaceParams,
    sigma: float,
    x: ModelPoint,
    y: ModelPoint,
    L: int,
    classification: GroupClassification | None = None,
    far_from: float = 3.0,
):
    """``sum_w q_sigma(d(x, w y))`` over reduced words up to length L.

    The tail beyond the complete radius R uses the decay envelope
    ``2 c (t+1)^(-3/2) e^(-2 rho t)`` (c fitted near R) against an orbit
    count ``N(R) e^(delta_up (t - R))`` with ``delta_up`` the estimate plus
    its CI.  Needs ``delta < 2 rho`` or an asserted (CT).
    """
    if sp.n != g.model_dim:
        raise ValueError(f"space {sp.label} does not match a group on H^{g.model_dim}")
    orbit = enumerate_orbit(g, x, y, L)
    R = orbit.complete_radius if math.isfinite(orbit.complete_radius) else float(orbit.distances.max())
    try:
        est = critical_exponent_estimate(orbit)
        delta_up = est.delta_hat + est.ci
    except InsufficientDataError:
        if g.rank > 1:
            raise
        delta_up = 0.0
    # polynomial (cyclic) growth N(t)/N(R) <= t/R <= e^((t-R)/R)
    delta_up = max(delta_up, 2.0 / R)
    cls = classification
    ct = bool(cls and cls.ct_flag)
    if delta_up >= 2 * sp.rho and not ct:
        raise TailUnboundedError(
            f"orbit growth {delta_up:.3f} reaches 2 rho = {2 * sp.rho}; the tail cannot be bounded"
        )
    dist = orbit.distances
    uniq, inverse = np.unique(np.round(dist, 12), return_inverse=True)
    fit_t = np.linspace(max(R - 3.0, 2.0), max(R, 2.5), 7)
    ts = np.unique(np.concatenate([uniq, fit_t]))
    res = wave_kernel(WaveKernelSpec(sp, sigma), ts, far_from=far_from)
    q_of = dict(zip(ts.tolist(), res.grid.values))
    err_of = dict(zip(ts.tolist(), res.error))
    vals = np.array([q_of[u] for u in uniq.tolist()])[inverse]
    errs = np.array([err_of[u] for u in uniq.tolist()])[inverse]
    order = np.argsort(-np.abs(vals), kind="stable")
    value = complex(np.sum(vals[order[::-1]]))
    qfit = np.array([abs(q_of[t]) for t in fit_t.tolist()])
    c = float(np.max(qfit * (fit_t + 1) ** 1.5 * np.exp(2 * sp.rho * fit_t)))
    n_r = float(orbit.counts([R])[0])
    rate = 2 * sp.rho - delta_up
    if rate <= 0:
        tail = math.inf
    else:
        # sum_{d > R} f(d) = int_R^inf -f'(t) M(t) dt with M(t) <= N(R) e^(delta_up (t - R))
        def integrand(t):
            # exponents combined so large t underflows instead of overflowing
            f = 2 * c * (t + 1) ** -1.5 * math.exp(-2 * sp.rho * R - rate * (t - R))
            return f * (2 * sp.rho + 1.5 / (t + 1)) * n_r

        tail = integrate.quad(integrand, R, math.inf, limit=200)[0]
    return {
        "value": value,
        "tail_bound": float(tail),
        "quadrature_error": float(np.sum(errs)),
        "complete_radius": R,
        "terms": int(dist.size),
        "conditional_on_ct": ct and delta_up >= 2 * sp.rho,
    }


# -- norm-bound integral -----------------------------------------------------


def theorem3_norm_bound(n: int, p: float, beta: complex, k_p: float = 1.0):
    """Evaluate the sigma-integral bounding the wave-subordinated operator on L^p.

    ``int_0^1 s^(Re beta - 1) s^((1-n)(1/2-1/p)) ds + int_1^inf s^(Re beta - 1) e^(-k_p s) ds``.
    Finiteness is decided by the endpoint exponent before any quadrature.
    """
    if not (p > 1 and math.isfinite(p)):
        raise ValueError("p must lie in (1, inf)")
    if not k_p > 0:
        raise ValueError("k_p must be positive")
    if p < 2:
        p = p / (p - 1)
    b = complex(beta).real
    c = b - (n - 1) * (0.5 - 1 / p)
    second = integrate.quad(lambda s: s ** (b - 1) * math.exp(-k_p * s), 1, math.inf)[0]
    if c <= 0:
        return {"finite": False, "first": math.inf, "second": second, "value": math.inf, "exponent": c}
    # algebraic endpoint weight s^(c-1) handled by QAWS
    first = integrate.quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(c - 1, 0))[0]
    return {"finite": True, "first": first, "second": second, "value": first + second, "exponent": c}


# -- config ------------------------------------------------------------------


def _parse_matrix(text: str):
    vals = [complex(tok.replace("i", "j")) for tok in text.split()]
    if len(vals) != 4:
        raise ValueError(f"generator needs 4 entries (row-major), got {len(vals)}")
    return np.array(vals).reshape(2, 2)


def group_from_block(block: dict) -> tuple:
    """Build (GroupModel, L) from ``kind``, ``model_dim``, ``generators`` and ``L`` entries.

    Generators are row-major entries separated by ``;``.
    """
    for key in ("kind", "generators"):
        if key not in block:
            raise ValueError(f"group block needs '{key}'")
    mats = [_parse_matrix(chunk) for chunk in block["generators"].split(";") if chunk.strip()]
    model_dim = int(block.get("model_dim", 2))
    if model_dim == 2:
        mats = [m.real for m in mats]
    g = GroupModel(block["kind"], mats, model_dim)
    return g, int(block.get("L", 8))
