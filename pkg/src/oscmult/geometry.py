"""Rank-one symmetric spaces: root data, radial density, and model distances.

The radial variable ``t`` is normalized so that it equals Riemannian
distance from the origin; the short root has unit length.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Family(str, enum.Enum):
    RealHyp = "RealHyp"
    ComplexHyp = "ComplexHyp"
    QuatHyp = "QuatHyp"
    OctPlane = "OctPlane"


@dataclass(frozen=True)
class SpaceParams:
    family: Family
    k: int | None
    n: int
    m1: int
    m2: int
    rho: float
    jacobi_a: float
    jacobi_b: float

    @property
    def label(self) -> str:
        if self.family is Family.OctPlane:
            return "H2(O)"
        tag = {"RealHyp": "R", "ComplexHyp": "C", "QuatHyp": "H"}[self.family.value]
        return f"H{self.k}({tag})"

    def to_block(self) -> str:
        lines = [f"family = {self.family.value}"]
        if self.k is not None:
            lines.append(f"k = {self.k}")
        return "\n".join(lines)


def _multiplicities(family: Family, k: int | None) -> tuple[int, int]:
    if family is Family.OctPlane:
        return 8, 7
    if k is None or k < 2:
        raise ValueError(f"{family.value} requires an integer k >= 2, got {k!r}")
    if family is Family.RealHyp:
        return k - 1, 0
    if family is Family.ComplexHyp:
        return 2 * k - 2, 1
    if family is Family.QuatHyp:
        return 4 * k - 4, 3
    raise ValueError(f"unsupported family {family!r}")


def make_space(family, k: int | None = None) -> SpaceParams:
    """Build the descriptor of a rank-one space from its family and rank index.

    ``k`` is the hyperbolic dimension over the base field (``H^k``); the
    octonionic plane takes no ``k``.
    """
    try:
        family = Family(family)
    except ValueError:
        raise ValueError(f"unknown family {family!r}") from None
    if family is Family.OctPlane:
        if k not in (None, 2):
            raise ValueError("OctPlane exists only as the plane (k = 2)")
        k = None
    elif k is not None and int(k) != k:
        raise ValueError(f"k must be an integer, got {k!r}")
    m1, m2 = _multiplicities(family, None if k is None else int(k))
    return SpaceParams(
        family=family,
        k=None if k is None else int(k),
        n=m1 + m2 + 1,
        m1=m1,
        m2=m2,
        rho=(m1 + 2 * m2) / 2,
        jacobi_a=(m1 + m2 - 1) / 2,
        jacobi_b=(m2 - 1) / 2,
    )


def parse_space_block(text: str) -> SpaceParams:
    """Parse ``key = value`` lines (family, k) into a space descriptor."""
    fields = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed line {raw!r}")
        fields[key.strip()] = value.strip()
    if "family" not in fields:
        raise ValueError("space block needs a 'family' entry")
    k = int(fields["k"]) if "k" in fields else None
    return make_space(fields["family"], k)


def cartan_density(sp: SpaceParams, t):
    """Radial density ``J(t) = (2 sinh t)^m1 (2 sinh 2t)^m2``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("radial coordinate must be nonnegative")
    return (2 * np.sinh(t)) ** sp.m1 * (2 * np.sinh(2 * t)) ** sp.m2


def log_cartan_density(sp: SpaceParams, t):
    """``log J(t)`` without overflow for large ``t``."""
    t = np.asarray(t, dtype=float)
    return sp.m1 * _log_2sinh(t) + sp.m2 * _log_2sinh(2 * t)


def _log_2sinh(x):
    # log(2 sinh x) = x + log(1 - e^{-2x})
    with np.errstate(divide="ignore"):
        return x + np.log(-np.expm1(-2 * x))


# -- upper half-space models -------------------------------------------------


@dataclass(frozen=True)
class ModelPoint:
    """Point of the upper half-plane (x, h) or upper half-space (x1, x2, h)."""

    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) not in (2, 3):
            raise ValueError("model points live in H^2 or H^3")
        if not coords[-1] > 0:
            raise ValueError(f"height coordinate must be positive, got {coords[-1]}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def height(self) -> float:
        return self.coords[-1]


def hyperbolic_distance(x: ModelPoint, y: ModelPoint) -> float:
    if x.dim != y.dim:
        raise ValueError("points belong to different models")
    return float(hyperbolic_distance_array(np.array(x.coords), np.array(y.coords)))


def hyperbolic_distance_array(x, y):
    """Vectorized distance; last axis holds coordinates, last entry the height."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hx, hy = x[..., -1], y[..., -1]
    if np.any(hx <= 0) or np.any(hy <= 0):
        raise ValueError("height coordinates must be positive")
    sq = np.sum((x - y) ** 2, axis=-1)
    # arccosh(1 + u) = 2 asinh(sqrt(u/2)) keeps precision for close points
    u = sq / (2 * hx * hy)
    return 2 * np.arcsinh(np.sqrt(u / 2))
