"""Numerically hardened primitives of the Lorentz (hyperboloid) model.

Points live on the upper sheet ``{x in R^{d+1} : <x,x>_L = -1, x_0 > 0}``
of the two-sheeted hyperboloid under the Minkowski bilinear form

    <x,y>_L = -x_0 y_0 + sum_{i>=1} x_i y_i.

All maps here are exact closed forms for curvature -1; the only departures
are explicitly labelled numerical guards (arcosh domain clamps, series
fallbacks near coincident points, and re-projection onto the manifold to
stop constraint drift in deep compositions).  Everything is plain float64
numpy and operates on single points; batched, differentiable variants live
in :mod:`rhgcn.manifold_ops`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

__all__ = [
    "Tolerances",
    "DEFAULT_TOLS",
    "LorentzPoint",
    "TangentVector",
    "lorentz_inner",
    "lorentz_norm",
    "canonical_origin",
    "project_to_manifold",
    "project_to_tangent",
    "exp_map",
    "log_map",
    "lorentz_distance",
    "parallel_transport",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical guards for the Lorentz primitives.

    manifold_eps: allowed |<x,x>_L + 1| when validating points.
    arcosh_clamp: arcosh arguments are clamped to >= 1 + arcosh_clamp
        wherever the derivative matters (log map); the distance uses a
        plain >= 1 clamp so d(x, x) = 0 exactly.
    taylor_cutoff: norm / separation below which first-order fallbacks
        replace the singular closed forms.
    """

    manifold_eps: float = 1e-6
    arcosh_clamp: float = 1e-12
    taylor_cutoff: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("manifold_eps", "arcosh_clamp", "taylor_cutoff"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"Tolerances.{name} must be strictly positive")


DEFAULT_TOLS = Tolerances()

# Geodesic length cap for the exponential map: cosh overflows float64 near
# 710, and points beyond ~350 already have ambient coordinates ~1e152 whose
# pairwise inner products approach the overflow limit.  Shots longer than
# the cap saturate at the cap, keeping every operation finite for tangent
# inputs with coordinates up to 1e4.
EXP_LENGTH_CAP = 350.0


def _as_vec(x) -> np.ndarray:
    coords = getattr(x, "coords", x)
    arr = np.asarray(coords, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-d ambient vector, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise DimensionError("ambient vectors need length >= 2 (time + spatial part)")
    return arr


@dataclass(frozen=True)
class LorentzPoint:
    """A point on the hyperboloid, stored in ambient (d+1) coordinates."""

    coords: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", _as_vec(self.coords))

    @property
    def dim(self) -> int:
        """Intrinsic dimension d (ambient length minus one)."""
        return self.coords.shape[0] - 1

    def validate(self, tol: Tolerances = DEFAULT_TOLS) -> None:
        """Raise if the manifold constraint or sheet condition is violated."""
        q = lorentz_inner(self.coords, self.coords)
        if abs(q + 1.0) > tol.manifold_eps:
            raise NumericError(f"<x,x>_L = {q!r}, expected -1 within {tol.manifold_eps}")
        if self.coords[0] <= 0.0:
            raise NumericError(f"time coordinate {self.coords[0]!r} is not positive")


@dataclass(frozen=True)
class TangentVector:
    """An ambient vector tangent to the hyperboloid at ``base``."""

    coords: np.ndarray
    base: LorentzPoint

    def __post_init__(self) -> None:
        coords = _as_vec(self.coords)
        if coords.shape != self.base.coords.shape:
            raise DimensionError(
                f"tangent length {coords.shape[0]} != base length {self.base.coords.shape[0]}"
            )
        object.__setattr__(self, "coords", coords)

    def validate(self, tol: Tolerances = DEFAULT_TOLS) -> None:
        """Raise unless Lorentz-orthogonal to the base and non-timelike."""
        ip = lorentz_inner(self.base.coords, self.coords)
        if abs(ip) > tol.manifold_eps:
            raise NumericError(f"<base,v>_L = {ip!r}, expected 0 within {tol.manifold_eps}")
        q = lorentz_inner(self.coords, self.coords)
        if q < -1e-9:
            raise NumericError(f"<v,v>_L = {q!r} is negative beyond round-off")


def lorentz_inner(u, v) -> float:
    """Minkowski inner product -u0*v0 + sum_i ui*vi."""
    ua, va = _as_vec(u), _as_vec(v)
    if ua.shape != va.shape:
        raise DimensionError(f"length mismatch: {ua.shape[0]} vs {va.shape[0]}")
    return float(np.dot(ua[1:], va[1:]) - ua[0] * va[0])


def lorentz_norm(v) -> float:
    """sqrt(max(<v,v>_L, 0)); the clamp absorbs negative round-off."""
    coords = _as_vec(v)
    return math.sqrt(max(lorentz_inner(coords, coords), 0.0))


def canonical_origin(d: int) -> LorentzPoint:
    """The reference point [1, 0, ..., 0] of the d-dimensional model."""
    if d < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    coords = np.zeros(d + 1)
    coords[0] = 1.0
    return LorentzPoint(coords)


def project_to_manifold(raw) -> LorentzPoint:
    """Recompute the time coordinate from the spatial part.

    x_0 = sqrt(1 + ||spatial||^2) restores the constraint exactly up to
    round-off regardless of how far the input has drifted.
    """
    arr = _as_vec(raw)
    if not np.all(np.isfinite(arr)):
        raise NumericError("cannot project non-finite coordinates onto the manifold")
    out = arr.copy()
    out[0] = math.sqrt(1.0 + float(np.dot(arr[1:], arr[1:])))
    return LorentzPoint(out)


def project_to_tangent(x: LorentzPoint, raw) -> TangentVector:
    """Minkowski-orthogonal projection raw + <x,raw>_L * x onto T_x."""
    arr = _as_vec(raw)
    if arr.shape != x.coords.shape:
        raise DimensionError(f"length mismatch: {arr.shape[0]} vs {x.coords.shape[0]}")
    return TangentVector(arr + lorentz_inner(x.coords, arr) * x.coords, x)


def exp_map(x: LorentzPoint, v: TangentVector, tol: Tolerances = DEFAULT_TOLS) -> LorentzPoint:
    """Geodesic shot from x with initial velocity v.

    exp_x(v) = cosh(||v||_L) x + sinh(||v||_L) v / ||v||_L, with the
    first-order fallback x + v when ||v||_L is below the series cutoff.
    The result is re-projected onto the manifold.
    """
    if v.coords.shape != x.coords.shape:
        raise DimensionError("tangent vector and base point dimensions differ")
    n = lorentz_norm(v.coords)
    if n < tol.taylor_cutoff:
        return project_to_manifold(x.coords + v.coords)
    reach = min(n, EXP_LENGTH_CAP)
    out = math.cosh(reach) * x.coords + math.sinh(reach) * v.coords / n
    return project_to_manifold(out)


def log_map(x: LorentzPoint, y: LorentzPoint, tol: Tolerances = DEFAULT_TOLS) -> TangentVector:
    """Inverse of exp at x: the tangent whose geodesic reaches y.

    log_x(y) = arcosh(g)/sqrt(g^2 - 1) * (y - g x) with g = -<x,y>_L.
    g is clamped to >= 1 + arcosh_clamp inside arcosh and the square
    root; near coincidence (g - 1 below the cutoff) the scale factor is
    replaced by its limit 1, so log_x(x) = 0 exactly and the roundtrip
    with exp stays accurate for arbitrarily close pairs.
    """
    if x.coords.shape != y.coords.shape:
        raise DimensionError("points live in different ambient dimensions")
    g = -lorentz_inner(x.coords, y.coords)
    diff = y.coords - g * x.coords
    if g - 1.0 < tol.taylor_cutoff:
        return project_to_tangent(x, diff)
    gc = max(g, 1.0 + tol.arcosh_clamp)
    scale = math.acosh(gc) / math.sqrt(gc * gc - 1.0)
    return project_to_tangent(x, scale * diff)


def lorentz_distance(x: LorentzPoint, y: LorentzPoint) -> float:
    """Geodesic distance arcosh(max(-<x,y>_L, 1))."""
    if x.coords.shape != y.coords.shape:
        raise DimensionError("points live in different ambient dimensions")
    return math.acosh(max(-lorentz_inner(x.coords, y.coords), 1.0))


def parallel_transport(
    x: LorentzPoint, y: LorentzPoint, v: TangentVector, tol: Tolerances = DEFAULT_TOLS
) -> TangentVector:
    """Carry v from T_x to T_y along the connecting geodesic.

    P_{x->y}(v) = v - <log_x(y), v>_L / d(x,y)^2 * (log_x(y) + log_y(x)).
    Below the separation cutoff the formula degenerates 0/0 and v is
    simply re-projected onto T_y.
    """
    if v.coords.shape != y.coords.shape:
        raise DimensionError("tangent vector and target point dimensions differ")
    d = lorentz_distance(x, y)
    if d < tol.taylor_cutoff:
        return project_to_tangent(y, v.coords)
    lxy = log_map(x, y, tol)
    lyx = log_map(y, x, tol)
    coef = lorentz_inner(lxy.coords, v.coords) / (d * d)
    return project_to_tangent(y, v.coords - coef * (lxy.coords + lyx.coords))
