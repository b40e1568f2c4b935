"""Lorentz-space neural primitives and batched manifold maps.

Two layers of API live here.  The typed single-point operations
(``lorentz_matvec``, ``lorentz_scalar_mul``, ``lorentz_add``,
``lorentz_activation``, ``lift_features``) compose the scalar primitives of
:mod:`rhgcn.lorentz` exactly as defined:

    W (x) x      = exp_o(proj_o(W log_o(x)))
    xi (.) x     = exp_o(xi log_o(x))
    x (+) y      = exp_x(P_{o->x}(log_o(y)))
    act_L(x)     = exp_o(proj_o(act(log_o(x))))
    lift(X_i)    = [cosh ||X_i||, sinh ||X_i|| X_i/||X_i||]

The ``*_rows`` functions are the batched counterparts operating on
n x (d+1) row matrices.  They are written against :mod:`rhgcn.autodiff`'s
dispatching primitives, so the same code path serves plain numpy arrays
(diagnostics, evaluation) and tracked tensors (training).  Branch masks are
always taken from raw values, and off-branch expressions use guarded
denominators so no NaN ever enters the graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericError
from .lorentz import (
    DEFAULT_TOLS,
    EXP_LENGTH_CAP,
    LorentzPoint,
    TangentVector,
    Tolerances,
    canonical_origin,
    exp_map,
    log_map,
    parallel_transport,
    project_to_tangent,
)

__all__ = [
    "LorentzBatch",
    "lorentz_matvec",
    "lorentz_scalar_mul",
    "lorentz_add",
    "lorentz_activation",
    "lift_features",
    "inner_rows",
    "project_tangent_rows",
    "renorm_rows",
    "exp_rows",
    "log_rows",
    "dist_rows",
    "transport_rows",
]


@dataclass(frozen=True)
class LorentzBatch:
    """n rows on one Lorentz component, together with that component's origin."""

    rows: np.ndarray
    origin: LorentzPoint

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionError(f"batch rows must be 2-d, got shape {rows.shape}")
        if rows.shape[1] != self.origin.coords.shape[0]:
            raise DimensionError(
                f"row width {rows.shape[1]} != origin width {self.origin.coords.shape[0]}"
            )
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def validate(self, tol: Tolerances = DEFAULT_TOLS) -> None:
        q = (self.rows[:, 1:] ** 2).sum(axis=1) - self.rows[:, 0] ** 2
        if np.abs(q + 1.0).max() > tol.manifold_eps:
            raise NumericError("batch rows drifted off the manifold")
        if (self.rows[:, 0] <= 0.0).any():
            raise NumericError("batch rows left the upper sheet")
        self.origin.validate(tol)


# ---------------------------------------------------------------------------
# typed single-point operations


def lorentz_matvec(
    w: np.ndarray, x: LorentzPoint, origin: LorentzPoint, tol: Tolerances = DEFAULT_TOLS
) -> LorentzPoint:
    """Matrix action in the tangent space at ``origin``.

    The product W log_o(x) is not guaranteed to stay tangent for arbitrary
    W, so it is projected back onto T_o before the exponential map.
    """
    w = np.asarray(w, dtype=np.float64)
    width = origin.coords.shape[0]
    if w.shape != (width, width):
        raise DimensionError(f"weight shape {w.shape} does not match ambient width {width}")
    t = log_map(origin, x, tol)
    return exp_map(origin, project_to_tangent(origin, w @ t.coords), tol)


def lorentz_scalar_mul(
    xi: float, x: LorentzPoint, origin: LorentzPoint, tol: Tolerances = DEFAULT_TOLS
) -> LorentzPoint:
    """Geodesic rescaling exp_o(xi * log_o(x))."""
    t = log_map(origin, x, tol)
    return exp_map(origin, TangentVector(float(xi) * t.coords, origin), tol)


def lorentz_add(
    x: LorentzPoint, y: LorentzPoint, origin: LorentzPoint, tol: Tolerances = DEFAULT_TOLS
) -> LorentzPoint:
    """Vector addition exp_x(P_{o->x}(log_o(y)))."""
    t = log_map(origin, y, tol)
    moved = parallel_transport(origin, x, t, tol)
    return exp_map(x, moved, tol)


def lorentz_activation(
    x: LorentzPoint,
    origin: LorentzPoint,
    act: Callable[[np.ndarray], np.ndarray],
    tol: Tolerances = DEFAULT_TOLS,
) -> LorentzPoint:
    """Elementwise activation in the tangent space at ``origin``."""
    t = log_map(origin, x, tol)
    return exp_map(origin, project_to_tangent(origin, act(t.coords)), tol)


def lift_features(x_i: np.ndarray, tol: Tolerances = DEFAULT_TOLS) -> LorentzPoint:
    """Lift a Euclidean feature vector onto the canonical-origin hyperboloid.

    [0, X_i] is tangent at the canonical origin, so the closed form of the
    exponential map gives [cosh ||X_i||, sinh ||X_i|| X_i / ||X_i||].
    Degenerate norms map to the origin itself.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    if x_i.ndim != 1 or x_i.shape[0] < 1:
        raise DimensionError(f"feature vector must be 1-d and non-empty, got {x_i.shape}")
    if not np.all(np.isfinite(x_i)):
        raise NumericError("cannot lift non-finite features")
    norm = float(np.linalg.norm(x_i))
    if norm < tol.taylor_cutoff:
        return canonical_origin(x_i.shape[0])
    out = np.empty(x_i.shape[0] + 1)
    out[0] = np.cosh(norm)
    out[1:] = np.sinh(norm) * x_i / norm
    return LorentzPoint(out)


# ---------------------------------------------------------------------------
# batched maps (generic over numpy arrays and autodiff tensors)


@lru_cache(maxsize=None)
def _metric_row(width: int) -> np.ndarray:
    row = np.ones((1, width))
    row[0, 0] = -1.0
    return row


@lru_cache(maxsize=None)
def _spatial_mask(width: int) -> np.ndarray:
    row = np.ones((1, width))
    row[0, 0] = 0.0
    return row


@lru_cache(maxsize=None)
def _time_row(width: int) -> np.ndarray:
    row = np.zeros((1, width))
    row[0, 0] = 1.0
    return row


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, ad.Tensor) else np.asarray(x)


def _width(x) -> int:
    return _data(x).shape[-1]


def inner_rows(u, v):
    """Row-wise Minkowski inner product, shape (n, 1)."""
    return ad.sum(ad.mul(ad.mul(u, v), _metric_row(_width(u))), axis=1, keepdims=True)


def project_tangent_rows(x, raw):
    """Row-wise projection raw + <x,raw>_L x onto the tangent spaces at x."""
    return ad.add(raw, ad.mul(inner_rows(x, raw), x))


def renorm_rows(raw):
    """Recompute every row's time coordinate from its spatial part."""
    width = _width(raw)
    s2 = ad.sum(ad.mul(ad.mul(raw, raw), _spatial_mask(width)), axis=1, keepdims=True)
    time = ad.sqrt(ad.add(s2, 1.0))
    return ad.add(ad.mul(raw, _spatial_mask(width)), ad.mul(time, _time_row(width)))


def exp_rows(x, v, tol: Tolerances = DEFAULT_TOLS):
    """Row-wise exponential map with first-order fallback for tiny tangents.

    Shot lengths saturate at ``EXP_LENGTH_CAP`` so huge tangents cannot
    overflow cosh (matching the scalar map).
    """
    vsq = inner_rows(v, v)
    small = _data(vsq) < tol.taylor_cutoff ** 2
    norm = ad.sqrt(ad.clamp(vsq, lo=0.25 * tol.taylor_cutoff ** 2))
    reach = ad.clamp(norm, hi=EXP_LENGTH_CAP)
    main = ad.add(ad.mul(ad.cosh(reach), x), ad.mul(ad.div(ad.sinh(reach), norm), v))
    return renorm_rows(ad.where(small, ad.add(x, v), main))


def log_rows(x, y, tol: Tolerances = DEFAULT_TOLS):
    """Row-wise logarithmic map; near coincidence the scale factor -> 1."""
    g = ad.neg(inner_rows(x, y))
    diff = ad.sub(y, ad.mul(g, x))
    near = _data(g) - 1.0 < tol.taylor_cutoff
    gc = ad.clamp(g, lo=1.0 + tol.arcosh_clamp)
    denom = ad.sqrt(ad.clamp(ad.sub(ad.mul(gc, gc), 1.0), lo=tol.arcosh_clamp ** 2))
    coef = ad.div(ad.arcosh(gc), denom)
    return project_tangent_rows(x, ad.where(near, diff, ad.mul(coef, diff)))


def dist_rows(x, y):
    """Row-wise geodesic distance, shape (n, 1)."""
    return ad.arcosh(ad.clamp(ad.neg(inner_rows(x, y)), lo=1.0))


def transport_rows(x, y, v, tol: Tolerances = DEFAULT_TOLS, lxy=None):
    """Row-wise parallel transport of v from T_x to T_y.

    ``lxy`` may supply a precomputed log_x(y) (for callers that already
    hold the tangent that produced y).  Rows with separation below the
    cutoff fall back to re-projecting v at y.
    """
    if lxy is None:
        lxy = log_rows(x, y, tol)
    lyx = log_rows(y, x, tol)
    dsq = inner_rows(lxy, lxy)
    near = _data(dsq) < tol.taylor_cutoff ** 2
    coef = ad.div(inner_rows(lxy, v), ad.clamp(dsq, lo=0.25 * tol.taylor_cutoff ** 2))
    moved = ad.sub(v, ad.mul(coef, ad.add(lxy, lyx)))
    return project_tangent_rows(y, ad.where(near, v, moved))
