"""Products of Lorentz components with independently prescribed origins.

A product space is an ordered list of Lorentz components, each carrying its
own dimension and its own origin point.  Origins are sampled by shooting a
seeded uniformly-random tangent direction of fixed Lorentz norm
(``origin_radius``) from the canonical origin, so identical seeds rebuild
identical spaces.  Exp/log act componentwise.

Feature lifting onto a component with a non-canonical origin first forms
the tangent [0, M_j X_i] at the canonical origin, parallel-transports it to
the component origin (a constant linear map, precomputed as a matrix), and
applies the exponential map there.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError
from .lorentz import (
    DEFAULT_TOLS,
    LorentzPoint,
    TangentVector,
    Tolerances,
    canonical_origin,
    exp_map,
    log_map,
    lorentz_distance,
)
from .manifold_ops import LorentzBatch, exp_rows

__all__ = [
    "Component",
    "ProductSpec",
    "ProductPoint",
    "parse_signature",
    "format_signature",
    "build_product",
    "product_exp",
    "product_log",
    "transport_from_canonical",
    "lift_to_product",
]

_SIG_PART = re.compile(r"^(\d+)x(\d+)$")


@dataclass(frozen=True)
class Component:
    dim: int
    origin: LorentzPoint


@dataclass(frozen=True)
class ProductSpec:
    """k Lorentz components, the sampling seed, and the origin displacement."""

    components: tuple[Component, ...]
    seed: int
    origin_radius: float

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.dim for c in self.components)

    @property
    def signature(self) -> str:
        return format_signature(self.dims)

    @property
    def total_width(self) -> int:
        """Sum of ambient widths (d_j + 1); the classifier input size."""
        return sum(c.dim + 1 for c in self.components)


@dataclass(frozen=True)
class ProductPoint:
    """One point per component."""

    parts: tuple[LorentzPoint, ...]

    def validate(self, tol: Tolerances = DEFAULT_TOLS) -> None:
        for p in self.parts:
            p.validate(tol)


def parse_signature(signature: str) -> list[tuple[int, int]]:
    """Parse \"dxm[,dxm...]\" into (dimension, count) groups."""
    text = signature.strip().strip("[]")
    if not text:
        raise ConfigError("empty product signature")
    groups = []
    for part in text.split(","):
        m = _SIG_PART.match(part.strip())
        if not m:
            raise ConfigError(f"bad signature component {part!r}; expected like '2x8'")
        d, count = int(m.group(1)), int(m.group(2))
        if d < 1 or count < 1:
            raise ConfigError(f"signature component {part!r} must use positive integers")
        groups.append((d, count))
    return groups


def format_signature(dims) -> str:
    """Group consecutive equal dimensions back into \"dxm\" form."""
    dims = list(dims)
    if not dims:
        raise ConfigError("empty dimension list")
    groups: list[list[int]] = []
    for d in dims:
        if groups and groups[-1][0] == d:
            groups[-1][1] += 1
        else:
            groups.append([d, 1])
    return ",".join(f"{d}x{m}" for d, m in groups)


def build_product(
    signature, seed: int = 0, origin_radius: float = 1.0
) -> ProductSpec:
    """Construct a product space with seeded random origins.

    Each origin is exp_o(r) for a tangent r at the canonical origin with a
    uniformly random direction and Lorentz norm ``origin_radius``; radius 0
    keeps every origin canonical.
    """
    groups = parse_signature(signature) if isinstance(signature, str) else list(signature)
    if not groups:
        raise ConfigError("product signature needs at least one component")
    if origin_radius < 0.0:
        raise ConfigError("origin_radius must be nonnegative")
    rng = np.random.default_rng(seed)
    components = []
    for d, count in groups:
        if d < 1 or count < 1:
            raise ConfigError(f"bad signature group ({d}, {count})")
        for _ in range(count):
            origin = canonical_origin(d)
            if origin_radius > 0.0:
                direction = rng.normal(size=d)
                norm = np.linalg.norm(direction)
                if norm < 1e-12:
                    direction, norm = np.eye(d)[0], 1.0
                tangent = np.concatenate([[0.0], direction / norm * origin_radius])
                origin = exp_map(origin, TangentVector(tangent, origin))
            components.append(Component(d, origin))
    return ProductSpec(tuple(components), int(seed), float(origin_radius))


def product_exp(x: ProductPoint, v: list[TangentVector], tol: Tolerances = DEFAULT_TOLS) -> ProductPoint:
    """Componentwise exponential map on the product space."""
    if len(v) != len(x.parts):
        raise DimensionError(f"{len(v)} tangent parts for {len(x.parts)} components")
    return ProductPoint(tuple(exp_map(p, t, tol) for p, t in zip(x.parts, v)))


def product_log(x: ProductPoint, y: ProductPoint, tol: Tolerances = DEFAULT_TOLS) -> list[TangentVector]:
    """Componentwise logarithmic map on the product space."""
    if len(x.parts) != len(y.parts):
        raise DimensionError(f"{len(x.parts)} vs {len(y.parts)} components")
    return [log_map(p, q, tol) for p, q in zip(x.parts, y.parts)]


def transport_from_canonical(origin: LorentzPoint, tol: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Matrix of parallel transport T_{o_can} -> T_{origin}, as a linear map.

    Transport along a fixed geodesic is linear in the tangent argument, so
    it collapses to a constant (d+1) x (d+1) matrix (composed with the
    tangent projection at the target); lifting a whole feature batch then
    costs one matmul.
    """
    width = origin.coords.shape[0]
    oc = canonical_origin(width - 1)
    metric = np.ones(width)
    metric[0] = -1.0
    proj = np.eye(width) + np.outer(origin.coords, origin.coords * metric)
    d = lorentz_distance(oc, origin)
    if d < tol.taylor_cutoff:
        return proj
    l1 = log_map(oc, origin, tol).coords
    l2 = log_map(origin, oc, tol).coords
    move = np.eye(width) - np.outer(l1 + l2, l1 * metric) / (d * d)
    return proj @ move


def lift_rows(x_feats, spec: ProductSpec, input_maps, tol: Tolerances = DEFAULT_TOLS):
    """Lift an n x d feature matrix into every component.

    Returns one (rows, tangent) pair per component, where ``tangent`` is
    the lifted tangent at that component's origin (equal to the row-wise
    log of ``rows`` there).  Accepts numpy arrays or autodiff tensors for
    the per-component input maps.
    """
    if len(input_maps) != spec.k:
        raise DimensionError(f"{len(input_maps)} input maps for {spec.k} components")
    n, d = np.asarray(x_feats.data if isinstance(x_feats, ad.Tensor) else x_feats).shape
    out = []
    for comp, m in zip(spec.components, input_maps):
        m_shape = m.data.shape if isinstance(m, ad.Tensor) else np.asarray(m).shape
        if m_shape != (comp.dim, d):
            raise DimensionError(
                f"input map shape {m_shape} does not match (component dim {comp.dim}, features {d})"
            )
        z = ad.matmul(x_feats, ad.transpose(m))
        u = ad.concat([np.zeros((n, 1)), z], axis=1)
        tangent = ad.matmul(u, transport_from_canonical(comp.origin, tol).T)
        rows = exp_rows(comp.origin.coords[None, :], tangent, tol)
        out.append((rows, tangent))
    return out


def lift_to_product(
    x_feats: np.ndarray, spec: ProductSpec, input_maps, tol: Tolerances = DEFAULT_TOLS
) -> list[LorentzBatch]:
    """Numpy-facing wrapper of :func:`lift_rows` returning typed batches."""
    lifted = lift_rows(np.asarray(x_feats, dtype=np.float64), spec,
                       [np.asarray(m, dtype=np.float64) for m in input_maps], tol)
    return [LorentzBatch(rows, comp.origin) for (rows, _), comp in zip(lifted, spec.components)]
