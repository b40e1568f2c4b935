"""Dirichlet-energy diagnostics for the over-smoothing behaviour.

The Dirichlet energy of a batch H on a component with origin o is

    E(H) = tr(log_o(H)^T L log_o(H))

with L the normalized Laplacian; it vanishes exactly when all rows map to
the same tangent vector, which is the degenerate state deep graph
convolutions collapse into.  On a product space the per-component energies
are computed at each component's own origin and the maximum is reported.

``decay_bound_check`` verifies the per-layer contraction

    E(H^(l)) <= (1 - lambda)^2 ||(1-beta_l) I + beta_l W^(l)||_2^2 E(H^(l-1))

for runs without the initial-feature residual (alpha = 0), identity
activation, noise off.  The derivation also needs the tangent projection at
the origin to be Euclidean-contractive, which holds at the canonical
origin, so bound checks run with origin_radius = 0.

``lemma1_check`` samples row-stochastic nonnegative matrices and verifies
||X u||_2 <= sqrt(n) for unit u, including the construction that makes the
bound tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, UsageError
from .graph import NodeDataset, spectral_gap
from .lorentz import DEFAULT_TOLS, LorentzPoint, Tolerances
from .manifold_ops import LorentzBatch, log_rows
from .model import ModelConfig, ModelParams, forward, init_params

__all__ = [
    "dirichlet_energy",
    "product_energy",
    "EnergyTrace",
    "LayerEnergy",
    "run_energy_trace",
    "operator_norm",
    "mixing_norms",
    "BoundReport",
    "decay_bound_check",
    "Lemma1Report",
    "lemma1_check",
    "OversmoothingReport",
    "oversmoothing_report",
]


def _rows_and_origin(h, origin) -> tuple[np.ndarray, LorentzPoint]:
    if isinstance(h, LorentzBatch):
        return h.rows, h.origin
    if origin is None:
        raise UsageError("raw row matrices need an explicit origin")
    return np.asarray(h, dtype=np.float64), origin


def dirichlet_energy(h, origin: LorentzPoint | None = None, lap=None,
                     tol: Tolerances = DEFAULT_TOLS) -> float:
    """tr(log_o(H)^T L log_o(H)) with the log applied row-wise."""
    rows, org = _rows_and_origin(h, origin)
    n = rows.shape[0]
    if lap.shape != (n, n):
        raise DimensionError(f"Laplacian shape {lap.shape} does not match {n} rows")
    t = np.asarray(log_rows(org.coords[None, :], rows, tol))
    return float(np.sum(t * (lap @ t)))


def product_energy(parts, spec, lap, tol: Tolerances = DEFAULT_TOLS) -> tuple[list, float]:
    """Per-component energies at each component's own origin, and their max."""
    if len(parts) != spec.k:
        raise DimensionError(f"{len(parts)} parts for {spec.k} components")
    energies = []
    for part, comp in zip(parts, spec.components):
        rows = part.rows if isinstance(part, LorentzBatch) else part
        energies.append(dirichlet_energy(rows, comp.origin, lap, tol))
    return energies, max(energies)


@dataclass(frozen=True)
class LayerEnergy:
    layer: int
    energies: tuple
    max_energy: float
    # whether each component's tangent entering this layer's activation was
    # componentwise nonnegative (ReLU then acts as the identity); empty for
    # the lift (layer 0), which has no activation
    pre_act_nonneg: tuple = ()


@dataclass(frozen=True)
class EnergyTrace:
    entries: tuple
    spectral_gap: float
    alpha: float
    betas: tuple
    seed: int

    @property
    def initial_energy(self) -> float:
        return self.entries[0].max_energy

    @property
    def final_energy(self) -> float:
        return self.entries[-1].max_energy

    @property
    def layer_max_energies(self) -> list:
        return [e.max_energy for e in self.entries]


def run_energy_trace(dataset: NodeDataset, config: ModelConfig, params: ModelParams,
                     tol: Tolerances = DEFAULT_TOLS) -> EnergyTrace:
    """Evaluation-mode forward pass recording per-layer energies."""
    lap = dataset.graph.laplacian_norm
    collected: dict[int, dict[int, float]] = {}
    nonneg: dict[int, dict[int, bool]] = {}

    def hook(layer: int, comp: int, rows: np.ndarray) -> None:
        origin = config.product.components[comp].origin
        collected.setdefault(layer, {})[comp] = dirichlet_energy(rows, origin, lap, tol)

    def pre_act(layer: int, comp: int, tau: np.ndarray) -> None:
        nonneg.setdefault(layer, {})[comp] = bool(tau.min() >= -1e-12)

    forward(dataset.features, dataset.graph, config, params, training=False,
            layer_hook=hook, pre_act_hook=pre_act, tol=tol)
    entries = []
    for layer in sorted(collected):
        energies = tuple(collected[layer][j] for j in range(config.product.k))
        flags = tuple(nonneg[layer][j] for j in range(config.product.k)) if layer in nonneg else ()
        entries.append(LayerEnergy(layer, energies, max(energies), flags))
    lam = spectral_gap(lap)
    betas = tuple(lp.beta for lp in params.layers)
    return EnergyTrace(tuple(entries), lam, params.layers[0].alpha, betas, config.seed)


def operator_norm(m: np.ndarray) -> float:
    """Maximal singular value (dense; diagnostics scale only)."""
    return float(np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)[0])


def mixing_norms(params: ModelParams) -> list:
    """Per-layer, per-component norms of (1 - beta) I + beta W."""
    out = []
    for layer in params.layers:
        row = []
        for w in layer.weights:
            d = w.data if hasattr(w, "data") else np.asarray(w)
            row.append(operator_norm((1.0 - layer.beta) * np.eye(d.shape[0]) + layer.beta * d))
        out.append(row)
    return out


@dataclass(frozen=True)
class BoundEntry:
    layer: int
    component: int
    energy: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class BoundReport:
    entries: tuple
    spectral_gap: float
    violations: int
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return self.violations == 0


def decay_bound_check(trace: EnergyTrace, lam: float, norms, rel_slack: float = 1e-6,
                      require_nonneg: bool = False) -> BoundReport:
    """Assert the per-layer energy-decay inequality on a no-residual trace.

    ``norms`` holds per-layer lists of per-component mixing-matrix norms
    (see :func:`mixing_norms`).  The slack is relative, plus a tiny
    absolute floor so zero-energy layers compare cleanly.  With
    ``require_nonneg`` (for ReLU traces) a layer is only asserted when its
    pre-activation tangent was componentwise nonnegative, i.e. when the
    activation provably acted as the identity; other layers are skipped
    and counted.
    """
    if trace.alpha != 0.0:
        raise UsageError("the decay bound applies to runs without the initial-feature residual")
    entries = []
    violations = 0
    skipped = 0
    factor = (1.0 - lam) ** 2
    k = len(trace.entries[0].energies)
    for prev, cur, layer_norms in zip(trace.entries, trace.entries[1:], norms):
        for j in range(k):
            if require_nonneg and not (cur.pre_act_nonneg and cur.pre_act_nonneg[j]):
                skipped += 1
                continue
            rhs = factor * layer_norms[j] ** 2 * prev.energies[j]
            lhs = cur.energies[j]
            ok = lhs <= rhs * (1.0 + rel_slack) + 1e-12
            violations += 0 if ok else 1
            entries.append(BoundEntry(cur.layer, j, lhs, rhs, ok))
    return BoundReport(tuple(entries), lam, violations, skipped)


@dataclass(frozen=True)
class Lemma1Report:
    n: int
    trials: int
    violations: int
    max_ratio: float
    tight_ratio: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def lemma1_check(trials: int, n: int, seed: int = 0) -> Lemma1Report:
    """Monte-Carlo check of ||X u||_2 <= sqrt(n) for row-stochastic X.

    Also evaluates the tight construction (every row a shared standard
    basis vector, u that basis vector), whose ratio is exactly 1.
    """
    rng = np.random.default_rng(seed)
    root_n = np.sqrt(n)
    max_ratio = 0.0
    violations = 0
    for _ in range(trials):
        x = rng.uniform(0.0, 1.0, size=(n, n))
        x /= x.sum(axis=1, keepdims=True)
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        val = np.linalg.norm(x @ u)
        if val > root_n + 1e-9:
            violations += 1
        max_ratio = max(max_ratio, val / root_n)
    tight_x = np.zeros((n, n))
    tight_x[:, 0] = 1.0
    tight_u = np.zeros(n)
    tight_u[0] = 1.0
    tight_ratio = float(np.linalg.norm(tight_x @ tight_u) / root_n)
    return Lemma1Report(n, trials, violations, max_ratio, tight_ratio)


@dataclass(frozen=True)
class OversmoothingReport:
    traces: tuple             # (label, EnergyTrace) pairs
    spectral_gap: float
    summary: dict


def oversmoothing_report(
    dataset: NodeDataset,
    config: ModelConfig,
    alphas=(0.0, 0.1),
    layer_counts=None,
    weight_scale: float | None = 0.7,
    tol: Tolerances = DEFAULT_TOLS,
) -> OversmoothingReport:
    """Contrast energy decay with and without the initial-feature residual.

    Runs every (alpha, depth) combination; ``layer_counts`` defaults to the
    config's depth.  All runs at one depth reuse the same seeded weights
    (alpha does not consume randomness), so their traces differ only in
    the residual path.
    """
    depths = tuple(layer_counts) if layer_counts else (config.layers,)
    traces = []
    summary = {}
    lam = None
    for depth in depths:
        for alpha in alphas:
            cfg = ModelConfig(
                product=config.product, in_dim=config.in_dim, classes=config.classes,
                layers=int(depth), alpha=float(alpha), beta_base=config.beta_base,
                drop_rate=0.0, activation=config.activation, seed=config.seed,
            )
            params = init_params(cfg, weight_scale=weight_scale)
            trace = run_energy_trace(dataset, cfg, params, tol)
            label = f"alpha={alpha:g}" if len(depths) == 1 else f"alpha={alpha:g},L={depth}"
            traces.append((label, trace))
            lam = trace.spectral_gap
            summary[label] = {
                "initial_energy": trace.initial_energy,
                "final_energy": trace.final_energy,
                "final_over_initial": trace.final_energy / trace.initial_energy
                if trace.initial_energy > 0 else float("nan"),
            }
    return OversmoothingReport(tuple(traces), lam, summary)
