"""Graph ingestion, symmetric normalization, spectra, and synthetic fixtures.

The normalized operators follow the self-loop convention: with A the
undirected adjacency, P = D^{-1/2} (A + I) D^{-1/2} where D holds the
row sums of A + I, and the normalized Laplacian is L = I - P.

Datasets are plain-text directories (see ``load_dataset``) so they stay
bit-auditable; ``save_dataset`` writes the same format, which is how the
``synth`` command materializes fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .errors import CapabilityError, ConfigError, FormatError, NumericError

__all__ = [
    "SparseGraph",
    "NodeDataset",
    "normalized_adjacency",
    "build_graph",
    "spectral_gap",
    "load_dataset",
    "save_dataset",
    "synth_graph",
    "parse_synth_spec",
]

DENSE_EIG_LIMIT = 5000
EIGEN_ZERO_TOL = 1e-8


@dataclass(frozen=True)
class SparseGraph:
    """Node count, canonical undirected edge list, and normalized operators."""

    n: int
    edges: np.ndarray
    adj_norm: sp.csr_matrix
    laplacian_norm: sp.csr_matrix


@dataclass(frozen=True)
class NodeDataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    splits: dict

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> int:
        return int(self.labels.max()) + 1


def _canonical_edges(n: int, edges) -> np.ndarray:
    arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0) | (arr >= n)].flat[0]
        raise IndexError(f"edge endpoint {bad} outside [0, {n})")
    arr = arr[arr[:, 0] != arr[:, 1]]  # self-loops are added once by construction
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    return np.unique(np.stack([lo, hi], axis=1), axis=0) if arr.size else arr.reshape(0, 2)


def normalized_adjacency(n: int, edges) -> sp.csr_matrix:
    """Symmetric-normalized adjacency with self-loops, D^{-1/2}(A+I)D^{-1/2}."""
    if n < 1:
        raise ConfigError(f"node count must be positive, got {n}")
    e = _canonical_edges(n, edges)
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    vals = np.ones(rows.shape[0])
    a_tilde = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    return (d_inv_sqrt @ a_tilde @ d_inv_sqrt).tocsr()


def build_graph(n: int, edges) -> SparseGraph:
    e = _canonical_edges(n, edges)
    p = normalized_adjacency(n, e)
    lap = (sp.identity(n, format="csr") - p).tocsr()
    return SparseGraph(n=n, edges=e, adj_norm=p, laplacian_norm=lap)


def spectral_gap(lap, zero_tol: float = EIGEN_ZERO_TOL, dense_limit: int = DENSE_EIG_LIMIT) -> float:
    """Smallest eigenvalue of the normalized Laplacian above ``zero_tol``.

    Diagnostics-only: the Laplacian is densified, so graphs above
    ``dense_limit`` nodes are rejected.
    """
    n = lap.shape[0]
    if n > dense_limit:
        raise CapabilityError(f"dense eigensolve capped at {dense_limit} nodes, got {n}")
    dense = lap.toarray() if sp.issparse(lap) else np.asarray(lap, dtype=np.float64)
    eigs = np.linalg.eigvalsh(dense)
    nonzero = eigs[eigs > zero_tol]
    if nonzero.size == 0:
        raise NumericError("normalized Laplacian has no eigenvalue above tolerance")
    return float(nonzero.min())


# ---------------------------------------------------------------------------
# plain-text dataset directories


def _read_lines(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_dataset(directory) -> NodeDataset:
    """Load a dataset directory.

    Expected files:
      edges.tsv     one "u<TAB>v" per line, 0-based ids, each pair once
      features.csv  n rows of comma-separated reals
      labels.csv    n rows, one integer each
      splits.json   {"train": [...], "val": [...], "test": [...]}
    """
    directory = Path(directory)
    features = []
    width = None
    for i, line in enumerate(_read_lines(directory / "features.csv"), start=1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise FormatError(f"features.csv line {i}: {exc}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(f"features.csv line {i}: expected {width} columns, got {len(row)}")
        features.append(row)
    if not features:
        raise FormatError("features.csv: no feature rows")
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]

    labels = []
    for i, line in enumerate(_read_lines(directory / "labels.csv"), start=1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.strip()))
        except ValueError as exc:
            raise FormatError(f"labels.csv line {i}: {exc}") from exc
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] != n:
        raise FormatError(f"labels.csv has {y.shape[0]} rows but features.csv has {n}")
    if y.min() < 0:
        raise FormatError("labels.csv: labels must be nonnegative")

    edges = []
    for i, line in enumerate(_read_lines(directory / "edges.tsv"), start=1):
        if not line.strip():
            continue
        toks = line.split()
        if len(toks) != 2:
            raise FormatError(f"edges.tsv line {i}: expected two node ids, got {line!r}")
        try:
            u, v = int(toks[0]), int(toks[1])
        except ValueError as exc:
            raise FormatError(f"edges.tsv line {i}: {exc}") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise FormatError(f"edges.tsv line {i}: endpoint outside [0, {n})")
        edges.append((u, v))

    with open(directory / "splits.json", "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    splits = {}
    for key in ("train", "val", "test"):
        if key not in raw:
            raise FormatError(f"splits.json: missing key {key!r}")
        idx = np.asarray(raw[key], dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise FormatError(f"splits.json: {key} index outside [0, {n})")
        splits[key] = idx
    combined = np.concatenate([splits[k] for k in ("train", "val", "test")])
    if np.unique(combined).size != combined.size:
        raise FormatError("splits.json: train/val/test sets overlap")

    return NodeDataset(graph=build_graph(n, edges), features=x, labels=y, splits=splits)


def save_dataset(ds: NodeDataset, directory) -> None:
    """Write a dataset in the plain-text directory format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in ds.graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.csv", "w", encoding="utf-8") as fh:
        for row in ds.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(directory / "labels.csv", "w", encoding="utf-8") as fh:
        for label in ds.labels:
            fh.write(f"{int(label)}\n")
    with open(directory / "splits.json", "w", encoding="utf-8") as fh:
        json.dump({k: [int(i) for i in v] for k, v in ds.splits.items()}, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# synthetic fixtures


def _stratified_splits(labels: np.ndarray, rng: np.random.Generator,
                       train_frac: float = 0.2, val_frac: float = 0.2) -> dict:
    train, val, test = [], [], []
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = max(1, int(round(train_frac * members.size)))
        n_val = int(round(val_frac * members.size))
        train.extend(members[:n_tr])
        val.extend(members[n_tr:n_tr + n_val])
        test.extend(members[n_tr + n_val:])
    return {
        "train": np.sort(np.asarray(train, dtype=np.int64)),
        "val": np.sort(np.asarray(val, dtype=np.int64)),
        "test": np.sort(np.asarray(test, dtype=np.int64)),
    }


def synth_graph(kind: str, params: dict, seed: int = 0) -> NodeDataset:
    """Deterministic synthetic datasets for tests and diagnostics.

    Kinds:
      balanced_tree  params branching (>= 2), depth (>= 1); features and
                     labels are the node depth (one-hot / class id).
      path           params n (>= 2); features [t, 1 - t] with t the
                     normalized position, labels split at the midpoint.
      sbm            params blocks, block_size, p_in, p_out, noise;
                     labels are block ids, features are one-hot block
                     indicators plus Gaussian noise.
      karate         the 34-node two-club graph with identity features.
    """
    params = dict(params)
    rng = np.random.default_rng(seed)
    if kind == "balanced_tree":
        b, h = int(params.pop("branching", 2)), int(params.pop("depth", 3))
        if b < 2 or h < 1:
            raise ConfigError(f"balanced_tree needs branching >= 2 and depth >= 1, got ({b}, {h})")
        g = nx.balanced_tree(b, h)
        depth = np.asarray([nx.shortest_path_length(g, 0, i) for i in range(g.number_of_nodes())])
        feats = np.eye(h + 1)[depth]
        labels = depth.astype(np.int64)
    elif kind == "path":
        n = int(params.pop("n", 10))
        if n < 2:
            raise ConfigError(f"path needs n >= 2, got {n}")
        g = nx.path_graph(n)
        t = np.arange(n) / (n - 1)
        feats = np.stack([t, 1.0 - t], axis=1)
        labels = (np.arange(n) >= n / 2).astype(np.int64)
    elif kind == "sbm":
        blocks = int(params.pop("blocks", 2))
        size = int(params.pop("block_size", 30))
        p_in = float(params.pop("p_in", 0.9))
        p_out = float(params.pop("p_out", 0.05))
        noise = float(params.pop("noise", 0.2))
        if blocks < 2 or size < 2:
            raise ConfigError(f"sbm needs blocks >= 2 and block_size >= 2, got ({blocks}, {size})")
        if not (0.0 <= p_out <= p_in <= 1.0):
            raise ConfigError(f"sbm needs 0 <= p_out <= p_in <= 1, got ({p_in}, {p_out})")
        prob = np.full((blocks, blocks), p_out)
        np.fill_diagonal(prob, p_in)
        g = nx.stochastic_block_model([size] * blocks, prob.tolist(), seed=int(seed))
        labels = np.repeat(np.arange(blocks), size).astype(np.int64)
        feats = np.eye(blocks)[labels] + noise * rng.normal(size=(blocks * size, blocks))
    elif kind == "karate":
        if params:
            raise ConfigError(f"karate takes no parameters, got {sorted(params)}")
        g = nx.karate_club_graph()
        labels = np.asarray(
            [0 if g.nodes[i]["club"] == "Mr. Hi" else 1 for i in range(g.number_of_nodes())],
            dtype=np.int64,
        )
        feats = np.eye(g.number_of_nodes())
    else:
        raise ConfigError(f"unknown synthetic kind {kind!r}")
    if params and kind != "karate":
        raise ConfigError(f"unused {kind} parameters: {sorted(params)}")
    graph = build_graph(g.number_of_nodes(), list(g.edges()))
    return NodeDataset(graph=graph, features=feats, labels=labels,
                       splits=_stratified_splits(labels, rng))


def parse_synth_spec(spec: str) -> tuple[str, dict]:
    """Parse "kind:key=val,key=val" command-line synthetic specs."""
    head, _, tail = spec.partition(":")
    kind = head.strip()
    if not kind:
        raise ConfigError(f"empty synthetic spec {spec!r}")
    params: dict = {}
    if tail.strip():
        for item in tail.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"bad synthetic parameter {item!r}; expected key=value")
            key, val = key.strip(), val.strip()
            try:
                params[key] = int(val)
            except ValueError:
                try:
                    params[key] = float(val)
                except ValueError:
                    raise ConfigError(f"synthetic parameter {key!r} has non-numeric value {val!r}")
    return kind, params
