import numpy as np
import pytest

from rhgcn.diagnostics import (
    decay_bound_check,
    dirichlet_energy,
    lemma1_check,
    mixing_norms,
    operator_norm,
    oversmoothing_report,
    product_energy,
    run_energy_trace,
)
from rhgcn.errors import UsageError
from rhgcn.graph import NodeDataset, build_graph, synth_graph
from rhgcn.lorentz import canonical_origin, exp_map, project_to_tangent
from rhgcn.manifold_ops import LorentzBatch
from rhgcn.model import ModelConfig, init_params
from rhgcn.product import ProductSpec, build_product


def rows_from_tangents(origin, tangents):
    return np.stack([
        exp_map(origin, project_to_tangent(origin, t)).coords for t in tangents
    ])


class TestDirichletEnergy:
    def test_constant_rows_on_regular_graph(self):
        # cycle graph is regular: the normalized Laplacian annihilates constants
        o = canonical_origin(2)
        g = build_graph(6, [(i, (i + 1) % 6) for i in range(6)])
        rows = np.tile(exp_map(o, project_to_tangent(o, np.array([0.0, 0.7, -0.2]))).coords, (6, 1))
        e = dirichlet_energy(rows, o, g.laplacian_norm)
        assert abs(e) < 1e-12

    def test_origin_rows_zero_any_graph(self):
        o = canonical_origin(3)
        g = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        rows = np.tile(o.coords, (5, 1))
        assert dirichlet_energy(rows, o, g.laplacian_norm) == 0.0

    def test_two_node_dense_oracle(self):
        o = canonical_origin(2)
        g = build_graph(2, [(0, 1)])
        rows = rows_from_tangents(o, [np.array([0.0, 1, 0]), np.array([0.0, -1, 0])])
        got = dirichlet_energy(rows, o, g.laplacian_norm)
        # independent dense evaluation of the definition
        t = np.array([[0.0, 1, 0], [0.0, -1, 0]])
        lap = np.eye(2) - np.array([[0.5, 0.5], [0.5, 0.5]])
        want = np.trace(t.T @ lap @ t)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(2.0, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        o = canonical_origin(3)
        n = 8
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
        g = build_graph(n, edges)
        rows = rows_from_tangents(o, [np.concatenate([[0.0], rng.normal(size=3)]) for _ in range(n)])
        e1 = dirichlet_energy(rows, o, g.laplacian_norm)
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        g2 = build_graph(n, [(int(inv[u]), int(inv[v])) for u, v in edges])
        e2 = dirichlet_energy(rows[perm], o, g2.laplacian_norm)
        assert e1 == pytest.approx(e2, abs=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        o = canonical_origin(2)
        g = build_graph(7, [(i, i + 1) for i in range(6)])
        for _ in range(20):
            rows = rows_from_tangents(
                o, [np.concatenate([[0.0], rng.normal(size=2)]) for _ in range(7)])
            assert dirichlet_energy(rows, o, g.laplacian_norm) >= -1e-9


class TestProductEnergy:
    def test_k1_matches_single(self):
        rng = np.random.default_rng(2)
        spec = build_product("3x1", seed=1, origin_radius=0.5)
        o = spec.components[0].origin
        g = build_graph(4, [(0, 1), (2, 3)])
        rows = rows_from_tangents(o, [rng.normal(size=4) for _ in range(4)])
        energies, top = product_energy([rows], spec, g.laplacian_norm)
        assert top == energies[0]
        assert top == pytest.approx(dirichlet_energy(rows, o, g.laplacian_norm), abs=1e-12)

    def test_duplicated_components(self):
        rng = np.random.default_rng(3)
        base = build_product("2x1", seed=2, origin_radius=0.4)
        spec = ProductSpec((base.components[0], base.components[0]), 2, 0.4)
        o = spec.components[0].origin
        g = build_graph(3, [(0, 1), (1, 2)])
        rows = rows_from_tangents(o, [rng.normal(size=3) for _ in range(3)])
        energies, top = product_energy([rows, rows], spec, g.laplacian_norm)
        assert energies[0] == pytest.approx(energies[1], abs=1e-15)
        assert top == energies[0]

    def test_max_matches_recomputation(self):
        rng = np.random.default_rng(4)
        spec = build_product("2x2", seed=5, origin_radius=0.6)
        g = build_graph(5, [(0, 1), (1, 2), (3, 4), (0, 4)])
        parts = []
        for comp in spec.components:
            parts.append(rows_from_tangents(
                comp.origin, [rng.normal(size=comp.dim + 1) for _ in range(5)]))
        energies, top = product_energy(parts, spec, g.laplacian_norm)
        separate = [dirichlet_energy(p, c.origin, g.laplacian_norm)
                    for p, c in zip(parts, spec.components)]
        assert energies == pytest.approx(separate, abs=1e-12)
        assert top == max(separate)


class TestDecayBound:
    def path_dataset(self, n=10):
        g = build_graph(n, [(i, i + 1) for i in range(n - 1)])
        rng = np.random.default_rng(6)
        feats = rng.normal(size=(n, 3))
        splits = {"train": np.array([0]), "val": np.array([1]), "test": np.arange(2, n)}
        return NodeDataset(graph=g, features=feats, labels=np.zeros(n, dtype=np.int64),
                           splits=splits)

    def test_identity_weights_reduce_to_spectral_bound(self):
        ds = self.path_dataset()
        product = build_product("3x1", seed=0, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=3, classes=2, layers=4, alpha=0.0,
                          beta_base=0.8, activation="identity", seed=0)
        params = init_params(cfg)
        for layer in params.layers:
            layer.weights[0].data = np.eye(4)
        trace = run_energy_trace(ds, cfg, params)
        norms = mixing_norms(params)
        assert all(abs(nj - 1.0) < 1e-12 for row in norms for nj in row)
        report = decay_bound_check(trace, trace.spectral_gap, norms)
        assert report.ok
        factor = (1.0 - trace.spectral_gap) ** 2
        for prev, cur in zip(trace.entries, trace.entries[1:]):
            assert cur.max_energy <= factor * prev.max_energy * (1 + 1e-6) + 1e-12

    def test_complete_graph_collapses_immediately(self):
        n = 8
        g = build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
        rng = np.random.default_rng(7)
        ds = NodeDataset(graph=g, features=rng.normal(size=(n, 3)),
                         labels=np.zeros(n, dtype=np.int64),
                         splits={"train": np.array([0]), "val": np.array([1]),
                                 "test": np.arange(2, n)})
        product = build_product("3x1", seed=1, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=3, classes=2, layers=3, alpha=0.0,
                          beta_base=0.5, activation="identity", seed=1)
        params = init_params(cfg)
        trace = run_energy_trace(ds, cfg, params)
        # lambda = 1 for the self-looped complete graph: one aggregation kills energy
        assert trace.spectral_gap == pytest.approx(1.0, abs=1e-9)
        assert trace.entries[0].max_energy > 1e-3
        for entry in trace.entries[1:]:
            assert entry.max_energy < 1e-12 * trace.entries[0].max_energy + 1e-18

    def test_zero_energy_stays_zero(self):
        ds = self.path_dataset()
        zero_ds = NodeDataset(graph=ds.graph, features=np.zeros((ds.n, 3)),
                              labels=ds.labels, splits=ds.splits)
        product = build_product("3x1", seed=2, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=3, classes=2, layers=1, alpha=0.0,
                          beta_base=0.5, activation="identity", seed=2)
        params = init_params(cfg)
        trace = run_energy_trace(zero_ds, cfg, params)
        assert trace.entries[0].max_energy == pytest.approx(0.0, abs=1e-18)
        assert trace.entries[1].max_energy == pytest.approx(0.0, abs=1e-18)

    def test_residual_enabled_rejected(self):
        ds = self.path_dataset()
        product = build_product("3x1", seed=3, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=3, classes=2, layers=2, alpha=0.1,
                          beta_base=0.5, activation="identity", seed=3)
        params = init_params(cfg)
        trace = run_energy_trace(ds, cfg, params)
        with pytest.raises(UsageError):
            decay_bound_check(trace, trace.spectral_gap, mixing_norms(params))


class TestLemma1:
    def test_identity_case(self):
        n = 9
        u = np.zeros(n)
        u[3] = 1.0
        assert np.linalg.norm(np.eye(n) @ u) == 1.0 <= np.sqrt(n)

    def test_monte_carlo(self):
        report = lemma1_check(trials=1000, n=16, seed=0)
        assert report.ok
        assert report.max_ratio <= 1.0

    def test_tightness(self):
        report = lemma1_check(trials=10, n=25, seed=1)
        assert report.tight_ratio == pytest.approx(1.0, abs=1e-9)


class TestOversmoothingReport:
    def test_alpha_one_flat_trace(self):
        ds = synth_graph("path", {"n": 12}, seed=0)
        product = build_product("3x1", seed=0, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=2, classes=2, layers=6, alpha=1.0,
                          beta_base=0.0, activation="identity", seed=0)
        params = init_params(cfg)
        trace = run_energy_trace(ds, cfg, params)
        e0 = trace.entries[0].max_energy
        for entry in trace.entries:
            assert entry.max_energy == pytest.approx(e0, rel=1e-9)

    def test_contrast_summary(self):
        ds = synth_graph("path", {"n": 32}, seed=0)
        product = build_product("4x1", seed=7, origin_radius=0.0)
        cfg = ModelConfig(product=product, in_dim=2, classes=2, layers=16, alpha=0.1,
                          beta_base=1.0, activation="identity", seed=7)
        report = oversmoothing_report(ds, cfg, alphas=(0.0, 0.1), weight_scale=0.7)
        ratios = {label: s["final_over_initial"] for label, s in report.summary.items()}
        assert ratios["alpha=0"] < ratios["alpha=0.1"]

    def test_operator_norm(self):
        assert operator_norm(np.diag([3.0, -5.0, 1.0])) == 5.0
