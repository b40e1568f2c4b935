import math

import numpy as np
import pytest

from rhgcn import autodiff as ad
from rhgcn.errors import ConfigError, DimensionError, UsageError
from rhgcn.graph import build_graph, synth_graph
from rhgcn.lorentz import LorentzPoint, canonical_origin, exp_map, log_map, project_to_tangent
from rhgcn.manifold_ops import (
    LorentzBatch,
    lorentz_activation,
    lorentz_add,
    lorentz_matvec,
    lorentz_scalar_mul,
)
from rhgcn.model import (
    LayerParams,
    ModelConfig,
    NoiseSpec,
    accuracy,
    forward,
    hgc_layer,
    hyperdrop,
    init_params,
    load_checkpoint,
    loss_nll,
    sample_noise,
    save_checkpoint,
)
from rhgcn.product import build_product


def tree_dataset():
    return synth_graph("balanced_tree", {"branching": 2, "depth": 3}, seed=0)


def make_config(ds, signature="2x2", layers=2, alpha=0.1, radius=0.5, seed=0, **kw):
    product = build_product(signature, seed=seed, origin_radius=radius)
    return ModelConfig(product=product, in_dim=ds.feature_dim, classes=ds.classes,
                       layers=layers, alpha=alpha, seed=seed, **kw)


def random_batch(rng, origin, n):
    rows = []
    for _ in range(n):
        t = project_to_tangent(origin, rng.normal(size=origin.coords.shape[0]))
        rows.append(exp_map(origin, t).coords)
    return LorentzBatch(np.stack(rows), origin)


class TestHgcLayer:
    def test_full_identity_composition(self):
        # alpha=0, beta=1, W=I, identity act, P=I (edgeless graph) -> output == H
        rng = np.random.default_rng(0)
        graph = build_graph(4, [])
        origin = build_product("3x1", seed=1, origin_radius=0.8).components[0].origin
        h = random_batch(rng, origin, 4)
        h0 = random_batch(rng, origin, 4)
        layer = LayerParams([np.eye(4)], alpha=0.0, beta=1.0)
        out = hgc_layer(h, h0, graph, layer, 0, activation="identity")
        assert np.allclose(out.rows, h.rows, atol=1e-9)

    def test_alpha_one_ignores_current(self):
        rng = np.random.default_rng(1)
        graph = build_graph(5, [(0, 1), (1, 2), (3, 4)])
        origin = build_product("2x1", seed=2, origin_radius=0.5).components[0].origin
        h_a = random_batch(rng, origin, 5)
        h_b = random_batch(rng, origin, 5)
        h0 = random_batch(rng, origin, 5)
        layer = LayerParams([rng.normal(size=(3, 3))], alpha=1.0, beta=0.4)
        out_a = hgc_layer(h_a, h0, graph, layer, 0)
        out_b = hgc_layer(h_b, h0, graph, layer, 0)
        assert np.array_equal(out_a.rows, out_b.rows)

    def test_hand_composition_two_nodes(self):
        # step-by-step evaluation through the scalar Lorentz operations
        rng = np.random.default_rng(2)
        graph = build_graph(2, [(0, 1)])
        spec = build_product("2x1", seed=3, origin_radius=0.7)
        origin = spec.components[0].origin
        h = random_batch(rng, origin, 2)
        h0 = random_batch(rng, origin, 2)
        alpha, beta = 0.3, 0.4
        w = rng.normal(size=(3, 3))
        layer = LayerParams([w], alpha=alpha, beta=beta)

        got = hgc_layer(h, h0, graph, layer, 0, activation="relu").rows

        p = graph.adj_norm.toarray()
        mixed = (1.0 - beta) * np.eye(3) + beta * w
        relu = lambda t: np.maximum(t, 0.0)
        for i in range(2):
            tangents = [log_map(origin, LorentzPoint(h.rows[j])).coords for j in range(2)]
            agg = exp_map(origin, project_to_tangent(origin, p[i, 0] * tangents[0] + p[i, 1] * tangents[1]))
            a = lorentz_scalar_mul(1.0 - alpha, agg, origin)
            b = lorentz_scalar_mul(alpha, LorentzPoint(h0.rows[i]), origin)
            hbar = lorentz_add(a, b, origin)
            want = lorentz_activation(lorentz_matvec(mixed, hbar, origin), origin, relu)
            assert np.allclose(got[i], want.coords, atol=1e-8)

    def test_rows_stay_on_manifold(self):
        rng = np.random.default_rng(3)
        graph = build_graph(6, [(i, i + 1) for i in range(5)])
        origin = build_product("3x1", seed=4, origin_radius=0.6).components[0].origin
        h = random_batch(rng, origin, 6)
        h0 = random_batch(rng, origin, 6)
        layer = LayerParams([rng.normal(size=(4, 4))], alpha=0.2, beta=0.3)
        hgc_layer(h, h0, graph, layer, 0).validate()

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        graph = build_graph(3, [(0, 1)])
        origin = canonical_origin(2)
        h = random_batch(rng, origin, 2)
        layer = LayerParams([np.eye(3)], alpha=0.1, beta=0.1)
        with pytest.raises(DimensionError):
            hgc_layer(h, h, graph, layer, 0)


class TestHyperDrop:
    def test_zero_rate_identity(self):
        rng = np.random.default_rng(5)
        origin = canonical_origin(3)
        x = exp_map(origin, project_to_tangent(origin, rng.normal(size=4)))
        out = hyperdrop(x, NoiseSpec(0.0), np.random.default_rng(0), True, origin)
        assert np.array_equal(out.coords, x.coords)

    def test_eval_identity(self):
        rng = np.random.default_rng(6)
        origin = canonical_origin(3)
        x = exp_map(origin, project_to_tangent(origin, rng.normal(size=4)))
        out = hyperdrop(x, NoiseSpec(0.5), np.random.default_rng(0), False, origin)
        assert np.array_equal(out.coords, x.coords)

    def test_training_scales_geodesic(self):
        origin = canonical_origin(2)
        x = exp_map(origin, project_to_tangent(origin, np.array([0.0, 1.0, 0.0])))
        rng = np.random.default_rng(7)
        out = hyperdrop(x, NoiseSpec(0.5), rng, True, origin)
        xi = log_map(origin, out).coords[1]  # tangent recovered along the same axis
        assert xi != pytest.approx(1.0)

    def test_moment_statistics(self):
        rng = np.random.default_rng(8)
        for eta in (0.1, 0.5):
            draws = sample_noise(NoiseSpec(eta), rng, 100_000).ravel()
            assert draws.mean() == pytest.approx(1.0, abs=0.02)
            assert draws.var() == pytest.approx(eta / (1 - eta), rel=0.05)

    def test_per_component_granularity(self):
        rng = np.random.default_rng(9)
        draws = sample_noise(NoiseSpec(0.3, granularity="per_component"), rng, 50)
        assert draws.shape == (1, 1)

    def test_clamp_flag(self):
        rng = np.random.default_rng(10)
        draws = sample_noise(NoiseSpec(0.9, clamp_nonnegative=True), rng, 10_000)
        assert draws.min() >= 0.0

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            NoiseSpec(1.0)


class TestForward:
    def test_shapes_and_softmax_rows(self):
        ds = tree_dataset()
        cfg = make_config(ds, signature="2x1", layers=1)
        params = init_params(cfg)
        lp = forward(ds.features, ds.graph, cfg, params)
        assert lp.data.shape == (15, ds.classes)
        assert np.allclose(np.exp(lp.data).sum(axis=1), 1.0, atol=1e-9)

    def test_duplicated_component_matches(self):
        # two components sharing origin, input map, and weights stay identical
        ds = tree_dataset()
        base = build_product("2x1", seed=5, origin_radius=0.5)
        comp = base.components[0]
        from rhgcn.product import ProductSpec

        twin = ProductSpec((comp, comp), base.seed, base.origin_radius)
        cfg = ModelConfig(product=twin, in_dim=ds.feature_dim, classes=ds.classes,
                          layers=2, alpha=0.1, seed=0)
        params = init_params(cfg)
        shared_map = params.input_maps[0].data.copy()
        for m in params.input_maps:
            m.data = shared_map.copy()
        for layer in params.layers:
            shared_w = layer.weights[0].data.copy()
            for w in layer.weights:
                w.data = shared_w.copy()

        tangents = {}

        def hook(layer, comp_idx, rows):
            tangents.setdefault(layer, {})[comp_idx] = rows.copy()

        forward(ds.features, ds.graph, cfg, params, layer_hook=hook)
        for layer, per_comp in tangents.items():
            assert np.array_equal(per_comp[0], per_comp[1])

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        n = 10
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
        graph = build_graph(n, edges)
        feats = rng.normal(size=(n, 5))
        product = build_product("3x2", seed=6, origin_radius=0.5)
        cfg = ModelConfig(product=product, in_dim=5, classes=3, layers=3, alpha=0.2, seed=1)
        params = init_params(cfg)
        base = forward(feats, graph, cfg, params).data

        perm = rng.permutation(n)
        inv = np.argsort(perm)
        perm_graph = build_graph(n, [(int(inv[u]), int(inv[v])) for u, v in edges])
        permuted = forward(feats[perm], perm_graph, cfg, params).data
        assert np.allclose(permuted, base[perm], atol=1e-10)

    def test_eval_determinism_bitwise(self):
        ds = tree_dataset()
        cfg = make_config(ds, drop_rate=0.4)
        params = init_params(cfg)
        a = forward(ds.features, ds.graph, cfg, params, training=False).data
        b = forward(ds.features, ds.graph, cfg, params, training=False).data
        assert np.array_equal(a, b)

    def test_training_noise_changes_output(self):
        ds = tree_dataset()
        cfg = make_config(ds, drop_rate=0.4)
        params = init_params(cfg)
        params.classifier_w.data = np.random.default_rng(12).normal(
            size=params.classifier_w.data.shape)
        a = forward(ds.features, ds.graph, cfg, params, training=True,
                    rng=np.random.default_rng(0)).data
        b = forward(ds.features, ds.graph, cfg, params, training=False).data
        assert not np.allclose(a, b)

    def test_manifold_preservation_deep(self):
        ds = tree_dataset()
        cfg = make_config(ds, signature="2x2", layers=32, radius=0.5, seed=0)
        params = init_params(cfg)

        def hook(layer, comp, rows):
            q = (rows[:, 1:] ** 2).sum(axis=1) - rows[:, 0] ** 2
            assert np.abs(q + 1.0).max() < 1e-5

        forward(ds.features, ds.graph, cfg, params, layer_hook=hook)

    def test_residual_saturation_depth_independent(self):
        # alpha=1 with tied weights and tied beta: L=2 and L=8 agree
        ds = tree_dataset()

        def outputs(layers):
            cfg = make_config(ds, signature="2x1", layers=layers, alpha=1.0, seed=2)
            params = init_params(cfg)
            w = np.random.default_rng(3).normal(size=(3, 3))
            for layer in params.layers:
                layer.weights[0].data = w.copy()
                layer.beta = 0.3
            return forward(ds.features, ds.graph, cfg, params).data

        assert np.allclose(outputs(2), outputs(8), atol=1e-6)

    def test_dim_mismatch(self):
        ds = tree_dataset()
        cfg = make_config(ds)
        params = init_params(cfg)
        with pytest.raises(DimensionError):
            forward(ds.features[:, :2], ds.graph, cfg, params)


class TestLoss:
    def test_perfect_predictions(self):
        lp = np.log(np.array([[1 - 2e-12, 1e-12, 1e-12]]))
        assert float(loss_nll(lp, np.array([0]), np.array([0]))) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_predictions(self):
        c = 7
        lp = np.full((3, c), -math.log(c))
        val = loss_nll(lp, np.array([1, 2, 3]), np.arange(3))
        assert float(val) == pytest.approx(math.log(c), abs=1e-12)

    def test_hand_computed_three_nodes(self):
        lp = np.log(np.array([
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.25, 0.25, 0.5],
        ]))
        labels = np.array([0, 1, 2])
        want = -(math.log(0.7) + math.log(0.8) + math.log(0.5)) / 3.0
        assert float(loss_nll(lp, labels, np.arange(3))) == pytest.approx(want, abs=1e-12)

    def test_empty_idx(self):
        with pytest.raises(UsageError):
            loss_nll(np.zeros((2, 2)), np.zeros(2, dtype=int), np.array([], dtype=int))

    def test_accuracy(self):
        lp = np.log(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]))
        labels = np.array([0, 1, 1])
        assert accuracy(lp, labels, np.arange(3)) == pytest.approx(2 / 3)


class TestGradients:
    def test_model_gradcheck_small(self):
        ds = tree_dataset()
        cfg = make_config(ds, signature="2x2", layers=2, seed=3)
        params = init_params(cfg, zero_classifier=False)
        tensors = params.tensors()

        def f():
            lp = forward(ds.features, ds.graph, cfg, params, training=False)
            return loss_nll(lp, ds.labels, ds.splits["train"])

        res = ad.grad_check(f, tensors)
        assert res.max_rel_error < 1e-4
        assert res.checked > 0


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds = tree_dataset()
        cfg = make_config(ds, signature="2x2,3x1", layers=2, radius=0.9, seed=4)
        params = init_params(cfg)
        params.classifier_w.data += np.random.default_rng(5).normal(
            size=params.classifier_w.data.shape)
        p1 = tmp_path / "ck1.json"
        p2 = tmp_path / "ck2.json"
        save_checkpoint(p1, cfg, params)
        cfg2, params2 = load_checkpoint(p1)
        save_checkpoint(p2, cfg2, params2)
        assert p1.read_bytes() == p2.read_bytes()
        a = forward(ds.features, ds.graph, cfg, params).data
        b = forward(ds.features, ds.graph, cfg2, params2).data
        assert np.array_equal(a, b)

    def test_corrupted_rejected(self, tmp_path):
        from rhgcn.errors import FormatError

        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(FormatError):
            load_checkpoint(p)
        p.write_text("{}")
        with pytest.raises(FormatError):
            load_checkpoint(p)
