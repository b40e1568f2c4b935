import math

import numpy as np
import pytest

from rhgcn.errors import DimensionError, NumericError
from rhgcn.lorentz import (
    LorentzPoint,
    TangentVector,
    canonical_origin,
    exp_map,
    log_map,
    lorentz_inner,
    project_to_manifold,
)
from rhgcn.manifold_ops import (
    LorentzBatch,
    dist_rows,
    exp_rows,
    inner_rows,
    lift_features,
    log_rows,
    lorentz_activation,
    lorentz_add,
    lorentz_matvec,
    lorentz_scalar_mul,
    project_tangent_rows,
    renorm_rows,
    transport_rows,
)


def random_point(rng, d):
    return project_to_manifold(np.concatenate([[0.0], rng.normal(size=d)]))


class TestMatvec:
    def test_identity(self):
        rng = np.random.default_rng(0)
        o = canonical_origin(3)
        x = random_point(rng, 3)
        out = lorentz_matvec(np.eye(4), x, o)
        assert np.allclose(out.coords, x.coords, atol=1e-9)

    def test_zero_matrix(self):
        rng = np.random.default_rng(1)
        o = canonical_origin(2)
        x = random_point(rng, 2)
        out = lorentz_matvec(np.zeros((3, 3)), x, o)
        assert np.allclose(out.coords, o.coords, atol=1e-12)

    def test_double_identity_scales_geodesic(self):
        o = canonical_origin(2)
        x = exp_map(o, TangentVector([0.0, 1, 0], o))
        out = lorentz_matvec(2.0 * np.eye(3), x, o)
        assert np.allclose(out.coords, [math.cosh(2), math.sinh(2), 0], atol=1e-9)

    def test_shape_mismatch(self):
        o = canonical_origin(2)
        with pytest.raises(DimensionError):
            lorentz_matvec(np.eye(4), o, o)

    def test_output_on_manifold(self):
        rng = np.random.default_rng(2)
        o = canonical_origin(4)
        for _ in range(20):
            x = random_point(rng, 4)
            out = lorentz_matvec(rng.normal(size=(5, 5)), x, o)
            out.validate()


class TestScalarMul:
    def test_one(self):
        rng = np.random.default_rng(3)
        o = canonical_origin(3)
        x = random_point(rng, 3)
        assert np.allclose(lorentz_scalar_mul(1.0, x, o).coords, x.coords, atol=1e-9)

    def test_zero(self):
        rng = np.random.default_rng(4)
        o = canonical_origin(3)
        x = random_point(rng, 3)
        assert np.allclose(lorentz_scalar_mul(0.0, x, o).coords, o.coords, atol=1e-12)

    def test_two_scales_geodesic(self):
        o = canonical_origin(2)
        x = LorentzPoint([math.cosh(1), math.sinh(1), 0])
        out = lorentz_scalar_mul(2.0, x, o)
        assert np.allclose(out.coords, [math.cosh(2), math.sinh(2), 0], atol=1e-9)


class TestAdd:
    def test_right_origin_identity(self):
        rng = np.random.default_rng(5)
        o = canonical_origin(3)
        x = random_point(rng, 3)
        assert np.allclose(lorentz_add(x, o, o).coords, x.coords, atol=1e-7)

    def test_left_origin_identity(self):
        rng = np.random.default_rng(6)
        o = canonical_origin(3)
        y = random_point(rng, 3)
        assert np.allclose(lorentz_add(o, y, o).coords, y.coords, atol=1e-7)

    def test_collinear_composition(self):
        o = canonical_origin(2)
        x = exp_map(o, TangentVector([0.0, 1, 0], o))
        out = lorentz_add(x, x, o)
        assert np.allclose(out.coords, [math.cosh(2), math.sinh(2), 0], atol=1e-9)


class TestActivation:
    def test_identity(self):
        rng = np.random.default_rng(7)
        o = canonical_origin(3)
        x = random_point(rng, 3)
        out = lorentz_activation(x, o, lambda t: t)
        assert np.allclose(out.coords, x.coords, atol=1e-9)

    def test_relu_fixed_region(self):
        o = canonical_origin(2)
        x = exp_map(o, TangentVector([0.0, 0.5, 2.0], o))
        out = lorentz_activation(x, o, lambda t: np.maximum(t, 0.0))
        assert np.allclose(out.coords, x.coords, atol=1e-9)

    def test_relu_clips_negative_component(self):
        o = canonical_origin(2)
        x = exp_map(o, TangentVector([0.0, -1.0, 2.0], o))
        expected = exp_map(o, TangentVector([0.0, 0.0, 2.0], o))
        out = lorentz_activation(x, o, lambda t: np.maximum(t, 0.0))
        assert np.allclose(out.coords, expected.coords, atol=1e-9)


class TestLift:
    def test_closed_form(self):
        out = lift_features(np.array([3.0, 4.0]))
        s5 = math.sinh(5.0)
        assert np.allclose(out.coords, [math.cosh(5.0), 0.6 * s5, 0.8 * s5], rtol=1e-12)

    def test_zero_features(self):
        out = lift_features(np.zeros(4))
        assert np.array_equal(out.coords, canonical_origin(4).coords)

    def test_manifold_constraint(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            out = lift_features(rng.normal(size=6))
            out.validate()

    def test_log_recovers_direction(self):
        rng = np.random.default_rng(9)
        o = canonical_origin(5)
        for _ in range(50):
            x = rng.normal(size=5)
            back = log_map(o, lift_features(x))
            assert np.allclose(back.coords[1:], x, atol=1e-6)
            assert abs(back.coords[0]) < 1e-9

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            lift_features(np.array([np.nan, 1.0]))


class TestBatchedAgainstScalar:
    """The row-wise maps must agree with the scalar reference ops."""

    def setup_method(self):
        rng = np.random.default_rng(10)
        self.rng = rng
        self.o = random_point(rng, 3)
        self.points = [random_point(rng, 3) for _ in range(6)]
        self.rows = np.stack([p.coords for p in self.points])
        self.orow = self.o.coords[None, :]

    def test_inner(self):
        got = np.asarray(inner_rows(self.rows, self.rows)).ravel()
        want = [lorentz_inner(p.coords, p.coords) for p in self.points]
        assert np.allclose(got, want, atol=1e-12)

    def test_log(self):
        got = np.asarray(log_rows(self.orow, self.rows))
        for i, p in enumerate(self.points):
            assert np.allclose(got[i], log_map(self.o, p).coords, atol=1e-10)

    def test_exp(self):
        tangents = np.asarray(log_rows(self.orow, self.rows))
        got = np.asarray(exp_rows(self.orow, tangents))
        for i, p in enumerate(self.points):
            assert np.allclose(got[i], p.coords, atol=1e-9)

    def test_dist(self):
        got = np.asarray(dist_rows(self.orow, self.rows)).ravel()
        for i, p in enumerate(self.points):
            from rhgcn.lorentz import lorentz_distance

            assert got[i] == pytest.approx(lorentz_distance(self.o, p), abs=1e-10)

    def test_transport(self):
        from rhgcn.lorentz import parallel_transport, project_to_tangent

        v = project_to_tangent(self.o, self.rng.normal(size=4))
        vrows = np.broadcast_to(v.coords, (6, 4))
        got = np.asarray(transport_rows(self.orow, self.rows, vrows))
        for i, p in enumerate(self.points):
            want = parallel_transport(self.o, p, v).coords
            assert np.allclose(got[i], want, atol=1e-9)

    def test_renorm(self):
        raw = self.rng.normal(size=(5, 4))
        out = np.asarray(renorm_rows(raw))
        q = (out[:, 1:] ** 2).sum(axis=1) - out[:, 0] ** 2
        assert np.allclose(q, -1.0, atol=1e-12)

    def test_project_tangent(self):
        raw = self.rng.normal(size=(6, 4))
        out = np.asarray(project_tangent_rows(self.rows, raw))
        ips = np.asarray(inner_rows(self.rows, out)).ravel()
        assert np.abs(ips).max() < 1e-9


class TestLorentzBatch:
    def test_validate(self):
        o = canonical_origin(2)
        rows = np.stack([o.coords, [math.cosh(1), math.sinh(1), 0]])
        LorentzBatch(rows, o).validate()
        with pytest.raises(NumericError):
            LorentzBatch(rows * 1.5, o).validate()

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            LorentzBatch(np.ones((2, 4)), canonical_origin(2))
