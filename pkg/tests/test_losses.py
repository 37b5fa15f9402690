import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lmselab.losses import (
    LossDomainError,
    LossSpec,
    base_elements,
    fl_transform,
    grad_lmse,
    grad_mse,
    lmse,
    mae,
    mse,
    msle,
    surface_grid,
)
from lmselab.tensor import DimensionError, Tensor, numeric_grad

unit = st.floats(0.0, 1.0, allow_nan=False)
unit_arrays = st.integers(1, 12).flatmap(
    lambda n: st.tuples(arrays(np.float64, n, elements=unit), arrays(np.float64, n, elements=unit))
)


class TestValues:
    @pytest.mark.parametrize("fn", [mse, mae, msle, lambda y, p: lmse(y, p, 0.0)])
    def test_zero_on_identity(self, fn, rng):
        y = rng.uniform(size=10)
        assert float(fn(y, y.copy())) == 0.0

    def test_mse(self):
        assert float(mse([1.0, 0.0], [0.5, 0.5])) == 0.25
        assert float(mse([1.0], [0.0])) == 1.0

    def test_mae(self):
        assert float(mae([1.0, 0.0], [0.5, 0.5])) == 0.5
        assert float(mae([1.0], [0.0])) == 1.0

    def test_msle(self):
        assert float(msle([math.e - 1.0], [0.0])) == pytest.approx(1.0, abs=1e-15)
        assert float(msle([0.0], [0.0])) == 0.0

    def test_msle_domain(self):
        with pytest.raises(LossDomainError):
            msle([-1.0], [0.0])

    def test_lmse_hand_value(self):
        assert float(lmse([1.0], [0.5], 0.0)) == pytest.approx(0.2876820724517809, abs=1e-12)

    def test_lmse_ceiling(self):
        assert float(lmse([1.0], [0.0], 1e-7)) == pytest.approx(16.1181, abs=1e-4)
        assert float(lmse([1.0], [0.0], 1e-7)) == pytest.approx(-math.log(1e-7), rel=1e-7)

    def test_lmse_domain_error_names_element(self):
        with pytest.raises(LossDomainError) as err:
            lmse([0.0, 0.0, 3.0], [0.0, 0.0, 0.5])
        assert err.value.index == (2,)

    @pytest.mark.parametrize("fn", [mse, mae, msle, lmse])
    def test_shape_mismatch(self, fn):
        with pytest.raises(DimensionError):
            fn([0.1, 0.2], [0.1])

    def test_lmse_range(self, rng):
        eps = 1e-3
        y, p = rng.uniform(size=500), rng.uniform(size=500)
        per = -np.log(1 + eps - (y - p) ** 2)
        assert per.min() >= -math.log(1 + eps) and per.max() <= -math.log(eps)


class TestFlipAndLog:
    def test_all_zero(self):
        assert float(fl_transform(np.zeros(5), 1e-7, scale_trick=True)) == 0.0
        assert float(fl_transform(np.zeros(5), 1e-7, scale_trick=False)) == pytest.approx(0.0, abs=1e-6)

    def test_scale_trick_hand_value(self):
        # scaled [0.2475, 0.495, 0.99]
        expected = np.mean([-math.log(0.7525), -math.log(0.505), -math.log(0.01)])
        out = float(fl_transform([1.0, 2.0, 4.0], 0.01, scale_trick=True))
        assert out == pytest.approx(expected, rel=1e-12)
        assert out == pytest.approx(1.85757, abs=1e-5)

    @given(unit_arrays, st.floats(1e-9, 0.5))
    def test_fl_of_squared_error_is_lmse(self, pair, eps):
        y, p = pair
        a = float(fl_transform(base_elements("mse", y, p), eps, scale_trick=False))
        b = float(lmse(y, p, eps))
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15)

    def test_negative_base(self):
        with pytest.raises(LossDomainError):
            fl_transform([0.1, -0.1], scale_trick=True)

    def test_unscaled_base_above_one(self):
        with pytest.raises(LossDomainError):
            fl_transform([0.5, 1.5], scale_trick=False)

    @given(arrays(np.float64, st.integers(1, 40), elements=st.floats(0.0, 1e12)), st.floats(1e-12, 0.5))
    def test_scaled_output_bounded(self, base, eps):
        out = float(fl_transform(base, eps, scale_trick=True))
        assert math.isfinite(out) and 0.0 <= out <= -math.log(eps)

    def test_peak_is_treated_as_constant(self):
        base = Tensor([1.0, 3.0], requires_grad=True)
        eps = 0.1
        fl_transform(base, eps, scale_trick=True).backward()
        # d/dL_i of mean(-log(1 - L_i * (1 - eps) / peak)) with peak = 3
        c = (1 - eps) / 3.0
        expected = [c / (1 - c * 1.0) / 2, c / (1 - c * 3.0) / 2]
        np.testing.assert_allclose(base.grad, expected, rtol=1e-12)

    def test_lossspec_fl_mae_trains(self):
        y = Tensor(np.array([0.0, 1.0, 0.5]))
        p = Tensor(np.array([0.2, 0.6, 0.5]), requires_grad=True)
        LossSpec("fl", inner="mae", scale_trick=True)(y, p).backward()
        assert p.grad is not None and np.all(np.isfinite(p.grad))


class TestGradients:
    def test_zero_at_identity(self, rng):
        y = rng.uniform(size=7)
        assert not grad_mse(y, y).any()
        assert not grad_lmse(y, y).any()

    def test_hand_values(self):
        assert grad_mse([1.0], [0.5]).tolist() == [-1.0]
        assert grad_lmse([1.0], [0.5], 0.0)[0] == pytest.approx(-1.0 / 0.75, abs=1e-15)

    def test_grad_mse_matches_autodiff(self, rng):
        for _ in range(20):
            y, p = rng.uniform(size=(3, 4)), rng.uniform(size=(3, 4))
            pt = Tensor(p, requires_grad=True)
            mse(y, pt).backward()
            np.testing.assert_allclose(pt.grad, grad_mse(y, p), rtol=1e-12, atol=0)

    def test_grad_lmse_matches_autodiff(self, rng):
        for _ in range(20):
            y, p = rng.uniform(size=(3, 4)), rng.uniform(size=(3, 4))
            pt = Tensor(p, requires_grad=True)
            lmse(y, pt, 1e-7).backward()
            np.testing.assert_allclose(pt.grad, grad_lmse(y, p, 1e-7), rtol=1e-12, atol=0)

    def test_grad_lmse_matches_finite_differences(self):
        r = np.random.default_rng(99)
        for _ in range(100):
            y, p = r.uniform(0.05, 0.95, 6), r.uniform(0.05, 0.95, 6)
            num = numeric_grad(lambda q: lmse(y, q, 1e-7), p, 1e-5)
            ana = grad_lmse(y, p, 1e-7)
            assert np.linalg.norm(ana - num) / np.linalg.norm(ana) < 1e-6

    def test_grad_lmse_domain(self):
        with pytest.raises(LossDomainError):
            grad_lmse([2.0], [0.0])


class TestProperties:
    @given(st.floats(0.0, 1.0, exclude_max=True))
    def test_lmse_dominates_mse(self, e):
        lm = -math.log1p(-e)
        assert lm >= e
        if e > 1e-8:  # below this the two agree to double precision
            assert lm > e

    @given(st.floats(0.0, 1.0, exclude_max=True), st.floats(0.0, 0.5))
    def test_gradient_ratio(self, e, eps):
        ratio = 1.0 / (1.0 + eps - e)
        assert ratio >= 1.0 / (1.0 + eps) > 0

    @settings(max_examples=200)
    @given(unit_arrays)
    def test_gradient_ratio_elementwise(self, pair):
        y, p = pair
        gm, gl = grad_mse(y, p), grad_lmse(y, p, 1e-12)
        nz = gm != 0
        assert np.all(np.sign(gm) == np.sign(gl))
        # ratio is 1 / (1 + eps - e) >= 1 / (1 + eps)
        assert np.all(np.abs(gl[nz]) * (1 + 1e-12) >= np.abs(gm[nz]) * (1 - 1e-15))

    def test_monotone_in_error(self):
        e = np.linspace(0, 0.999, 1000)
        assert np.all(np.diff(-np.log(1 - e)) > 0)
        assert np.all(np.diff(e) > 0)

    @given(unit_arrays)
    def test_nonnegative_and_zero_iff_equal(self, pair):
        y, p = pair
        for fn in (mse, mae, msle):
            v = float(fn(y, p))
            assert v >= 0.0
            if np.array_equal(y, p):
                assert v == 0.0
        # with eps > 0 the floor sits at -log(1 + eps) instead of 0
        assert float(lmse(y, p, 1e-9)) >= -math.log1p(1e-9) - 1e-15
        if not np.array_equal(y, p):
            assert float(mae(y, p)) > 0.0


class TestLossSpec:
    def test_defaults(self):
        s = LossSpec("lmse")
        assert s.eps == 1e-7 and s.ceiling == pytest.approx(16.1181, abs=1e-4)

    @pytest.mark.parametrize("bad", [dict(kind="huber"), dict(kind="lmse", eps=0.0), dict(kind="fl", inner="lmse")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            LossSpec(**bad)

    @pytest.mark.parametrize("kind", ["mse", "mae", "msle", "lmse"])
    def test_dispatch(self, kind, rng):
        y, p = rng.uniform(size=5), rng.uniform(size=5)
        direct = {"mse": mse, "mae": mae, "msle": msle, "lmse": lmse}[kind]
        assert float(LossSpec(kind)(y, p)) == float(direct(y, p))


class TestSurface:
    def test_mse_diagonal_is_zero(self):
        g = surface_grid("mse", "loss", 21)
        assert not np.diag(g.z).any()

    def test_lmse_corner(self):
        g = surface_grid("lmse", "loss", 11, eps=1e-7)
        assert g.z[0, -1] == pytest.approx(16.1181, abs=1e-4)
        assert not g.clipped.any()

    def test_gradient_values_unclipped(self):
        gm = surface_grid("mse", "gradient", 3, clip=10.0)
        gl = surface_grid("lmse", "gradient", 3, clip=10.0, eps=1e-12)
        # index 2 -> y=1, index 1 -> yhat=0.5
        assert gm.z[2, 1] == pytest.approx(-1.0, abs=1e-15)
        assert gl.z[2, 1] == pytest.approx(-1.0 / 0.75, abs=1e-9)
        assert not gm.clipped[2, 1] and not gl.clipped[2, 1]

    def test_clipping_flags(self):
        g = surface_grid("lmse", "gradient", 101, clip=10.0)
        assert g.clipped.any()
        assert np.all(np.abs(g.z) <= 10.0)
        np.testing.assert_array_equal(np.abs(g.z[g.clipped]), 10.0)

    def test_lmse_gradient_steeper(self):
        gm = surface_grid("mse", "gradient", 41)
        gl = surface_grid("lmse", "gradient", 41)
        assert np.all(np.abs(gl.z) >= np.abs(gm.z) - 1e-12)

    def test_resolution_guard(self):
        with pytest.raises(ValueError):
            surface_grid("mse", "loss", 1)

    def test_csv(self, tmp_path):
        g = surface_grid("lmse", "gradient", 4, clip=1.0)
        path = tmp_path / "s.csv"
        g.to_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["y", "yhat", "z", "clipped"]
        assert len(rows) == 1 + 16
        vals = np.array([[float(v) for v in r] for r in rows[1:]])
        np.testing.assert_array_equal(vals[:, 2].reshape(4, 4), g.z)
        assert vals[:, 3].sum() == g.clipped.sum()
