import json

import numpy as np
import pytest

from lmselab import losses as L
from lmselab.model import (
    CaeConfig,
    build_cae,
    forward,
    layer_shapes,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)
from lmselab.tensor import DimensionError, Tensor, no_grad

# counted by hand from the layer plan, latent 16:
#   encoder 160 + 4640 + 18496, bottleneck 16400 + 17408, decoder 18464 + 4624 + 145
PARAMS_LATENT16 = 80337


@pytest.fixture(scope="module")
def model():
    return build_cae(CaeConfig(latent_dim=16), seed=3)


class TestLayerPlan:
    def test_extents(self):
        cfg = CaeConfig()
        assert cfg.extents() == [28, 14, 7, 4]
        assert cfg.output_paddings() == [0, 1, 1]
        assert cfg.flat_dim == 1024

    def test_bottleneck_shapes(self, model):
        assert model.params["latent.weight"].shape == (1024, 16)
        assert model.params["expand.weight"].shape == (16, 1024)

    def test_conv_shapes(self):
        shapes = dict(layer_shapes(CaeConfig()))
        assert shapes["enc1.weight"] == (16, 1, 3, 3)
        assert shapes["enc3.weight"] == (64, 32, 3, 3)
        assert shapes["dec1.weight"] == (64, 32, 3, 3)
        assert shapes["dec3.weight"] == (16, 1, 3, 3)
        assert shapes["dec3.bias"] == (1,)

    def test_parameter_count(self, model):
        assert parameter_count(CaeConfig(latent_dim=16)) == PARAMS_LATENT16
        assert model.num_parameters() == PARAMS_LATENT16

    @pytest.mark.parametrize("latent", [1, 2, 4, 32])
    def test_parameter_count_scales_with_latent(self, latent):
        # each latent unit adds 1024 in, 1024 out weights and one bias
        delta = parameter_count(CaeConfig(latent_dim=latent)) - parameter_count(CaeConfig(latent_dim=16))
        assert delta == (latent - 16) * 2049

    @pytest.mark.parametrize("kw", [dict(latent_dim=0), dict(kernel=4), dict(output_activation="relu")])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            CaeConfig(**kw)


class TestBuild:
    def test_deterministic(self):
        a, b = build_cae(seed=7), build_cae(seed=7)
        for name in a.params:
            assert a.params[name].data.tobytes() == b.params[name].data.tobytes()

    def test_seed_matters(self):
        a, b = build_cae(seed=7), build_cae(seed=8)
        assert not np.array_equal(a.params["enc1.weight"].data, b.params["enc1.weight"].data)

    def test_init_ranges(self, model):
        w = model.params["enc2.weight"].data
        assert np.abs(w).max() <= np.sqrt(6.0 / (16 * 9))
        assert np.abs(w).max() > 0.9 * np.sqrt(6.0 / (16 * 9))
        assert not model.params["enc2.bias"].data.any()
        assert all(p.requires_grad for p in model.parameters())


class TestForward:
    def test_zeros_in_open_unit_interval(self, model):
        out = forward(model, np.zeros((3, 1, 28, 28))).data
        assert np.all(np.isfinite(out)) and out.min() > 0.0 and out.max() < 1.0

    def test_shape(self, model, rng):
        x = rng.uniform(size=(8, 1, 28, 28))
        assert forward(model, x).shape == (8, 1, 28, 28)
        assert model(x).shape == (8, 1, 28, 28)

    def test_encode_shape(self, model, rng):
        assert model.encode(Tensor(rng.uniform(size=(2, 1, 28, 28)))).shape == (2, 16)

    @pytest.mark.parametrize("shape", [(1, 28, 28), (2, 3, 28, 28), (2, 1, 32, 32)])
    def test_wrong_shape(self, model, shape):
        with pytest.raises(DimensionError):
            forward(model, np.zeros(shape))

    def test_batch_independence(self, model, rng):
        x = rng.uniform(size=(4, 1, 28, 28))
        with no_grad():
            full = forward(model, x).data
            one = forward(model, x[2:3]).data
        np.testing.assert_allclose(full[2:3], one, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["mse", "mae", "msle", "lmse"])
    def test_finite_loss_untrained(self, model, rng, kind):
        x = rng.uniform(size=(4, 1, 28, 28))
        loss = L.LossSpec(kind)(x, forward(model, x))
        assert np.isfinite(loss.item())
        model.zero_grad()
        loss.backward()
        assert all(p.grad is not None and np.all(np.isfinite(p.grad)) for p in model.parameters())
        model.zero_grad()

    def test_lmse_finite_at_eps_zero(self, model):
        # worst case target against a sigmoid output; error stays strictly below 1
        x = np.ones((2, 1, 28, 28))
        y = forward(model, np.zeros_like(x))
        assert np.isfinite(L.lmse(x, y, eps=1e-300).item())

    def test_gradient_matches_finite_differences(self, rng):
        m = build_cae(CaeConfig(latent_dim=4), seed=1)
        x = rng.uniform(size=(2, 1, 28, 28))
        loss_fn = lambda: L.lmse(x, forward(m, x)).item()
        m.zero_grad()
        L.lmse(x, forward(m, x)).backward()
        h = 1e-5
        for name, p in m.params.items():
            flat = p.data.reshape(-1)
            idx = rng.choice(flat.size, size=min(4, flat.size), replace=False)
            ana = p.grad.reshape(-1)[idx]
            num = np.empty(len(idx))
            for k, i in enumerate(idx):
                old = flat[i]
                flat[i] = old + h
                up = loss_fn()
                flat[i] = old - h
                dn = loss_fn()
                flat[i] = old
                num[k] = (up - dn) / (2 * h)
            scale = max(np.linalg.norm(ana), 1e-8)
            assert np.linalg.norm(ana - num) / scale < 1e-4, name


class TestCheckpoint:
    def test_round_trip(self, model, tmp_path, rng):
        save_checkpoint(model, tmp_path / "m.json")
        back = load_checkpoint(tmp_path / "m.json")
        assert back.config == model.config
        assert list(back.params) == list(model.params)
        for name in model.params:
            assert back.params[name].data.tobytes() == model.params[name].data.tobytes()
        x = rng.uniform(size=(2, 1, 28, 28))
        with no_grad():
            np.testing.assert_array_equal(forward(back, x).data, forward(model, x).data)

    def test_wrong_version(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(tmp_path / "m.json")

    def test_wrong_shape(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "m.json")
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["config"]["latent_dim"] = 8
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="shape"):
            load_checkpoint(tmp_path / "m.json")

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "m.json").write_text("{}")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "m.json")
