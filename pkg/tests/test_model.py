import numpy as np
import pytest
from scipy import integrate, stats

from latentiv.autodiff import Tensor, grad_check
from latentiv.errors import (NumericError, ShapeMismatchError, SpecError,
                             TrainingError)
from latentiv.model import (ModelParams, VaeConfig, encode, extract_iv,
                            init_params, kl_diag_gauss, latent_decorrelation,
                            model_forward, opr, total_loss, train)
from latentiv.scm import ScenarioSpec, generate_single_siv

TINY = VaeConfig(dim_z=1, dim_c=3, hidden=(8,), epochs=2, batch_size=64,
                 seed=0)


@pytest.fixture(scope="module")
def tiny_trained():
    ds = generate_single_siv(ScenarioSpec("single_siv", n=300, seed=0))
    return ds, train(ds, TINY)


class TestVaeConfig:
    def test_defaults(self):
        cfg = VaeConfig()
        assert (cfg.dim_z, cfg.dim_c) == (1, 10)
        assert cfg.hidden == (64, 64)
        assert cfg.alpha_w == cfg.alpha_y == 100.0
        assert cfg.opr_enabled and cfg.epochs == 100

    @pytest.mark.parametrize("kwargs", [
        {"dim_z": 0}, {"dim_c": 0}, {"batch_size": 1}, {"epochs": 0},
        {"outcome": "count"}, {"alpha_w": -1.0},
    ])
    def test_domain_validation(self, kwargs):
        with pytest.raises(SpecError):
            VaeConfig(**kwargs)

    def test_from_dict_normalizes_hidden(self):
        cfg = VaeConfig.from_dict({"hidden": [16, 16]})
        assert cfg.hidden == (16, 16)


class TestKlDiagGauss:
    def test_standard_normal_is_zero(self):
        assert kl_diag_gauss(np.zeros(3), np.ones(3)) == 0.0

    def test_hand_computed_value(self):
        # KL(N(0,4) || N(0,1)) = 0.5 * (4 - ln 4 - 1)
        assert kl_diag_gauss(np.array([0.0]), np.array([2.0])) == pytest.approx(
            0.8068528194400546, abs=1e-15)

    @pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (1.5, 0.7), (-2.0, 3.0),
                                          (0.3, 0.05)])
    def test_matches_numerical_quadrature(self, mu, sigma):
        p = stats.norm(mu, sigma)
        q = stats.norm(0.0, 1.0)

        def integrand(x):
            return p.pdf(x) * (p.logpdf(x) - q.logpdf(x))

        lo, hi = mu - 12 * sigma, mu + 12 * sigma
        numeric, _ = integrate.quad(integrand, lo, hi, limit=200)
        closed = kl_diag_gauss(np.array([mu]), np.array([sigma]))
        assert abs(closed - numeric) / max(abs(numeric), 1e-12) < 1e-6 \
            or abs(closed - numeric) < 1e-12

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(NumericError):
            kl_diag_gauss(np.zeros(2), np.array([1.0, 0.0]))

    def test_tensor_path_matches_numpy(self):
        mu = np.array([[0.5, -1.0]])
        sigma = np.array([[1.2, 0.8]])
        t = kl_diag_gauss(Tensor(mu), Tensor(sigma))
        assert float(t.data) == pytest.approx(kl_diag_gauss(mu[0], sigma[0]),
                                              abs=1e-12)

    def test_tensor_path_differentiable(self):
        mu = Tensor(np.array([[0.5, -1.0]]), requires_grad=True)
        sigma = Tensor(np.array([[1.2, 0.8]]), requires_grad=True)
        report = grad_check(lambda: kl_diag_gauss(mu, sigma), [mu, sigma],
                            h=1e-6)
        assert report.max_rel_error < 1e-6


class TestOpr:
    def test_hand_computed_mean_cosine(self):
        z = np.array([[1.0], [1.0], [1.0]])
        c = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        # cosines after zero-padding z: 1, 0, 1/sqrt(2)
        assert opr(z, c) == pytest.approx((1.0 + 0.0 + 1.0 / np.sqrt(2)) / 3,
                                          abs=1e-12)

    def test_orthogonal_rows_give_zero(self):
        z = np.array([[1.0, 0.0]])
        c = np.array([[0.0, 1.0]])
        assert opr(z, c) == 0.0

    def test_zero_norm_row_names_index(self):
        z = np.array([[1.0], [0.0]])
        c = np.ones((2, 2))
        with pytest.raises(NumericError, match="index 1"):
            opr(z, c)

    def test_differentiable(self):
        rng = np.random.default_rng(0)
        z = Tensor(rng.normal(size=(4, 1)), requires_grad=True)
        c = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        report = grad_check(lambda: opr(z, c), [z, c], h=1e-6)
        assert report.max_rel_error < 1e-6


class TestLatentDecorrelation:
    def test_perfectly_correlated_columns(self):
        z = np.array([[1.0], [2.0], [3.0]])
        assert latent_decorrelation(z, z) == pytest.approx(1.0, abs=1e-12)
        assert latent_decorrelation(z, -z) == pytest.approx(1.0, abs=1e-12)

    def test_uncorrelated_columns_give_zero(self):
        z = np.array([[1.0], [2.0], [3.0]])
        c = np.array([[0.0], [1.0], [0.0]])  # orthogonal to z after centering
        assert latent_decorrelation(z, c) == pytest.approx(0.0, abs=1e-12)

    def test_mean_over_column_pairs(self):
        z = np.array([[1.0], [2.0], [3.0]])
        c = np.column_stack([z[:, 0], [0.0, 1.0, 0.0]])
        assert latent_decorrelation(z, c) == pytest.approx(0.5, abs=1e-12)

    def test_scale_invariant(self):
        rng = np.random.default_rng(6)
        z, c = rng.normal(size=(20, 1)), rng.normal(size=(20, 3))
        assert latent_decorrelation(z, c) == pytest.approx(
            latent_decorrelation(7.0 * z, 0.1 * c + 5.0), abs=1e-12)

    def test_constant_column_rejected(self):
        z = np.array([[1.0], [2.0], [3.0]])
        with pytest.raises(NumericError, match="column 0"):
            latent_decorrelation(z, np.ones((3, 1)))

    def test_differentiable(self):
        rng = np.random.default_rng(7)
        z = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
        c = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
        report = grad_check(lambda: latent_decorrelation(z, c), [z, c], h=1e-6)
        assert report.max_rel_error < 1e-6


class TestModelForward:
    def setup_method(self):
        self.cfg = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), seed=3)
        self.params = init_params(self.cfg, x_dim=5)
        rng = np.random.default_rng(3)
        self.x = rng.normal(size=(6, 5))
        self.w = rng.integers(0, 2, size=6).astype(float)
        self.y = rng.normal(size=6)
        self.nz = rng.standard_normal((6, 1))
        self.nc = rng.standard_normal((6, 2))

    def test_shapes(self):
        out = model_forward(self.params, self.x, self.w, self.y,
                            self.nz, self.nc)
        assert out.z.data.shape == (6, 1)
        assert out.c.data.shape == (6, 2)
        assert out.x_mean.data.shape == (6, 5)
        assert out.w_logit.data.shape == (6, 1)
        assert out.y_mean.data.shape == (6, 1)
        assert np.all(out.x_sigma.data > 0) and np.all(out.y_sigma.data > 0)
        assert np.all((out.w_prob.data > 0) & (out.w_prob.data < 1))

    def test_outcome_head_never_sees_z(self):
        # changing only the z-noise must leave the outcome prediction intact
        out_a = model_forward(self.params, self.x, self.w, self.y,
                              self.nz, self.nc)
        out_b = model_forward(self.params, self.x, self.w, self.y,
                              self.nz + 10.0, self.nc)
        assert not np.allclose(out_a.z.data, out_b.z.data)
        assert np.array_equal(out_a.y_mean.data, out_b.y_mean.data)
        assert np.array_equal(out_a.y_sigma.data, out_b.y_sigma.data)

    def test_binary_outcome_uses_logit_head(self):
        cfg = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), outcome="binary", seed=3)
        params = init_params(cfg, x_dim=5)
        out = model_forward(params, self.x, self.w, (self.y > 0).astype(float),
                            self.nz, self.nc)
        assert out.y_logit is not None and out.y_mean is None

    def test_bad_noise_shape(self):
        with pytest.raises(ShapeMismatchError):
            model_forward(self.params, self.x, self.w, self.y,
                          self.nz[:3], self.nc)


class TestTotalLoss:
    def _setup(self, **cfg_kwargs):
        cfg = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), seed=5, **cfg_kwargs)
        params = init_params(cfg, x_dim=4)
        rng = np.random.default_rng(5)
        data = (rng.normal(size=(5, 4)),
                rng.integers(0, 2, size=5).astype(float),
                rng.normal(size=5),
                rng.standard_normal((5, 1)), rng.standard_normal((5, 2)))
        return params, data

    def test_gradients_match_central_differences(self):
        params, data = self._setup()
        report = grad_check(lambda: total_loss(params, *data),
                            params.tensors(), h=1e-5)
        assert report.max_rel_error < 1e-4

    def test_gradients_binary_outcome(self):
        params, data = self._setup(outcome="binary")
        x, w, y, nz, nc = data
        y = (y > 0).astype(float)
        report = grad_check(lambda: total_loss(params, x, w, y, nz, nc),
                            params.tensors(), h=1e-5)
        assert report.max_rel_error < 1e-4

    def test_opr_toggle_shifts_loss_by_penalty(self):
        params, data = self._setup()
        on = float(total_loss(params, *data).data)
        out = model_forward(params, *data)
        params.config = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), seed=5,
                                  opr_enabled=False)
        off = float(total_loss(params, *data).data)
        penalty = (float(opr(out.z, out.c).data)
                   + 10.0 * latent_decorrelation(out.z.data, out.c.data))
        assert on - off == pytest.approx(penalty, abs=1e-12)

    def test_alpha_scaling_is_linear_in_heads(self):
        # doubling alpha_w adds exactly -log q(W|Z,C) once more
        params, data = self._setup()
        base = float(total_loss(params, *data).data)
        params.config = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), seed=5,
                                  alpha_w=200.0)
        doubled = float(total_loss(params, *data).data)
        params.config = VaeConfig(dim_z=1, dim_c=2, hidden=(4,), seed=5,
                                  alpha_w=0.0)
        off = float(total_loss(params, *data).data)
        assert doubled - base == pytest.approx(base - off, rel=1e-9)


class TestTrain:
    def test_loss_trace_and_decrease(self, tiny_trained):
        ds, params = tiny_trained
        assert len(params.loss_trace) == TINY.epochs
        assert all(np.isfinite(v) for v in params.loss_trace)

    def test_longer_training_reduces_loss(self):
        ds = generate_single_siv(ScenarioSpec("single_siv", n=300, seed=0))
        cfg = VaeConfig(dim_z=1, dim_c=3, hidden=(8,), epochs=15,
                        batch_size=64, seed=0)
        params = train(ds, cfg)
        assert params.loss_trace[-1] < params.loss_trace[0]

    def test_deterministic(self):
        ds = generate_single_siv(ScenarioSpec("single_siv", n=300, seed=1))
        a = train(ds, TINY)
        b = train(ds, TINY)
        assert a.loss_trace == b.loss_trace
        for ta, tb in zip(a.tensors(), b.tensors()):
            assert np.array_equal(ta.data, tb.data)

    def test_binary_outcome_requires_01(self):
        ds = generate_single_siv(ScenarioSpec("single_siv", n=300, seed=0))
        cfg = VaeConfig(dim_z=1, dim_c=3, hidden=(8,), epochs=1,
                        batch_size=64, outcome="binary", seed=0)
        with pytest.raises(SpecError):
            train(ds, cfg)

    def test_constant_column_rejected(self):
        ds = generate_single_siv(ScenarioSpec("single_siv", n=100, seed=0))
        ds.x[:, 2] = 1.0
        with pytest.raises(SpecError):
            train(ds, TINY)


class TestEncodeExtract:
    def test_extract_iv_is_standardized(self, tiny_trained):
        ds, params = tiny_trained
        z = extract_iv(params, ds)
        assert z.shape == (ds.n, TINY.dim_z)
        assert np.allclose(z.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(z.std(axis=0), 1.0, atol=1e-10)

    def test_encode_width_mismatch(self, tiny_trained):
        _, params = tiny_trained
        with pytest.raises(ShapeMismatchError):
            encode(params, np.zeros((4, 3)))

    def test_untrained_params_rejected(self):
        params = init_params(TINY, x_dim=8)
        with pytest.raises(ShapeMismatchError):
            encode(params, np.zeros((4, 8)))


class TestSaveLoad:
    def test_roundtrip_preserves_posteriors(self, tiny_trained, tmp_path):
        ds, params = tiny_trained
        path = tmp_path / "model.json"
        params.save(path)
        loaded = ModelParams.load(path)
        mu_z_a, mu_c_a = encode(params, ds.x)
        mu_z_b, mu_c_b = encode(loaded, ds.x)
        assert np.array_equal(mu_z_a, mu_z_b)
        assert np.array_equal(mu_c_a, mu_c_b)
        assert loaded.config == params.config
        assert loaded.loss_trace == params.loss_trace

    def test_rejects_foreign_blob(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(SpecError):
            ModelParams.load(path)
