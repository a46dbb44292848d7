import numpy as np
import pytest

from latentiv.errors import SpecError, WeakInstrumentError
from latentiv.estimators import (NUISANCE_REGISTRY, estimate_effect, ortho_iv,
                                 tsls, wald_ratio)
from latentiv.model import VaeConfig
from latentiv.scm import ScenarioSpec, generate_single_siv


def _confounded_iv_data(n=20_000, seed=0):
    """y = 1 + 2*w + u with w driven by both the instrument z and u."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    u = rng.normal(size=n)
    w = (z + u + rng.normal(size=n) > 0).astype(float)
    y = 1.0 + 2.0 * w + u + 0.5 * rng.normal(size=n)
    return z, w, y, u


class TestWaldRatio:
    def test_exact_on_noiseless_linear(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=50)
        w = z  # treatment equals instrument
        y = 4.0 - 3.0 * w
        assert wald_ratio(z, w, y) == pytest.approx(-3.0, abs=1e-12)

    def test_recovers_effect_under_confounding(self):
        z, w, y, _ = _confounded_iv_data()
        assert wald_ratio(z, w, y) == pytest.approx(2.0, abs=0.1)

    def test_affine_invariance_in_instrument(self):
        z, w, y, _ = _confounded_iv_data(n=500, seed=1)
        base = wald_ratio(z, w, y)
        assert abs(wald_ratio(3.7 * z - 11.0, w, y) - base) < 1e-10
        assert abs(wald_ratio(-0.2 * z + 5.0, w, y) - base) < 1e-10

    def test_weak_instrument_raises(self):
        rng = np.random.default_rng(2)
        w = rng.integers(0, 2, 100).astype(float)
        with pytest.raises(WeakInstrumentError):
            wald_ratio(np.full(100, 3.0), w, rng.normal(size=100))

    def test_too_few_observations(self):
        with pytest.raises(SpecError):
            wald_ratio([1.0, 2.0], [0.0, 1.0], [0.0, 1.0])


class TestTsls:
    def test_matches_wald_when_just_identified(self):
        # with no covariates TSLS and the Wald ratio are algebraically equal
        z, w, y, _ = _confounded_iv_data(n=2_000, seed=3)
        report = tsls(z, w, y)
        assert report.beta_hat == pytest.approx(wald_ratio(z, w, y), abs=1e-10)

    def test_exact_on_noiseless_outcome(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=200)
        w = (z + rng.normal(size=200) > 0).astype(float)
        y = 1.0 + 2.0 * w
        assert tsls(z, w, y).beta_hat == pytest.approx(2.0, abs=1e-9)

    def test_covariates_improve_precision(self):
        z, w, y, u = _confounded_iv_data(n=20_000, seed=5)
        plain = tsls(z, w, y).beta_hat
        adjusted = tsls(z, w, y, covariates=u).beta_hat
        assert abs(adjusted - 2.0) <= abs(plain - 2.0) + 0.05
        assert adjusted == pytest.approx(2.0, abs=0.1)

    def test_first_stage_f_reported(self):
        z, w, y, _ = _confounded_iv_data(n=2_000, seed=6)
        report = tsls(z, w, y)
        assert report.extras["first_stage_f"] > 100.0
        assert 0.0 < report.first_stage_strength <= 1.0

    def test_weak_instrument_raises(self):
        rng = np.random.default_rng(7)
        w = rng.integers(0, 2, 500).astype(float)
        with pytest.raises(WeakInstrumentError):
            tsls(np.full(500, 2.0), w, rng.normal(size=500))


class TestOrthoIv:
    def test_recovers_effect_with_observed_confounder(self):
        z, w, y, u = _confounded_iv_data()
        report = ortho_iv(z, w, y, u[:, None], folds=2)
        assert report.beta_hat == pytest.approx(2.0, abs=0.1)
        assert report.method == "ortho_iv"
        assert report.folds == 2 and report.nuisance == "ridge"

    def test_affine_invariance_in_instrument(self):
        z, w, y, u = _confounded_iv_data(n=2_000, seed=8)
        base = ortho_iv(z, w, y, u[:, None]).beta_hat
        shifted = ortho_iv(2.5 * z + 7.0, w, y, u[:, None]).beta_hat
        assert abs(shifted - base) < 1e-10

    def test_fold_label_permutation_invariance(self):
        z, w, y, u = _confounded_iv_data(n=1_000, seed=9)
        labels = np.arange(1_000) % 3
        a = ortho_iv(z, w, y, u[:, None], folds=3, fold_assignment=labels)
        b = ortho_iv(z, w, y, u[:, None], folds=3,
                     fold_assignment=(labels + 7) * 13)
        assert a.beta_hat == b.beta_hat

    def test_mean_nuisance_reduces_to_wald(self):
        # residualizing on nothing but fold means barely changes the ratio
        z, w, y, _ = _confounded_iv_data(n=10_000, seed=10)
        report = ortho_iv(z, w, y, np.zeros((10_000, 1)), nuisance="mean")
        assert report.beta_hat == pytest.approx(wald_ratio(z, w, y), abs=0.05)

    def test_validation(self):
        z, w, y, u = _confounded_iv_data(n=100, seed=11)
        with pytest.raises(SpecError):
            ortho_iv(z, w, y, u[:, None], folds=1)
        with pytest.raises(SpecError):
            ortho_iv(z, w, y, u[:, None], folds=101)
        with pytest.raises(SpecError):
            ortho_iv(z, w, y, u[:, None], nuisance="forest")
        with pytest.raises(SpecError):
            ortho_iv(z, w, y, u[:, None], folds=2,
                     fold_assignment=np.zeros(100))

    def test_registry_contents(self):
        assert set(NUISANCE_REGISTRY) == {"ridge", "mean"}


@pytest.fixture(scope="module")
def tiny_report():
    ds = generate_single_siv(ScenarioSpec("single_siv", n=400, seed=0))
    cfg = VaeConfig(dim_z=1, dim_c=3, hidden=(8,), epochs=3,
                    batch_size=128, seed=0)
    return ds, estimate_effect(ds, cfg)


class TestEstimateEffect:
    def test_report_fields(self, tiny_report):
        ds, report = tiny_report
        assert report.method == "divvae+ortho_iv"
        assert np.isfinite(report.beta_hat)
        assert report.bias_percent == pytest.approx(
            abs((report.beta_hat - 2.0) / 2.0) * 100.0, abs=1e-12)
        assert len(report.pcc_profile) == 3
        assert 0.0 <= report.extras["mean_abs_pcc"] <= 1.0
        assert "final_epoch_loss" in report.extras
        assert report.runtime_seconds > 0

    def test_unknown_estimator_and_conditioning(self, tiny_report):
        ds, _ = tiny_report
        cfg = VaeConfig(epochs=1, seed=0)
        with pytest.raises(SpecError):
            estimate_effect(ds, cfg, estimator="ols")
        with pytest.raises(SpecError):
            estimate_effect(ds, cfg, conditioning="u")
