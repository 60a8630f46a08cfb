"""Windowed PCA fitting and the latent codec."""

import numpy as np
import pytest

from tests.helpers import make_sample
from tests.oracles import covariance_eigenvalues, projector_reconstruction
from tools.errors import PcaError
from tools.pca_latent import (
    LatentBlock,
    collect_windows,
    fit,
    identity_basis,
    project,
    project_array,
    reconstruct,
    reconstruct_array,
    reconstruction_mse,
    standardize,
)


@pytest.fixture
def windows(rng):
    """Correlated windows with a decaying spectrum."""
    mixing = rng.standard_normal((12, 12)) * (0.7 ** np.arange(12))[:, None]
    return rng.standard_normal((500, 12)) @ mixing + rng.standard_normal(12)


class TestFit:
    def test_eigenvalues_match_covariance(self, windows):
        basis = fit(windows, 5)
        np.testing.assert_allclose(basis.eigenvalues, covariance_eigenvalues(windows)[:5], rtol=1e-9)
        assert np.all(np.diff(basis.eigenvalues) <= 0)

    def test_orthonormal_rows(self, windows):
        basis = fit(windows, 7)
        np.testing.assert_allclose(basis.basis @ basis.basis.T, np.eye(7), atol=1e-10)

    def test_sign_convention(self, windows):
        basis = fit(windows, 6)
        pivots = np.abs(basis.basis).argmax(axis=1)
        assert np.all(basis.basis[np.arange(6), pivots] > 0)

    def test_mse_equals_discarded_variance(self, windows):
        basis = fit(windows, 4)
        discarded = covariance_eigenvalues(windows)[4:].sum()
        assert reconstruction_mse(windows, basis) == pytest.approx(discarded / 12, rel=1e-8)

    def test_explained_variance_grows_with_k(self, windows):
        ratios = [fit(windows, k).explained_variance_ratio for k in (1, 3, 6, 12)]
        assert ratios == sorted(ratios)
        assert ratios[-1] == pytest.approx(1.0)

    def test_coefficient_scale(self, windows):
        basis = fit(windows, 5)
        coeffs = standardize((windows - basis.mean) @ basis.basis.T, basis)
        np.testing.assert_allclose(coeffs.var(axis=0), 1.0, rtol=1e-8)

    def test_unscaled(self, windows):
        np.testing.assert_array_equal(fit(windows, 5, scale_coefficients=False).coeff_scale, 1.0)

    def test_fewer_windows_than_components(self, rng):
        with pytest.raises(PcaError, match="fewer windows"):
            fit(rng.standard_normal((3, 10)), 4)

    def test_degenerate_covariance(self):
        with pytest.raises(PcaError, match="degenerate covariance"):
            fit(np.ones((50, 8)), 2)


class TestWorkedExamples:
    def test_rank_one_windows(self, rng):
        v = np.array([1.0, -3.0, 2.0, 0.5])
        windows = rng.standard_normal((200, 1)) * v
        basis = fit(windows, 1)
        np.testing.assert_allclose(basis.basis[0], -v / np.linalg.norm(v), atol=1e-10)

    def test_diagonal_covariance(self, rng):
        windows = rng.standard_normal((10_000, 3)) * np.array([2.0, 1.0, 0.5])
        basis = fit(windows, 2)
        np.testing.assert_allclose(basis.eigenvalues, [4.0, 1.0], rtol=0.05)
        np.testing.assert_allclose(basis.eigenvalues, covariance_eigenvalues(windows)[:2], rtol=1e-9)
        np.testing.assert_allclose(np.abs(basis.basis), np.eye(3)[:2], atol=0.05)


class TestLargeWindowSet:
    """Ten thousand 64-sample windows with a decaying spectrum."""

    @pytest.fixture(scope="class")
    def large(self):
        rng = np.random.default_rng(99)
        mixing = rng.standard_normal((64, 64)) * (0.9 ** np.arange(64))[:, None]
        return rng.standard_normal((10_000, 64)) @ mixing

    def test_orthonormality(self, large):
        basis = fit(large, 20)
        assert np.abs(basis.basis @ basis.basis.T - np.eye(20)).max() < 1e-6

    def test_residual_energy(self, large):
        basis = fit(large, 20)
        discarded = covariance_eigenvalues(large)[20:].sum()
        assert reconstruction_mse(large, basis) == pytest.approx(discarded / 64, rel=0.05)

    def test_mse_non_increasing_in_k(self, large):
        mse = [reconstruction_mse(large, fit(large, k)) for k in (1, 5, 10, 20, 64)]
        assert all(b <= a + 1e-12 for a, b in zip(mse, mse[1:]))
        assert mse[-1] == pytest.approx(0.0, abs=1e-10)

    def test_complete_basis_round_trip(self, large, rng):
        basis = fit(large, 64)
        samples = rng.standard_normal((3, 2, 128))
        restored = reconstruct_array(project_array(samples, basis), basis)
        assert np.abs(restored - samples).max() < 1e-5


class TestCodec:
    def test_project_after_reconstruct_is_identity(self, windows, rng):
        basis = fit(windows, 5)
        latents = rng.standard_normal((2, 3, 4, 5))
        np.testing.assert_allclose(project_array(reconstruct_array(latents, basis), basis), latents, atol=1e-5)

    def test_mean_window_projects_to_zero(self, windows):
        basis = fit(windows, 5)
        sample = np.tile(basis.mean, 3)[None, :]
        np.testing.assert_allclose(project_array(sample, basis), 0.0, atol=1e-10)

    def test_reconstruction_matches_projector(self, windows, rng):
        basis = fit(windows, 5)
        samples = rng.standard_normal((4, 3, 36))
        restored = reconstruct_array(project_array(samples, basis), basis)
        expected = projector_reconstruction(samples.reshape(-1, 12), basis.basis, basis.mean)
        np.testing.assert_allclose(restored, expected.reshape(4, 3, 36), atol=1e-10)

    def test_full_rank_round_trip(self, windows, rng):
        basis = fit(windows, 12)
        samples = rng.standard_normal((3, 48))
        np.testing.assert_allclose(reconstruct_array(project_array(samples, basis), basis), samples, atol=1e-10)

    def test_latent_block_shape(self, windows, rng):
        basis = fit(windows, 5)
        sample = make_sample(rng.standard_normal((3, 36)), source="r", offset=12, label=1)
        block = project(sample, basis)
        assert block.shape == (3, 3, 5)
        back = reconstruct(block, basis, source_recording="r", offset=12, label=1)
        assert back.data.shape == (3, 36)
        assert back.sample_id == "r@12"

    def test_window_must_tile(self, windows, rng):
        basis = fit(windows, 5)
        with pytest.raises(PcaError, match="window does not tile sample"):
            project_array(rng.standard_normal((2, 30)), basis)
        with pytest.raises(PcaError):
            collect_windows(rng.standard_normal((2, 30)), 12)

    def test_identity_basis(self, rng):
        basis = identity_basis(10)
        samples = rng.standard_normal((2, 30))
        np.testing.assert_array_equal(project_array(samples, basis), samples.reshape(2, 3, 10))

    def test_latent_block_rejects_nan(self):
        with pytest.raises(PcaError):
            LatentBlock(np.full((1, 2, 3), np.nan))

    def test_collect_windows(self, rng):
        samples = rng.standard_normal((4, 2, 24))
        pooled = collect_windows(samples, 8)
        assert pooled.shape == (4 * 2 * 3, 8)
        np.testing.assert_array_equal(pooled[1], samples[0, 0, 8:16])
