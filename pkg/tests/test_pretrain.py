"""Pre-training split, batch assembly, reproducibility and the training signal."""

import numpy as np
import pandas as pd
import pytest
import torch

from config.run_config import parse_run_config
from tests.helpers import tiny_raw_config
from tools.diffusion import TrainBatch
from tools.errors import RecordingError
from tools.pretrain import Pretrainer, fit_basis, pretrain_split


class TestSplit:
    def test_test_subjects_left_out(self, tiny_config, tiny_samples):
        kept = pretrain_split(tiny_samples, tiny_config)
        assert {s.subject_id for s in kept} == {"S01", "S02"}
        assert len(kept) == 72

    def test_exclusion_can_be_disabled(self, tiny_samples):
        config = parse_run_config(tiny_raw_config(data={"pretrain_exclude_test": False}))
        assert len(pretrain_split(tiny_samples, config)) == len(tiny_samples)

    def test_everything_excluded(self, tiny_samples):
        config = parse_run_config(tiny_raw_config(downstream={"test_subjects": ["S01", "S02", "S03"]}))
        with pytest.raises(RecordingError):
            pretrain_split(tiny_samples, config)

    def test_identity_basis_without_pca(self, tiny_samples):
        config = parse_run_config(tiny_raw_config(pca={"enabled": False, "window": 20, "components": 6}))
        signals = np.stack([s.data for s in tiny_samples[:4]])
        basis = fit_basis(signals, config)
        assert basis.components == 20
        np.testing.assert_array_equal(basis.basis, np.eye(20))


class TestPretrainer:
    def test_latents_and_batch_shapes(self, tiny_config, tiny_samples):
        trainer = Pretrainer(tiny_config, seed=0, samples=tiny_samples)
        assert trainer.latent_shape == (2, 4, 6)
        assert trainer.latents.dtype == torch.float32
        np.testing.assert_allclose(
            trainer.latents.double().reshape(-1, 6).var(dim=0, unbiased=False).numpy(), 1.0, rtol=1e-4
        )
        batch = trainer.make_batch()
        assert isinstance(batch, TrainBatch)
        assert batch.z0.shape == batch.noise.shape == (8, 2, 4, 6)
        assert batch.views.shape == (3, 8, 2, 80)
        assert batch.drop_mask.dtype == torch.bool
        assert int(batch.t.min()) >= 1 and int(batch.t.max()) <= 20

    def test_same_seed_same_run(self, tiny_config, tiny_samples):
        curves = []
        for _ in range(2):
            trainer = Pretrainer(tiny_config, seed=4, samples=tiny_samples)
            curves.append(trainer.fit(steps=3, progress=False))
        assert curves[0] == curves[1]

    def test_different_seed_different_batches(self, tiny_config, tiny_samples):
        a = Pretrainer(tiny_config, seed=1, samples=tiny_samples).make_batch()
        b = Pretrainer(tiny_config, seed=2, samples=tiny_samples).make_batch()
        assert not torch.equal(a.noise, b.noise)

    def test_curve_csv(self, tiny_config, tiny_samples, tmp_path):
        trainer = Pretrainer(tiny_config, seed=0, samples=tiny_samples)
        trainer.fit(steps=4, progress=False)
        df = pd.read_csv(trainer.write_curve(tmp_path / "curve.csv"))
        assert list(df.columns) == ["step", "loss", "loss_simple", "loss_vlb"]
        assert df["step"].tolist() == [1, 2, 3, 4]
        assert np.isfinite(df[["loss", "loss_simple", "loss_vlb"]].to_numpy()).all()

    def test_checkpoint_carries_state(self, tiny_checkpoint):
        assert tiny_checkpoint.step == 3
        assert tiny_checkpoint.latent_shape == (2, 4, 6)
        assert tiny_checkpoint.basis.components == 6

    def test_fixed_batch_loss_halves(self, tiny_samples):
        config = parse_run_config(tiny_raw_config(
            diffusion={"t_max": 1000, "p_uncond": 0.0},
            train={"batch_size": 32, "steps": 300, "lr": 3e-3, "log_every": 100, "seeds": [0]},
        ))
        trainer = Pretrainer(config, seed=0, samples=tiny_samples)
        batch = trainer.make_batch(indices=np.arange(32))
        # late timesteps: z_t is dominated by the noise it must predict
        batch.t = torch.full_like(batch.t, 900)
        initial = float(trainer.evaluate_batch(batch).simple)
        for _ in range(300):
            trainer.train_step(batch)
        final = float(trainer.evaluate_batch(batch).simple)
        assert final <= 0.5 * initial
