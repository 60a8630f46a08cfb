"""Checkpoint and classifier archives."""

import numpy as np
import pytest
import torch

from tools.checkpoint import (
    Classifier,
    load_checkpoint,
    load_classifier,
    load_encoder,
    save_checkpoint,
    save_classifier,
)
from tools.errors import CheckpointError, DiTError


def _outputs(ckpt):
    torch.manual_seed(11)
    x = torch.randn(2, 2, 80)
    z = torch.randn(2, 2, 4, 6)
    t = torch.tensor([3, 15])
    ckpt.encoder.eval()
    ckpt.dit.eval()
    with torch.no_grad():
        e = ckpt.encoder(x)
        eps, v = ckpt.dit(z, t, e)
    return e, eps, v


class TestCheckpoint:
    def test_round_trip(self, tiny_checkpoint, tmp_path):
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        loaded = load_checkpoint(path)
        for before, after in zip(_outputs(tiny_checkpoint), _outputs(loaded)):
            assert torch.equal(before, after)
        np.testing.assert_array_equal(loaded.basis.basis, tiny_checkpoint.basis.basis)
        np.testing.assert_array_equal(loaded.basis.coeff_scale, tiny_checkpoint.basis.coeff_scale)
        assert (loaded.step, loaded.seed, loaded.latent_shape) == (3, 0, (2, 4, 6))
        assert loaded.config.model_dump() == tiny_checkpoint.config.model_dump()
        assert loaded.diffusion.schedule.t_max == 20

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.pt")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "garbage.pt"
        path.write_bytes(b"not a torch archive")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_shape_disagrees_with_manifest(self, tiny_checkpoint, tmp_path):
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        archive = torch.load(path, weights_only=True)
        archive["tensors"]["dit.null_embedding"] = torch.zeros(3)
        torch.save(archive, path)
        with pytest.raises(CheckpointError, match="dit.null_embedding"):
            load_checkpoint(path)

    def test_shape_disagrees_with_model(self, tiny_checkpoint, tmp_path):
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        archive = torch.load(path, weights_only=True)
        archive["tensors"]["encoder.pos_embed"] = torch.zeros(1, 7, 16)
        archive["manifest"]["shapes"]["encoder.pos_embed"] = [1, 7, 16]
        torch.save(archive, path)
        with pytest.raises(CheckpointError, match="model expects"):
            load_checkpoint(path)

    def test_loaded_denoiser_keeps_token_grid(self, tiny_checkpoint, tmp_path):
        loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint))
        assert loaded.dit.grid == (2, 4)
        with pytest.raises(DiTError, match="token grid"):
            loaded.dit(torch.randn(1, 3, 4, 6), torch.tensor([5]))

    def test_unknown_version(self, tiny_checkpoint, tmp_path):
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        archive = torch.load(path, weights_only=True)
        archive["version"] = 99
        torch.save(archive, path)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)


class TestClassifier:
    def _classifier(self, tiny_checkpoint):
        head = torch.nn.Linear(16, 3)
        return Classifier(config=tiny_checkpoint.config, encoder=tiny_checkpoint.encoder, head=head, seed=2)

    def test_round_trip(self, tiny_checkpoint, tmp_path):
        classifier = self._classifier(tiny_checkpoint)
        loaded = load_classifier(save_classifier(tmp_path / "clf.pt", classifier))
        assert loaded.seed == 2 and loaded.head.out_features == 3
        assert torch.equal(loaded.head.weight, classifier.head.weight)
        x = torch.randn(1, 2, 80)
        tiny_checkpoint.encoder.eval()
        with torch.no_grad():
            assert torch.equal(loaded.encoder(x), tiny_checkpoint.encoder(x))

    def test_formats_are_not_interchangeable(self, tiny_checkpoint, tmp_path):
        ckpt_path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        clf_path = save_classifier(tmp_path / "clf.pt", self._classifier(tiny_checkpoint))
        with pytest.raises(CheckpointError):
            load_classifier(ckpt_path)
        with pytest.raises(CheckpointError):
            load_checkpoint(clf_path)

    def test_load_encoder_accepts_both(self, tiny_checkpoint, tmp_path):
        ckpt_path = save_checkpoint(tmp_path / "ckpt.pt", tiny_checkpoint)
        clf_path = save_classifier(tmp_path / "clf.pt", self._classifier(tiny_checkpoint))
        x = torch.randn(1, 2, 80)
        a, b = load_encoder(ckpt_path).eval(), load_encoder(clf_path).eval()
        with torch.no_grad():
            assert torch.equal(a(x), b(x))

    def test_shape_disagrees_with_manifest(self, tiny_checkpoint, tmp_path):
        path = save_classifier(tmp_path / "clf.pt", self._classifier(tiny_checkpoint))
        archive = torch.load(path, weights_only=True)
        archive["tensors"]["head.weight"] = torch.zeros(3, 7)
        torch.save(archive, path)
        with pytest.raises(CheckpointError, match="manifest says"):
            load_classifier(path)
