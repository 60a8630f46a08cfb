"""Patch layout, pooling and view aggregation of the EEG encoder."""

import numpy as np
import pytest
import torch

from config.run_config import EncoderConfig
from models.encoder import EEGEncoder, encode, patchify, unpatchify
from tests.helpers import make_sample
from tests.oracles import central_difference_check
from tools.augment import AugmentSpec, make_views
from tools.errors import EncoderError


def _config(**kwargs):
    base = dict(patch_window=8, embed_dim=16, depth=2, heads=2, mlp_ratio=2.0, max_tokens=24, conv_kernel=3)
    return EncoderConfig(**{**base, **kwargs})


class TestPatchify:
    def test_channel_major_order(self):
        x = torch.arange(2 * 3 * 24, dtype=torch.float32).reshape(2, 3, 24)
        patches = patchify(x, 8)
        assert patches.shape == (2, 9, 8)
        for j in range(3):
            for k in range(3):
                torch.testing.assert_close(patches[:, j * 3 + k], x[:, j, k * 8:(k + 1) * 8])

    def test_inverse(self):
        x = torch.randn(2, 3, 24)
        torch.testing.assert_close(unpatchify(patchify(x, 8), 3), x)

    def test_window_must_tile(self):
        with pytest.raises(EncoderError):
            patchify(torch.randn(1, 2, 20), 8)


class TestEncoder:
    @pytest.mark.parametrize("channels,length", [(1, 8), (2, 32), (3, 64)])
    def test_representation_width_is_d(self, channels, length):
        encoder = EEGEncoder(_config())
        assert encoder(torch.randn(4, channels, length)).shape == (4, 16)

    def test_too_many_tokens(self):
        encoder = EEGEncoder(_config(max_tokens=4))
        with pytest.raises(EncoderError):
            encoder(torch.randn(1, 2, 24))

    def test_zero_biases_and_positions_at_init(self):
        encoder = EEGEncoder(_config())
        assert torch.count_nonzero(encoder.patch_embed.conv.bias) == 0
        assert torch.count_nonzero(encoder.patch_embed.proj.bias) == 0
        assert torch.count_nonzero(encoder.pos_embed) == 0

    def test_explicit_position_ids_match_default(self):
        encoder = EEGEncoder(_config())
        with torch.no_grad():
            encoder.pos_embed.normal_()
        patches = torch.randn(2, 6, 8)
        torch.testing.assert_close(
            encoder.embed_patches(patches, torch.arange(6)), encoder.embed_patches(patches)
        )

    def test_items_are_independent(self):
        encoder = EEGEncoder(_config()).eval()
        x = torch.randn(5, 2, 32)
        with torch.no_grad():
            full = encoder(x)
            single = encoder(x[2:3])
        torch.testing.assert_close(full[2:3], single, atol=1e-5, rtol=1e-5)

    def test_gradients_match_finite_differences(self):
        encoder = EEGEncoder(_config(embed_dim=8, depth=1, max_tokens=8)).double()
        with torch.no_grad():
            for p in encoder.parameters():
                p.add_(0.1 * torch.randn_like(p))
        x = torch.randn(2, 2, 16, dtype=torch.float64)
        target = torch.randn(2, 8, dtype=torch.float64)
        params = list(encoder.parameters())
        error = central_difference_check(lambda: ((encoder(x) - target) ** 2).sum(), params, count=40, seed=0)
        assert error < 1e-4


class TestViews:
    def test_encode_views_is_mean_of_views(self):
        encoder = EEGEncoder(_config()).eval()
        views = torch.randn(3, 4, 2, 16)
        with torch.no_grad():
            pooled = encoder.encode_views(views)
            expected = torch.stack([encoder(v) for v in views]).mean(dim=0)
        torch.testing.assert_close(pooled, expected, atol=1e-5, rtol=1e-5)

    def test_single_view_equals_forward(self):
        encoder = EEGEncoder(_config()).eval()
        x = torch.randn(2, 2, 16)
        with torch.no_grad():
            torch.testing.assert_close(encoder.encode_views(x.unsqueeze(0)), encoder(x))

    def test_encode_view_set(self, rng):
        encoder = EEGEncoder(_config()).eval()
        sample = make_sample(rng.standard_normal((2, 16)))
        views = make_views(sample, [AugmentSpec(kind="zero_mask", seed=1), AugmentSpec(kind="amplitude_scale")])
        with torch.no_grad():
            e = encode(encoder, views)
            expected = encoder(torch.from_numpy(views.stack())).mean(dim=0)
        assert e.shape == (16,)
        np.testing.assert_allclose(e.numpy(), expected.numpy(), atol=1e-5)

    def test_empty_view_stack(self):
        with pytest.raises(EncoderError):
            EEGEncoder(_config()).encode_views(torch.zeros(0, 1, 2, 16))

    def test_duplicated_view_counts_twice(self):
        encoder = EEGEncoder(_config()).eval()
        original, augmented = torch.randn(2, 3, 2, 16)
        with torch.no_grad():
            pooled = encoder.encode_views(torch.stack([original, augmented, augmented]))
            expected = (encoder(original) + 2 * encoder(augmented)) / 3
        torch.testing.assert_close(pooled, expected, atol=1e-5, rtol=1e-5)


class TestPermutation:
    def test_pooling_ignores_token_order(self):
        encoder = EEGEncoder(_config()).eval()
        with torch.no_grad():
            encoder.pos_embed.normal_()
        patches = torch.randn(2, 6, 8)
        order = torch.randperm(6)
        with torch.no_grad():
            pooled = encoder.forward_tokens(encoder.embed_patches(patches)).mean(dim=1)
            shuffled = encoder.forward_tokens(encoder.embed_patches(patches[:, order], order)).mean(dim=1)
        torch.testing.assert_close(shuffled, pooled, atol=1e-5, rtol=1e-5)
