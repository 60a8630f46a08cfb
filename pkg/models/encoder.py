"""
encoder.py — ViT-style EEG encoder
-----------------------------------

Each channel is cut into non-overlapping ω-patches (channel-major, then time). A
temporal convolution block embeds every patch into R^d, learnable positional
embeddings are added per (channel, window) slot, a pre-norm Transformer trunk mixes the
tokens and average pooling yields one representation e per view. View sets are
aggregated by taking the mean of the per-view representations.

The representation width is d for any geometry whose token count fits `max_tokens`.
"""

from typing import Optional

import torch
import torch.nn as nn
from einops import rearrange

from config.run_config import EncoderConfig
from models.layers import Block
from tools.augment import ViewSet
from tools.errors import EncoderError


def patchify(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, C, t^s) → (B, C·t^s/ω, ω); patch j·n + k is x[:, j, kω:(k+1)ω]."""
    if x.shape[-1] % window:
        raise EncoderError(f"patch window {window} does not tile sample length {x.shape[-1]}")
    return rearrange(x, "b c (n w) -> b (c n) w", w=window)


def unpatchify(patches: torch.Tensor, channels: int) -> torch.Tensor:
    return rearrange(patches, "b (c n) w -> b c (n w)", c=channels)


class TemporalConvEmbed(nn.Module):
    """Conv1d over each patch, GELU, then a linear map of the flattened features to d."""

    def __init__(self, window: int, embed_dim: int, kernel: int = 15, conv_channels: int = 1):
        super().__init__()
        self.conv = nn.Conv1d(1, conv_channels, kernel_size=kernel, padding=kernel // 2)
        self.act = nn.GELU()
        self.proj = nn.Linear(conv_channels * window, embed_dim)
        nn.init.zeros_(self.conv.bias)
        nn.init.zeros_(self.proj.bias)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        b, n, w = patches.shape
        h = self.act(self.conv(rearrange(patches, "b n w -> (b n) 1 w")))
        return self.proj(rearrange(h, "(b n) c w -> b n (c w)", b=b, n=n))


class EEGEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.window = config.patch_window
        self.embed_dim = config.embed_dim
        self.max_tokens = config.max_tokens

        self.patch_embed = TemporalConvEmbed(
            config.patch_window, config.embed_dim, config.conv_kernel, config.conv_channels
        )
        self.pos_embed = nn.Parameter(torch.zeros(1, config.max_tokens, config.embed_dim))
        self.blocks = nn.ModuleList([
            Block(config.embed_dim, config.heads, config.mlp_ratio) for _ in range(config.depth)
        ])
        self.norm = nn.LayerNorm(config.embed_dim)

    # --- Stages ---
    def embed_patches(self, patches: torch.Tensor, position_ids: Optional[torch.Tensor] = None) -> torch.Tensor:
        """(B, N, ω) → (B, N, d) with positional embeddings added."""
        n = patches.shape[1]
        if n > self.max_tokens:
            raise EncoderError(f"{n} tokens exceed the positional table ({self.max_tokens})")
        if patches.shape[-1] != self.window:
            raise EncoderError(f"patch length {patches.shape[-1]} != patch window {self.window}")
        pos = self.pos_embed[:, :n] if position_ids is None else self.pos_embed[:, position_ids]
        return self.patch_embed(patches) + pos

    def forward_tokens(self, tokens: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            tokens = block(tokens)
        return self.norm(tokens)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, C, t^s) → (B, d)."""
        tokens = self.embed_patches(patchify(x, self.window))
        return self.forward_tokens(tokens).mean(dim=1)

    def encode_views(self, views: torch.Tensor) -> torch.Tensor:
        """(m, B, C, t^s) → (B, d): mean of the per-view representations."""
        if views.ndim != 4 or views.shape[0] == 0:
            raise EncoderError("expected a non-empty (m, B, C, t^s) view stack")
        m, b = views.shape[:2]
        reps = self(rearrange(views, "m b c t -> (m b) c t"))
        return rearrange(reps, "(m b) d -> m b d", m=m, b=b).mean(dim=0)


def encode(encoder: EEGEncoder, view_set: ViewSet) -> torch.Tensor:
    """Representation e ∈ R^d of one view set."""
    param = next(encoder.parameters())
    views = torch.as_tensor(view_set.stack(), dtype=param.dtype, device=param.device)
    return encoder.encode_views(views.unsqueeze(1))[0]
