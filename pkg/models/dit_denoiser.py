"""
dit_denoiser.py — Conditional diffusion transformer over PCA latent blocks
---------------------------------------------------------------------------

Tokens are the k-dimensional coefficient vectors of each (channel, window) slot of a
latent block, embedded linearly into R^d and summed with a fixed 2-D sine-cosine table
over (channel, window). Every block is modulated by adaLN-Zero from the conditioning
vector c = e + t_embed, where e is the encoder representation or the learned null
embedding ∅. Optionally a zero-initialised projection of c is also added to each
residual stream.

The decoder has two zero-initialised linear heads: the predicted noise ε and the
variance interpolation value v, both shaped like the input latent.
"""

from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn
from einops import rearrange

from config.run_config import DiTConfig
from models.layers import Attention, Mlp, modulate, sincos_2d, timestep_embedding
from tools.errors import DiTError


class TimestepEmbedder(nn.Module):
    """
    Embeds scalar timesteps into vector representations.
    """

    def __init__(self, hidden_size: int, frequency_embedding_size: int = 256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size, bias=True),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size, bias=True),
        )
        self.frequency_embedding_size = frequency_embedding_size

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        t_freq = timestep_embedding(t, self.frequency_embedding_size)
        return self.mlp(t_freq.to(self.mlp[0].weight.dtype))


class DiTBlock(nn.Module):
    """
    A DiT block with adaptive layer norm zero (adaLN-Zero) conditioning.
    """

    def __init__(self, hidden_size: int, num_heads: int, mlp_ratio: float = 4.0, residual_conditioning: bool = True):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.attn = Attention(hidden_size, num_heads=num_heads, qkv_bias=True)
        self.norm2 = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.mlp = Mlp(hidden_size, int(hidden_size * mlp_ratio), approximate="tanh")
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(),
            nn.Linear(hidden_size, 6 * hidden_size, bias=True),
        )
        self.residual_proj = nn.Linear(hidden_size, 2 * hidden_size) if residual_conditioning else None

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.adaLN_modulation(c).chunk(6, dim=1)
        if self.residual_proj is not None:
            res_msa, res_mlp = self.residual_proj(c).unsqueeze(1).chunk(2, dim=-1)
            x = x + res_msa
        x = x + gate_msa.unsqueeze(1) * self.attn(modulate(self.norm1(x), shift_msa, scale_msa))
        if self.residual_proj is not None:
            x = x + res_mlp
        x = x + gate_mlp.unsqueeze(1) * self.mlp(modulate(self.norm2(x), shift_mlp, scale_mlp))
        return x


class FinalLayer(nn.Module):
    """
    The final layer of DiT: adaLN shift/scale, then separate ε and v heads.
    """

    def __init__(self, hidden_size: int, out_channels: int):
        super().__init__()
        self.norm_final = nn.LayerNorm(hidden_size, elementwise_affine=False, eps=1e-6)
        self.adaLN_modulation = nn.Sequential(
            nn.SiLU(),
            nn.Linear(hidden_size, 2 * hidden_size, bias=True),
        )
        self.eps_head = nn.Linear(hidden_size, out_channels, bias=True)
        self.var_head = nn.Linear(hidden_size, out_channels, bias=True)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        shift, scale = self.adaLN_modulation(c).chunk(2, dim=1)
        x = modulate(self.norm_final(x), shift, scale)
        return self.eps_head(x), self.var_head(x)


class DiT(nn.Module):
    def __init__(self, config: DiTConfig, components: int, t_max: int, grid: Optional[Tuple[int, int]] = None):
        super().__init__()
        self.config = config
        self.components = components
        self.grid = tuple(grid) if grid is not None else None
        self.hidden_size = config.token_dim
        self.t_max = t_max

        self.x_embedder = nn.Linear(components, config.token_dim)
        self.t_embedder = TimestepEmbedder(config.token_dim, config.frequency_embedding_size)
        self.null_embedding = nn.Parameter(torch.zeros(config.token_dim))
        self.blocks = nn.ModuleList([
            DiTBlock(config.token_dim, config.heads, config.mlp_ratio, config.residual_conditioning)
            for _ in range(config.depth)
        ])
        self.final_layer = FinalLayer(config.token_dim, components)
        self._pos_cache: Dict[Tuple[int, int], torch.Tensor] = {}
        self.initialize_weights()

    def initialize_weights(self):
        def _basic_init(module):
            if isinstance(module, nn.Linear):
                torch.nn.init.xavier_uniform_(module.weight)
                if module.bias is not None:
                    nn.init.constant_(module.bias, 0)
        self.apply(_basic_init)

        nn.init.normal_(self.null_embedding, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[0].weight, std=0.02)
        nn.init.normal_(self.t_embedder.mlp[2].weight, std=0.02)

        # Zero-out adaLN modulation and residual conditioning: every block starts as the identity
        for block in self.blocks:
            nn.init.constant_(block.adaLN_modulation[-1].weight, 0)
            nn.init.constant_(block.adaLN_modulation[-1].bias, 0)
            if block.residual_proj is not None:
                nn.init.constant_(block.residual_proj.weight, 0)
                nn.init.constant_(block.residual_proj.bias, 0)

        # Zero-out output layers
        nn.init.constant_(self.final_layer.adaLN_modulation[-1].weight, 0)
        nn.init.constant_(self.final_layer.adaLN_modulation[-1].bias, 0)
        for head in (self.final_layer.eps_head, self.final_layer.var_head):
            nn.init.constant_(head.weight, 0)
            nn.init.constant_(head.bias, 0)

    def pos_embed(self, channels: int, windows: int, like: torch.Tensor) -> torch.Tensor:
        key = (channels, windows)
        if key not in self._pos_cache:
            self._pos_cache[key] = torch.from_numpy(sincos_2d(self.hidden_size, channels, windows))
        return self._pos_cache[key].to(dtype=like.dtype, device=like.device).unsqueeze(0)

    # --- Conditioning ---
    def condition_combine(
        self,
        e: Optional[torch.Tensor],
        t: torch.Tensor,
        drop_mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """
        c = e + t_embed, with e replaced by ∅ where `drop_mask` is set or everywhere when
        e is None.
        """
        t = torch.as_tensor(t, device=self.null_embedding.device).reshape(-1)
        if ((t < 1) | (t > self.t_max)).any():
            raise DiTError(f"timestep out of range [1, {self.t_max}]: {t.min().item()}..{t.max().item()}")
        t_emb = self.t_embedder(t)
        null = self.null_embedding.to(t_emb.dtype).expand_as(t_emb)
        if e is None:
            return null + t_emb
        if e.shape != t_emb.shape:
            raise DiTError(f"conditioning shape {tuple(e.shape)} != {tuple(t_emb.shape)}")
        if drop_mask is not None:
            e = torch.where(drop_mask.reshape(-1, 1).to(torch.bool), null, e)
        return e + t_emb

    # --- Denoising ---
    def check_grid(self, z_t: torch.Tensor):
        """Reject latents whose (C, n_windows, k) layout the token grid cannot hold."""
        if z_t.ndim != 4 or z_t.shape[-1] != self.components:
            raise DiTError(f"latent shape {tuple(z_t.shape)} does not match k={self.components}")
        channels, windows = z_t.shape[1:3]
        if channels < 1 or windows < 1:
            raise DiTError(f"latent shape {tuple(z_t.shape)} has an empty token grid")
        if self.grid is not None and (channels, windows) != self.grid:
            raise DiTError(f"token grid {(channels, windows)} != trained grid {self.grid}")

    def forward_tokens(self, tokens: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            tokens = block(tokens, c)
        return tokens

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        e: Optional[torch.Tensor] = None,
        drop_mask: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        z_t: (B, C, n_windows, k) noisy latents
        t: (B,) timesteps in [1, t_max]
        e: (B, d) representations, or None for the unconditional branch
        """
        self.check_grid(z_t)
        c = self.condition_combine(e, t, drop_mask)
        return self.denoise(z_t, c)

    def denoise(self, z_t: torch.Tensor, c: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        b, channels, windows, _ = z_t.shape
        x = self.x_embedder(rearrange(z_t, "b c n k -> b (c n) k"))
        x = x + self.pos_embed(channels, windows, x)
        x = self.forward_tokens(x, c)
        eps, v = self.final_layer(x, c)
        unflatten = lambda y: rearrange(y, "b (c n) k -> b c n k", c=channels, n=windows)
        return unflatten(eps), unflatten(v)
