"""
diffusion.py — Noise schedule, hybrid objective and guided ancestral sampler
-----------------------------------------------------------------------------

Timesteps run 1..T_max. Every table has T_max + 1 entries; index 0 is the clean
boundary (ᾱ_0 = 1) so `table[t]` reads naturally.

Features:
- Linear β schedule with the derived ᾱ, β̃ and posterior tables in float64
- Forward sampling z_t = √ᾱ_t·z_0 + √(1−ᾱ_t)·ε
- Hybrid loss: L_simple on ε plus λ·L_vlb for the learned variance, with the ε
  prediction detached inside the variational term
- Learned variance Σ = exp(v·log β_t + (1−v)·log β̃_t)
- Classifier-free guidance ε̃ = ε_∅ + s·(ε_e − ε_∅)
- Ancestral sampling over the full chain or a respaced (strided) subset of timesteps
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from config.run_config import DiffusionConfig
from tools.errors import DiffusionError, NumericalError
from tools.pca_latent import PcaBasis, reconstruct_array, unstandardize
from tools.signal_store import Sample

logger = logging.getLogger(__name__)


def normal_kl(mu1, logvar1, mu2, logvar2):
    """KL(N(mu1, e^logvar1) ‖ N(mu2, e^logvar2)) elementwise, in nats."""
    u1 = -1.0 + logvar2 - logvar1 + torch.exp(logvar1 - logvar2)
    u2 = ((mu1 - mu2) ** 2) * torch.exp(-logvar2)
    return 0.5 * (u1 + u2)


def gaussian_nll(x, mean, log_var):
    """Continuous negative log-likelihood of x under N(mean, e^log_var), in nats."""
    return 0.5 * (math.log(2 * math.pi) + log_var + (x - mean) ** 2 * torch.exp(-log_var))


def _i(tensor, t, x):
    """Index tensor using t and format the output according to x."""
    shape = (x.size(0),) + (1,) * (x.ndim - 1)
    return tensor[t.to(tensor.device)].view(shape).to(x)


# --- Schedule ---
class NoiseSchedule:
    def __init__(self, alphas_cumprod: np.ndarray, timestep_map: Optional[Sequence[int]] = None):
        """
        alphas_cumprod: ᾱ_1..ᾱ_T, strictly decreasing in (0, 1).
        timestep_map: original timestep index of each entry (identity for a base schedule).
        """
        acp = np.asarray(alphas_cumprod, dtype=np.float64)
        if acp.ndim != 1 or len(acp) < 2:
            raise DiffusionError("a schedule needs at least two timesteps")
        if not (np.all(acp > 0) and np.all(acp < 1) and np.all(np.diff(acp) < 0)):
            raise DiffusionError("alphas_cumprod must be strictly decreasing inside (0, 1)")
        self.t_max = len(acp)

        self.alphas_cumprod = np.concatenate([[1.0], acp])
        self.alphas_cumprod_prev = np.concatenate([[1.0], self.alphas_cumprod[:-1]])
        self.betas = 1.0 - self.alphas_cumprod / self.alphas_cumprod_prev
        self.alphas = 1.0 - self.betas

        mapping = np.arange(self.t_max + 1) if timestep_map is None else np.concatenate([[0], timestep_map])
        if len(mapping) != self.t_max + 1:
            raise DiffusionError("timestep_map must have one entry per timestep")
        self.timestep_map = mapping.astype(np.int64)

        # q(z_{t-1} | z_t, z_0); entry 1 is 0 and is clipped to entry 2 in log space
        posterior = np.zeros(self.t_max + 1)
        posterior[1:] = self.betas[1:] * (1.0 - self.alphas_cumprod_prev[1:]) / (1.0 - self.alphas_cumprod[1:])
        self.posterior_variance = posterior
        log_clipped = np.empty(self.t_max + 1)
        log_clipped[2:] = np.log(posterior[2:])
        log_clipped[:2] = log_clipped[2]
        self.posterior_log_variance_clipped = log_clipped
        self.log_betas = np.log(np.where(self.betas > 0, self.betas, 1.0))
        self.posterior_mean_coef1 = np.zeros(self.t_max + 1)
        self.posterior_mean_coef2 = np.zeros(self.t_max + 1)
        self.posterior_mean_coef1[1:] = (
            self.betas[1:] * np.sqrt(self.alphas_cumprod_prev[1:]) / (1.0 - self.alphas_cumprod[1:])
        )
        self.posterior_mean_coef2[1:] = (
            (1.0 - self.alphas_cumprod_prev[1:]) * np.sqrt(self.alphas[1:]) / (1.0 - self.alphas_cumprod[1:])
        )

        self._tensors = {
            name: torch.from_numpy(getattr(self, name).copy())
            for name in (
                "alphas_cumprod", "betas", "log_betas", "posterior_variance",
                "posterior_log_variance_clipped", "posterior_mean_coef1", "posterior_mean_coef2",
            )
        }
        self._tensors["sqrt_alphas_cumprod"] = torch.sqrt(self._tensors["alphas_cumprod"])
        self._tensors["sqrt_one_minus_alphas_cumprod"] = torch.sqrt(1.0 - self._tensors["alphas_cumprod"])
        self._tensors["sqrt_recip_alphas_cumprod"] = torch.sqrt(1.0 / self._tensors["alphas_cumprod"])
        self._tensors["sqrt_recipm1_alphas_cumprod"] = torch.sqrt(1.0 / self._tensors["alphas_cumprod"] - 1.0)

    @classmethod
    def linear(cls, t_max: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> "NoiseSchedule":
        if t_max < 2:
            raise DiffusionError(f"t_max must be at least 2, got {t_max}")
        if not 0 < beta_start < beta_end < 1:
            raise DiffusionError("linear schedule needs 0 < beta_start < beta_end < 1")
        betas = np.linspace(beta_start, beta_end, t_max, dtype=np.float64)
        return cls(np.cumprod(1.0 - betas))

    @classmethod
    def from_config(cls, config: DiffusionConfig) -> "NoiseSchedule":
        return cls.linear(config.t_max, config.beta_start, config.beta_end)

    def respace(self, stride: int) -> "NoiseSchedule":
        """
        Keep every `stride`-th timestep counted down from T_max (plus t = 1) and recompute
        β′ from the retained ᾱ values. Denoiser calls keep the original indices.
        """
        if stride < 1:
            raise DiffusionError(f"sample stride must be at least 1, got {stride}")
        if stride == 1:
            return self
        kept = sorted(set(range(self.t_max, 0, -stride)) | {1})
        original = self.timestep_map[kept]
        return NoiseSchedule(self.alphas_cumprod[kept], timestep_map=original)

    def table(self, name: str) -> torch.Tensor:
        return self._tensors[name]

    def check_timesteps(self, t: torch.Tensor):
        if ((t < 1) | (t > self.t_max)).any():
            raise DiffusionError(f"timesteps must lie in [1, {self.t_max}]")


@dataclass
class TrainBatch:
    z0: torch.Tensor                 # (B, C, n_windows, k)
    t: torch.Tensor                  # (B,) in 1..T_max
    noise: torch.Tensor              # like z0
    views: torch.Tensor              # (m, B, C, t^s)
    drop_mask: torch.Tensor          # (B,) bool, True → condition replaced by ∅


@dataclass
class LossTerms:
    total: torch.Tensor
    simple: torch.Tensor
    vlb: torch.Tensor


class GaussianDiffusion:
    def __init__(self, schedule: NoiseSchedule, vlb_weight: float = 1e-3):
        self.schedule = schedule
        self.vlb_weight = vlb_weight

    @classmethod
    def from_config(cls, config: DiffusionConfig) -> "GaussianDiffusion":
        return cls(NoiseSchedule.from_config(config), config.vlb_weight)

    # --- Forward process ---
    def q_sample(self, z0, t, noise=None):
        """Sample from q(z_t | z_0)."""
        self.schedule.check_timesteps(t)
        noise = torch.randn_like(z0) if noise is None else noise
        if noise.shape != z0.shape:
            raise DiffusionError(f"noise shape {tuple(noise.shape)} != latent shape {tuple(z0.shape)}")
        s = self.schedule
        return _i(s.table("sqrt_alphas_cumprod"), t, z0) * z0 + _i(s.table("sqrt_one_minus_alphas_cumprod"), t, z0) * noise

    def q_posterior_mean_variance(self, z0, zt, t):
        """Distribution of q(z_{t-1} | z_t, z_0)."""
        s = self.schedule
        mu = _i(s.table("posterior_mean_coef1"), t, zt) * z0 + _i(s.table("posterior_mean_coef2"), t, zt) * zt
        var = _i(s.table("posterior_variance"), t, zt)
        log_var = _i(s.table("posterior_log_variance_clipped"), t, zt)
        return mu, var, log_var

    # --- Reverse process ---
    def model_log_variance(self, v, t):
        s = self.schedule
        max_log = _i(s.table("log_betas"), t, v)
        min_log = _i(s.table("posterior_log_variance_clipped"), t, v)
        return v * max_log + (1 - v) * min_log

    def predict_z0(self, zt, t, eps):
        s = self.schedule
        return _i(s.table("sqrt_recip_alphas_cumprod"), t, zt) * zt - _i(s.table("sqrt_recipm1_alphas_cumprod"), t, zt) * eps

    def p_mean_variance(self, zt, t, eps, v):
        """Mean and log-variance of p(z_{t-1} | z_t) from the predicted noise and v."""
        z0 = self.predict_z0(zt, t, eps)
        mu, _, _ = self.q_posterior_mean_variance(z0, zt, t)
        return mu, self.model_log_variance(v, t), z0

    def variational_lower_bound(self, z0, zt, t, eps, v):
        """Per-item vlb term in bits: KL for t > 1, decoder NLL at t = 1."""
        mu1, _, log_var1 = self.q_posterior_mean_variance(z0, zt, t)
        mu2, log_var2, _ = self.p_mean_variance(zt, t, eps, v)
        kl = normal_kl(mu1, log_var1, mu2, log_var2).flatten(1).mean(dim=1) / math.log(2.0)
        nll = gaussian_nll(z0, mu2, log_var2).flatten(1).mean(dim=1) / math.log(2.0)
        return torch.where(t.to(kl.device) == 1, nll, kl)

    def losses(self, z0, zt, t, noise, eps_pred, v_pred) -> LossTerms:
        simple = (eps_pred - noise).pow(2).mean()
        vlb = self.variational_lower_bound(z0, zt, t, eps_pred.detach(), v_pred).mean()
        total = simple + self.vlb_weight * vlb
        if not torch.isfinite(total):
            raise NumericalError("training divergence")
        return LossTerms(total=total, simple=simple, vlb=vlb)

    # --- Guidance and sampling ---
    def guided_prediction(self, dit, zt, t, e: Optional[torch.Tensor], scale: float):
        """
        ε̃ = ε_∅ + s·(ε_e − ε_∅), evaluated as (1 − s)·ε_∅ + s·ε_e so that s = 0 and s = 1
        reproduce the branch outputs bit for bit. v comes from the conditional branch.
        """
        if scale < 0:
            raise DiffusionError(f"guidance scale must be non-negative, got {scale}")
        if e is None:
            return dit(zt, t, None)
        eps_cond, v_cond = dit(zt, t, e)
        eps_uncond, _ = dit(zt, t, None)
        return (1.0 - scale) * eps_uncond + scale * eps_cond, v_cond

    @torch.no_grad()
    def p_sample(self, dit, zt, step, e, scale, generator=None):
        """One ancestral step from schedule index `step` to `step − 1`."""
        b = zt.size(0)
        t = torch.full((b,), step, dtype=torch.long)
        t_model = torch.full((b,), int(self.schedule.timestep_map[step]), dtype=torch.long, device=zt.device)
        eps, v = self.guided_prediction(dit, zt, t_model, e, scale)
        mu, log_var, _ = self.p_mean_variance(zt, t, eps, v)
        if step == 1:
            return mu
        noise = torch.randn(zt.shape, generator=generator, dtype=zt.dtype, device=zt.device)
        return mu + torch.exp(0.5 * log_var) * noise

    @torch.no_grad()
    def p_sample_loop(
        self,
        dit,
        shape: Tuple[int, ...],
        e: Optional[torch.Tensor] = None,
        scale: float = 1.0,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
        progress: bool = False,
    ) -> torch.Tensor:
        """Sample z_0 from z_T ~ N(0, I); the final step adds no noise."""
        generator = torch.Generator().manual_seed(seed)
        zt = torch.randn(shape, generator=generator, dtype=dtype)
        steps = range(self.schedule.t_max, 0, -1)
        for step in tqdm(steps, desc="sampling", disable=not progress, leave=False):
            zt = self.p_sample(dit, zt, step, e, scale, generator)
            if not torch.isfinite(zt).all():
                raise NumericalError(
                    f"non-finite sampler state at timestep {int(self.schedule.timestep_map[step])}"
                )
        return zt


def loss(batch: TrainBatch, encoder, dit, diffusion: GaussianDiffusion) -> LossTerms:
    """Hybrid objective for one batch; the encoder is trained through the conditioning."""
    e = encoder.encode_views(batch.views)
    zt = diffusion.q_sample(batch.z0, batch.t, batch.noise)
    eps_pred, v_pred = dit(zt, batch.t, e, batch.drop_mask)
    return diffusion.losses(batch.z0, zt, batch.t, batch.noise, eps_pred, v_pred)


def sample(
    n: int,
    cond: Optional[torch.Tensor],
    scale: float,
    diffusion: GaussianDiffusion,
    dit,
    latent_shape: Tuple[int, int, int],
    seed: int = 0,
    stride: int = 1,
) -> torch.Tensor:
    """
    Draw n latent blocks of shape (C, n_windows, k). `cond` is one representation
    (d,) shared by all draws, an (n, d) batch, or None for unconditional sampling.
    """
    if n < 1:
        raise DiffusionError(f"sample count must be positive, got {n}")
    dtype = next(dit.parameters()).dtype
    e = None
    if cond is not None:
        e = cond.to(dtype).reshape(-1, cond.shape[-1])
        e = e.expand(n, -1) if e.shape[0] == 1 else e
        if e.shape[0] != n:
            raise DiffusionError(f"{e.shape[0]} conditioning vectors for {n} samples")
    schedule = diffusion.schedule.respace(stride)
    runner = GaussianDiffusion(schedule, diffusion.vlb_weight)
    was_training = dit.training
    dit.eval()
    try:
        return runner.p_sample_loop(dit, (n, *latent_shape), e, scale, seed, dtype)
    finally:
        dit.train(was_training)


def reconstruct_signal(latents: np.ndarray, basis: PcaBasis, source: str = "generated") -> List[Sample]:
    """Undo coefficient scaling, then invert the PCA projection per latent block."""
    signals = reconstruct_array(unstandardize(latents, basis), basis)
    return [
        Sample(data=signal, source_recording=f"{source}-{i:04d}", offset=0)
        for i, signal in enumerate(signals)
    ]
