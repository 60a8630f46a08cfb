"""
pretrain.py — Joint encoder + DiT pre-training
-----------------------------------------------

1. Segment the pre-training corpus (downstream test subjects left out when configured).
2. Fit the PCA basis on every ω-window of the pre-training samples.
3. Train the encoder and the denoiser jointly on the hybrid diffusion objective, the
   encoder receiving gradients through the conditioning vector.

All randomness (batch indices, timesteps, noise, augmentations, condition dropout)
comes from one numpy Generator and one torch Generator seeded by the run seed.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from config import settings
from config.run_config import RunConfig
from tools import pca_latent
from tools.augment import batch_views
from tools.checkpoint import Checkpoint, build_models
from tools.diffusion import GaussianDiffusion, LossTerms, TrainBatch, loss
from tools.errors import RecordingError
from tools.signal_store import Sample, load_samples, stack_samples

logger = logging.getLogger(__name__)


def pretrain_split(samples: Sequence[Sample], config: RunConfig) -> List[Sample]:
    """Samples used for pre-training; held-out downstream subjects are dropped when configured."""
    excluded = set(config.downstream.test_subjects) if config.data.pretrain_exclude_test else set()
    kept = [s for s in samples if s.subject_id not in excluded]
    if not kept:
        raise RecordingError("pre-training split is empty after excluding test subjects")
    return kept


def fit_basis(signals: np.ndarray, config: RunConfig) -> pca_latent.PcaBasis:
    if not config.pca.enabled:
        return pca_latent.identity_basis(config.pca.window)
    windows = pca_latent.collect_windows(signals, config.pca.window)
    return pca_latent.fit(windows, config.pca.components, config.pca.scale_coefficients)


def seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed)


class Pretrainer:
    def __init__(self, config: RunConfig, seed: int, samples: Optional[Sequence[Sample]] = None):
        self.config = config
        self.seed = seed
        self.device = torch.device(settings.DEVICE)
        samples = load_samples(config.data) if samples is None else samples
        self.samples = pretrain_split(samples, config)

        self.signals = stack_samples(self.samples)
        self.basis = fit_basis(self.signals, config)
        latents = pca_latent.standardize(pca_latent.project_array(self.signals, self.basis), self.basis)
        self.latents = torch.as_tensor(latents, dtype=torch.float32)
        self.latent_shape = tuple(self.latents.shape[1:])

        seed_everything(seed)
        self.encoder, self.dit = build_models(config, self.latent_shape)
        self.encoder.to(self.device)
        self.dit.to(self.device)
        self.diffusion = GaussianDiffusion.from_config(config.diffusion)
        self.optimizer = torch.optim.Adam(
            list(self.encoder.parameters()) + list(self.dit.parameters()), lr=config.train.lr
        )
        self.rng = np.random.default_rng(seed)
        self.generator = torch.Generator().manual_seed(seed)
        self.step = 0
        self.curve: List[Dict[str, float]] = []
        logger.info(
            "Pre-training on %d samples: latent %s, PCA %s",
            len(self.samples), self.latent_shape, "on" if config.pca.enabled else "off",
        )

    def make_batch(self, indices: Optional[np.ndarray] = None) -> TrainBatch:
        train, diffusion = self.config.train, self.config.diffusion
        n = len(self.samples)
        if indices is None:
            indices = self.rng.choice(n, size=train.batch_size, replace=n < train.batch_size)
        b = len(indices)
        views = batch_views(
            self.signals[indices], self.config.augment.views, self.rng, self.config.augment.scattered_mask
        )
        t = self.rng.integers(1, diffusion.t_max + 1, size=b)
        drop = self.rng.random(b) < diffusion.p_uncond
        noise = torch.randn((b, *self.latent_shape), generator=self.generator)
        return TrainBatch(
            z0=self.latents[indices].to(self.device),
            t=torch.as_tensor(t, dtype=torch.long, device=self.device),
            noise=noise.to(self.device),
            views=torch.as_tensor(views, dtype=torch.float32, device=self.device),
            drop_mask=torch.as_tensor(drop, device=self.device),
        )

    def evaluate_batch(self, batch: TrainBatch) -> LossTerms:
        with torch.no_grad():
            return loss(batch, self.encoder, self.dit, self.diffusion)

    def train_step(self, batch: TrainBatch) -> LossTerms:
        self.encoder.train()
        self.dit.train()
        self.optimizer.zero_grad()
        terms = loss(batch, self.encoder, self.dit, self.diffusion)
        terms.total.backward()
        torch.nn.utils.clip_grad_norm_(
            list(self.encoder.parameters()) + list(self.dit.parameters()), self.config.train.max_grad_norm
        )
        self.optimizer.step()
        self.step += 1
        row = {
            "step": self.step,
            "loss": float(terms.total),
            "loss_simple": float(terms.simple),
            "loss_vlb": float(terms.vlb),
        }
        self.curve.append(row)
        return terms

    def fit(self, steps: Optional[int] = None, progress: bool = True) -> List[Dict[str, float]]:
        steps = self.config.train.steps if steps is None else steps
        log_every = self.config.train.log_every
        bar = tqdm(range(steps), desc=f"pretrain seed={self.seed}", disable=not progress)
        for _ in bar:
            terms = self.train_step(self.make_batch())
            if self.step % log_every == 0 or self.step == 1:
                logger.info(
                    "step %d loss=%.5f simple=%.5f vlb=%.5f",
                    self.step, float(terms.total), float(terms.simple), float(terms.vlb),
                )
                bar.set_postfix(loss=f"{float(terms.total):.4f}")
        return self.curve

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            encoder=self.encoder,
            dit=self.dit,
            basis=self.basis,
            diffusion=self.diffusion,
            step=self.step,
            seed=self.seed,
            latent_shape=self.latent_shape,
        )

    def write_curve(self, path: Path | str) -> Path:
        path = Path(path)
        pd.DataFrame(self.curve, columns=["step", "loss", "loss_simple", "loss_vlb"]).to_csv(path, index=False)
        return path
