"""
downstream.py — Fine-tuning, evaluation and generation quality
---------------------------------------------------------------

Features:
- Linear-head fine-tuning of the pre-trained encoder (full fine-tuning or a head
  over frozen features), optionally on averaged augmentation views
- Evaluation into a `MetricsReport`
- Fixed, fraction and leave-one-subject-out protocols, repeated over the seed list
- Embedding export to CSV for external visualisation
- Generation quality: Pearson correlation between generated and original signals in
  the time domain and between their magnitude spectra
"""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.stats import pearsonr
from sklearn.model_selection import LeaveOneGroupOut
from tqdm import tqdm

from config.run_config import RunConfig
from models.encoder import EEGEncoder, encode
from tools import diffusion as diffusion_ops
from tools.augment import AugmentSpec, batch_views, make_views
from tools.checkpoint import Checkpoint
from tools.errors import DownstreamError
from tools.metrics import MetricsReport, aggregate, compute_metrics
from tools.signal_store import (
    Sample,
    SplitSpec,
    canonical_order,
    labels_of,
    split_samples,
    stack_samples,
    subjects_of,
)

logger = logging.getLogger(__name__)

NO_CORRELATION = 0.0


@dataclass
class FinetuneResult:
    encoder: EEGEncoder
    head: nn.Linear
    n_classes: int
    curve: List[Dict[str, float]] = field(default_factory=list)


@dataclass
class FoldResult:
    seed: int
    report: MetricsReport
    held_out: Optional[str] = None


def _param_dtype(module: nn.Module) -> torch.dtype:
    return next(module.parameters()).dtype


def resolve_classes(labels: np.ndarray, n_classes: Optional[int]) -> int:
    if len(np.unique(labels)) < 2:
        raise DownstreamError("degenerate label set")
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DownstreamError(f"label ids must lie in [0, {n_classes})")
    return max(n_classes, 2)


# --- Fine-tuning ---
def finetune(ckpt: Checkpoint, train_set: Sequence[Sample], config: RunConfig, seed: int = 0) -> FinetuneResult:
    """
    Minimise cross-entropy of head(encode(x)) over the training samples. The
    checkpoint's encoder is copied, so the checkpoint itself is never modified.
    """
    ds = config.downstream
    labels = labels_of(train_set)
    n_classes = resolve_classes(labels, ds.n_classes)

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    encoder = copy.deepcopy(ckpt.encoder)
    head = nn.Linear(encoder.embed_dim, n_classes).to(_param_dtype(encoder))
    if ds.frozen_encoder:
        encoder.requires_grad_(False)
        params = list(head.parameters())
    else:
        params = list(encoder.parameters()) + list(head.parameters())
    optimizer = torch.optim.Adam(params, lr=ds.lr)

    signals = stack_samples(train_set)
    dtype = _param_dtype(encoder)
    y_all = torch.as_tensor(labels)
    curve = []
    for epoch in tqdm(range(ds.epochs), desc=f"finetune seed={seed}", leave=False):
        encoder.train(not ds.frozen_encoder)
        order = rng.permutation(len(train_set))
        total, correct = 0.0, 0
        for start in range(0, len(order), ds.batch_size):
            idx = order[start:start + ds.batch_size]
            if ds.use_views:
                views = batch_views(signals[idx], config.augment.views, rng, config.augment.scattered_mask)
                e = encoder.encode_views(torch.as_tensor(views, dtype=dtype))
            else:
                e = encoder(torch.as_tensor(signals[idx], dtype=dtype))
            logits = head(e)
            loss = F.cross_entropy(logits, y_all[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss) * len(idx)
            correct += int((logits.argmax(dim=1) == y_all[idx]).sum())
        row = {"epoch": epoch + 1, "loss": total / len(order), "train_accuracy": correct / len(order)}
        curve.append(row)
        logger.debug("finetune epoch %d loss=%.5f acc=%.4f", row["epoch"], row["loss"], row["train_accuracy"])
    logger.info("Fine-tuned on %d samples (%d classes): final loss %.5f", len(train_set), n_classes, curve[-1]["loss"])
    encoder.eval()
    return FinetuneResult(encoder=encoder, head=head, n_classes=n_classes, curve=curve)


@torch.no_grad()
def embed(encoder: EEGEncoder, samples: Sequence[Sample], batch_size: int = 64) -> np.ndarray:
    """Single-view representations, (N, d)."""
    encoder.eval()
    signals = stack_samples(samples)
    dtype = _param_dtype(encoder)
    out = [
        encoder(torch.as_tensor(signals[i:i + batch_size], dtype=dtype)).double().numpy()
        for i in range(0, len(signals), batch_size)
    ]
    return np.concatenate(out)


@torch.no_grad()
def predict_proba(encoder: EEGEncoder, head: nn.Linear, samples: Sequence[Sample]) -> np.ndarray:
    e = torch.as_tensor(embed(encoder, samples), dtype=head.weight.dtype)
    return torch.softmax(head(e), dim=1).double().numpy()


def evaluate(encoder: EEGEncoder, head: nn.Linear, eval_set: Sequence[Sample]) -> MetricsReport:
    if not eval_set:
        raise DownstreamError("evaluation set is empty")
    probs = predict_proba(encoder, head, eval_set)
    return compute_metrics(labels_of(eval_set), probs, n_classes=head.out_features)


# --- Protocols ---
def split_for(config: RunConfig, seed: int, held_out: Optional[str] = None) -> SplitSpec:
    ds = config.downstream
    return SplitSpec(
        mode=ds.split_mode,
        fraction=ds.fraction if ds.split_mode == "fraction" else 1.0,
        held_out_subject=held_out,
        test_subjects=tuple(ds.test_subjects),
        seed=seed,
    )


def run_split(ckpt: Checkpoint, samples: Sequence[Sample], config: RunConfig, seed: int) -> FoldResult:
    """One fixed-train-test or fraction run."""
    train, test = split_samples(canonical_order(samples), split_for(config, seed))
    result = finetune(ckpt, train, config, seed)
    return FoldResult(seed=seed, report=evaluate(result.encoder, result.head, test))


def run_loso(
    ckpt: Checkpoint,
    samples: Sequence[Sample],
    config: RunConfig,
    seeds: Optional[Sequence[int]] = None,
) -> Tuple[List[FoldResult], Dict[str, Dict[str, float]]]:
    """One fine-tune + evaluate per held-out subject and seed; folds are ordered by subject."""
    seeds = list(config.train.seeds if seeds is None else seeds)
    ordered = canonical_order(samples)
    subjects = subjects_of(ordered)
    if len(subjects) < 2:
        raise DownstreamError("leave-one-subject-out needs at least two subjects")

    groups = np.array([s.subject_id for s in ordered])
    folds = []
    splitter = LeaveOneGroupOut()
    splits = sorted(
        splitter.split(np.zeros(len(ordered)), groups=groups), key=lambda split: groups[split[1][0]]
    )
    for train_idx, test_idx in splits:
        held_out = str(groups[test_idx[0]])
        train = [ordered[i] for i in train_idx]
        test = [ordered[i] for i in test_idx]
        for seed in seeds:
            result = finetune(ckpt, train, config, seed)
            report = evaluate(result.encoder, result.head, test)
            logger.info("LOSO subject=%s seed=%d balanced_accuracy=%.4f", held_out, seed, report.balanced_accuracy)
            folds.append(FoldResult(seed=seed, report=report, held_out=held_out))
    return folds, aggregate([f.report for f in folds])


# --- Embedding export ---
def select_embedding_rows(
    samples: Sequence[Sample], count: Optional[int], balanced: bool, seed: int
) -> List[Sample]:
    if count is None:
        return list(samples)
    if count > len(samples):
        raise DownstreamError(f"requested {count} embeddings from {len(samples)} samples")
    rng = np.random.default_rng(seed)
    if not balanced:
        return [samples[i] for i in sorted(rng.choice(len(samples), size=count, replace=False))]

    labels = labels_of(samples)
    classes = np.unique(labels)
    quotas = np.full(len(classes), count // len(classes))
    quotas[: count % len(classes)] += 1
    chosen = []
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(labels == cls)
        if quota > len(members):
            raise DownstreamError(f"class {cls} has {len(members)} samples, balanced export needs {quota}")
        chosen.extend(rng.choice(members, size=int(quota), replace=False).tolist())
    return [samples[i] for i in sorted(chosen)]


def export_embeddings(
    encoder: EEGEncoder,
    samples: Sequence[Sample],
    path: Path | str,
    count: Optional[int] = None,
    balanced: bool = True,
    seed: int = 0,
) -> pd.DataFrame:
    """Write (sample_id, label, e_1..e_d) rows to a CSV file."""
    if not samples:
        raise DownstreamError("no samples to embed")
    rows = select_embedding_rows(list(samples), count, balanced, seed)
    vectors = embed(encoder, rows)
    df = pd.DataFrame(vectors, columns=[f"e_{i + 1}" for i in range(vectors.shape[1])])
    df.insert(0, "label", [s.label for s in rows])
    df.insert(0, "sample_id", [s.sample_id for s in rows])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    logger.info("Exported %d embeddings (d=%d) to %s", len(df), vectors.shape[1], path)
    return df


# --- Generation quality ---
def signal_pearson(generated: np.ndarray, original: np.ndarray) -> Tuple[float, float, List[str]]:
    """
    Mean per-channel Pearson r between (N, C, T) signal stacks, in the time domain and
    between magnitude spectra. Channels with zero variance in either signal are skipped;
    a domain with no usable channel pair reports NO_CORRELATION and a warning entry.
    """
    generated = np.asarray(generated, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if generated.shape != original.shape:
        raise DownstreamError(f"shape mismatch {generated.shape} vs {original.shape}")
    gen_spec = np.abs(np.fft.rfft(generated, axis=-1))
    orig_spec = np.abs(np.fft.rfft(original, axis=-1))

    time_r, freq_r, warnings = [], [], []
    for n in range(generated.shape[0]):
        for c in range(generated.shape[1]):
            if np.ptp(generated[n, c]) == 0 or np.ptp(original[n, c]) == 0:
                warnings.append(f"sample {n} channel {c}: constant signal skipped")
                continue
            time_r.append(pearsonr(generated[n, c], original[n, c]).statistic)
            if np.ptp(gen_spec[n, c]) > 0 and np.ptp(orig_spec[n, c]) > 0:
                freq_r.append(pearsonr(gen_spec[n, c], orig_spec[n, c]).statistic)
    if not time_r:
        warnings.append(f"no non-constant channel pair; pearson_time reported as {NO_CORRELATION}")
    if not freq_r:
        warnings.append(f"no non-constant spectrum pair; pearson_freq reported as {NO_CORRELATION}")
    for message in warnings:
        logger.warning(message)
    time = float(np.mean(time_r)) if time_r else NO_CORRELATION
    freq = float(np.mean(freq_r)) if freq_r else NO_CORRELATION
    return time, freq, warnings


def condition_vectors(ckpt: Checkpoint, samples: Sequence[Sample], seed: int) -> torch.Tensor:
    """Representation e of each sample's view set (original plus configured augmentations)."""
    specs = [
        AugmentSpec.from_config(view, seed + i, ckpt.config.augment.scattered_mask)
        for i, view in enumerate(ckpt.config.augment.views)
    ]
    ckpt.encoder.eval()
    with torch.no_grad():
        return torch.stack([encode(ckpt.encoder, make_views(s, specs)) for s in samples])


def generate_for(
    ckpt: Checkpoint, samples: Sequence[Sample], scale: float, seed: int
) -> List[Sample]:
    """One generated signal per sample, conditioned on that sample's view set."""
    cond = condition_vectors(ckpt, samples, seed)
    latent_shape = ckpt.latent_shape or (samples[0].data.shape[0], samples[0].length // ckpt.basis.window, ckpt.basis.components)
    latents = diffusion_ops.sample(
        len(samples), cond, scale, ckpt.diffusion, ckpt.dit, latent_shape,
        seed=seed, stride=ckpt.config.diffusion.sample_stride,
    )
    return diffusion_ops.reconstruct_signal(latents.double().numpy(), ckpt.basis)


def generation_quality(
    ckpt: Checkpoint, eval_samples: Sequence[Sample], scale: Optional[float] = None, seed: int = 0
) -> Dict[str, object]:
    if not eval_samples:
        raise DownstreamError("no samples to condition on")
    scale = ckpt.config.diffusion.guidance_scale if scale is None else scale
    generated = generate_for(ckpt, eval_samples, scale, seed)
    pearson_time, pearson_freq, warnings = signal_pearson(
        stack_samples(generated), stack_samples(eval_samples)
    )
    logger.info("Generation quality: pearson_time=%.4f pearson_freq=%.4f", pearson_time, pearson_freq)
    return {"pearson_time": pearson_time, "pearson_freq": pearson_freq, "n": len(eval_samples), "warnings": warnings}
