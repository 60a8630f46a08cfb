"""
augment.py — Channel augmentations for conditioning views
----------------------------------------------------------

Label-preserving EEG channel transforms used to build the encoder's view set:

- identity: no change
- zero_mask: ⌊mask_fraction·t^s⌋ timestamps zeroed per channel, either one contiguous run
  (default) or scattered positions
- amplitude_scale: each channel multiplied by one draw from scale_range

Every random draw comes from a numpy Generator seeded by the `AugmentSpec`, so the same
`AugmentSpec` applied to the same sample always yields identical bytes.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.run_config import AugmentViewSpec
from tools.errors import AugmentError
from tools.signal_store import Sample

AUGMENT_KINDS = ("identity", "zero_mask", "amplitude_scale")


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    mask_fraction: float = 0.1
    scale_range: Tuple[float, float] = (0.5, 2.0)
    seed: int = 0
    scattered: bool = False

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise AugmentError(f"unknown augmentation {self.kind!r}")
        if not 0 <= self.mask_fraction < 1:
            raise AugmentError(f"mask_fraction must lie in [0, 1), got {self.mask_fraction}")
        low, high = self.scale_range
        if not 0 < low <= high:
            raise AugmentError(f"scale_range must satisfy 0 < low <= high, got {self.scale_range}")

    @classmethod
    def from_config(cls, view: AugmentViewSpec, seed: int, scattered: bool = False) -> "AugmentSpec":
        return cls(
            kind=view.kind,
            mask_fraction=view.mask_fraction,
            scale_range=tuple(view.scale_range),
            seed=seed,
            scattered=scattered,
        )


@dataclass(frozen=True)
class ViewSet:
    """View 0 is always the unaugmented original."""
    views: Tuple[Sample, ...]

    def __post_init__(self):
        if not self.views:
            raise AugmentError("a view set needs at least one view")
        shapes = {v.data.shape for v in self.views}
        if len(shapes) != 1:
            raise AugmentError(f"views disagree on shape: {sorted(shapes)}")
        object.__setattr__(self, "views", tuple(self.views))

    @property
    def m(self) -> int:
        return len(self.views)

    def stack(self) -> np.ndarray:
        """(m, C, t^s) float32 array."""
        return np.stack([v.data for v in self.views]).astype(np.float32)


# --- Core transforms on raw arrays ---
def mask_length(mask_fraction: float, length: int) -> int:
    return int(math.floor(mask_fraction * length))


def zero_mask(data: np.ndarray, mask_fraction: float, rng: np.random.Generator, scattered: bool = False) -> np.ndarray:
    """Zero ⌊mask_fraction·t⌋ timestamps of each channel of a C×t array."""
    channels, length = data.shape
    n = mask_length(mask_fraction, length)
    out = np.array(data, dtype=np.float32, copy=True)
    if n == 0:
        return out
    for c in range(channels):
        if scattered:
            positions = rng.choice(length, size=n, replace=False)
            out[c, positions] = 0.0
        else:
            start = int(rng.integers(0, length - n + 1))
            out[c, start:start + n] = 0.0
    return out


def amplitude_scale(data: np.ndarray, scale_range: Tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    low, high = scale_range
    scales = rng.uniform(low, high, size=(data.shape[0], 1)) if high > low else np.full((data.shape[0], 1), low)
    return (np.asarray(data, dtype=np.float32) * scales.astype(np.float32)).astype(np.float32)


def apply_array(data: np.ndarray, spec: AugmentSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    if spec.kind == "zero_mask":
        return zero_mask(data, spec.mask_fraction, rng, scattered=spec.scattered)
    if spec.kind == "amplitude_scale":
        return amplitude_scale(data, spec.scale_range, rng)
    return np.array(data, dtype=np.float32, copy=True)


# --- Sample-level API ---
def apply(sample: Sample, spec: AugmentSpec) -> Sample:
    return replace(sample, data=apply_array(sample.data, spec))


def make_views(sample: Sample, specs: Sequence[AugmentSpec]) -> ViewSet:
    """views = [sample] + [apply(sample, s) for s in specs]."""
    if not specs:
        raise AugmentError("at least one augmentation spec is required")
    return ViewSet(views=(sample, *(apply(sample, s) for s in specs)))


def batch_views(
    batch: np.ndarray,
    views: Sequence[AugmentViewSpec],
    rng: np.random.Generator,
    scattered: bool = False,
) -> np.ndarray:
    """
    Build view sets for a (B, C, t^s) batch in one call.

    Each item and view gets its own spec seed drawn from `rng`, so the whole batch is
    reproducible from the caller's generator. Returns (m, B, C, t^s) with view 0 the
    original batch.
    """
    if not views:
        raise AugmentError("at least one augmentation spec is required")
    seeds = rng.integers(0, 2**31 - 1, size=(len(views), batch.shape[0]))
    out: List[np.ndarray] = [np.asarray(batch, dtype=np.float32)]
    for v, view in enumerate(views):
        out.append(np.stack([
            apply_array(item, AugmentSpec.from_config(view, int(seeds[v, i]), scattered))
            for i, item in enumerate(batch)
        ]))
    return np.stack(out)
