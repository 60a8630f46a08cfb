"""
pca_latent.py — Windowed PCA latent codec
------------------------------------------

Every channel of a C×t^s sample is cut into non-overlapping ω-windows; a single global
orthonormal basis P ∈ R^{k×ω} maps each centred window to k coefficients, and Pᵀ maps
them back. No whitening is folded into P, so P⁻¹ = Pᵀ holds on the retained subspace.

Features:
- `fit`: eigen-decomposition of the population covariance of pooled training windows
- `project` / `reconstruct`: sample ⇄ (C, n_windows, k) latent block
- optional per-coefficient standardisation by √λ for diffusion training
- `identity_basis`: k = ω, zero mean, unit scale (the no-PCA ablation)
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from tools.errors import PcaError
from tools.signal_store import Sample

logger = logging.getLogger(__name__)

NEGATIVE_EIGEN_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class PcaBasis:
    window: int
    components: int
    basis: np.ndarray        # (k, ω), orthonormal rows
    mean: np.ndarray         # (ω,)
    eigenvalues: np.ndarray  # (k,), descending
    coeff_scale: np.ndarray = field(default=None)  # (k,), divides coefficients before diffusion
    total_variance: float = 0.0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.shape != (self.components, self.window):
            raise PcaError(f"basis shape {basis.shape} != ({self.components}, {self.window})")
        if self.components > self.window:
            raise PcaError("components must not exceed window")
        scale = np.ones(self.components) if self.coeff_scale is None else self.coeff_scale
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(self.window))
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64).reshape(self.components))
        object.__setattr__(self, "coeff_scale", np.asarray(scale, dtype=np.float64).reshape(self.components))

    @property
    def explained_variance_ratio(self) -> float:
        if self.total_variance <= 0:
            return 1.0
        return float(self.eigenvalues.sum() / self.total_variance)


@dataclass(frozen=True, eq=False)
class LatentBlock:
    data: np.ndarray  # (C, n_windows, k)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise PcaError(f"latent block must be (C, n_windows, k), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise PcaError("latent block contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


# --- Fitting ---
def collect_windows(samples: np.ndarray, window: int) -> np.ndarray:
    """Pool every ω-window of a (..., C, t^s) array into an (N, ω) matrix."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] % window:
        raise PcaError("window does not tile sample")
    return samples.reshape(-1, window)


def fit(windows: np.ndarray, components: int, scale_coefficients: bool = True) -> PcaBasis:
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2:
        raise PcaError(f"windows must be an (N, ω) matrix, got shape {windows.shape}")
    n, window = windows.shape
    if not 1 <= components <= window:
        raise PcaError(f"components must lie in [1, {window}], got {components}")
    if n < components:
        raise PcaError(f"fewer windows ({n}) than components ({components})")

    mean = windows.mean(axis=0)
    centered = windows - mean
    cov = centered.T @ centered / n
    total = float(np.trace(cov))
    if not total > 0:
        raise PcaError("degenerate covariance")

    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values, kind="stable")[::-1][:components]
    values = values[order]
    basis = vectors[:, order].T

    if values.min() < -NEGATIVE_EIGEN_TOLERANCE * max(1.0, values.max()):
        logger.warning("Covariance has eigenvalue %.3e below tolerance", values.min())
    values = np.clip(values, 0.0, None)

    # largest-magnitude entry of each row is positive
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(components), pivots])
    basis = basis * signs[:, None]

    if scale_coefficients:
        floor = 1e-12 * values.max()
        scale = np.where(values > floor, np.sqrt(values), 1.0)
    else:
        scale = np.ones(components)

    logger.info(
        "Fitted PCA basis on %d windows: omega=%d k=%d explained variance=%.4f",
        n, window, components, values.sum() / total,
    )
    return PcaBasis(
        window=window,
        components=components,
        basis=basis,
        mean=mean,
        eigenvalues=values,
        coeff_scale=scale,
        total_variance=total,
    )


def identity_basis(window: int) -> PcaBasis:
    """Complete basis with no centring or scaling: latents are the raw windows."""
    return PcaBasis(
        window=window,
        components=window,
        basis=np.eye(window),
        mean=np.zeros(window),
        eigenvalues=np.ones(window),
        coeff_scale=np.ones(window),
    )


# --- Codec ---
def project_array(samples: np.ndarray, basis: PcaBasis) -> np.ndarray:
    """(..., C, t^s) → (..., C, t^s/ω, k)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] % basis.window:
        raise PcaError("window does not tile sample")
    windows = samples.reshape(*samples.shape[:-1], samples.shape[-1] // basis.window, basis.window)
    return (windows - basis.mean) @ basis.basis.T


def reconstruct_array(latents: np.ndarray, basis: PcaBasis) -> np.ndarray:
    """(..., C, n_windows, k) → (..., C, n_windows·ω)."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim < 3 or latents.shape[-1] != basis.components:
        raise PcaError(
            f"latent shape {latents.shape} does not match basis with {basis.components} components"
        )
    windows = latents @ basis.basis + basis.mean
    return windows.reshape(*latents.shape[:-2], latents.shape[-2] * basis.window)


def project(sample: Sample, basis: PcaBasis) -> LatentBlock:
    return LatentBlock(project_array(sample.data, basis))


def reconstruct(
    latent: LatentBlock,
    basis: PcaBasis,
    source_recording: str = "reconstructed",
    offset: int = 0,
    label: Optional[int] = None,
) -> Sample:
    return Sample(
        data=reconstruct_array(latent.data, basis),
        source_recording=source_recording,
        offset=offset,
        label=label,
    )


def standardize(latents: np.ndarray, basis: PcaBasis) -> np.ndarray:
    return np.asarray(latents, dtype=np.float64) / basis.coeff_scale


def unstandardize(latents: np.ndarray, basis: PcaBasis) -> np.ndarray:
    return np.asarray(latents, dtype=np.float64) * basis.coeff_scale


def reconstruction_mse(windows: np.ndarray, basis: PcaBasis) -> float:
    """Mean squared error per element of project-then-reconstruct on (N, ω) windows."""
    windows = np.asarray(windows, dtype=np.float64)
    coeffs = (windows - basis.mean) @ basis.basis.T
    restored = coeffs @ basis.basis + basis.mean
    return float(np.mean((restored - windows) ** 2))
