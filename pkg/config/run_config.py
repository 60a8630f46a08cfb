"""
run_config.py — Validated run configuration
--------------------------------------------

A run is described by one TOML file with a table per section:

    [data] [data.synth] [pca] [augment] [[augment.views]] [encoder] [dit]
    [diffusion] [train] [downstream] [output]

Every section is a pydantic model that rejects unknown keys, so a typo in a config
file fails validation instead of silently falling back to a default.
"""

import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, model_validator

from config import settings
from tools.errors import ConfigError

# Canonical EEG bands in Hz; synthetic class c defaults to the centre of band c.
EEG_BANDS = {
    "delta": (1.0, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")


# --- Data ---
class SynthConfig(_Section):
    channels: int = Field(4, gt=0, description="Channel count C")
    duration: int = Field(2000, gt=0, description="Timestamps T per recording")
    sampling_rate: float = Field(200.0, gt=0, description="Generation rate in Hz")
    n_classes: int = Field(2, gt=0, description="Number of classes")
    recordings_per_class: int = Field(8, gt=0)
    subjects: int = Field(4, gt=0, description="Recordings are assigned to subjects round-robin")
    amplitude: float = Field(10.0, gt=0, description="Per-sinusoid amplitude (microvolts)")
    snr_db: float = Field(10.0, description="Signal-to-noise ratio in dB; inf disables noise")
    class_frequencies: Optional[List[List[float]]] = Field(
        None, description="Per-class sinusoid frequencies in Hz; defaults to EEG band centres"
    )
    subject_gain_jitter: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = Field(0, description="Generator seed")

    @model_validator(mode="after")
    def _check_frequencies(self):
        if self.class_frequencies is None:
            if self.n_classes > len(EEG_BANDS):
                raise ValueError(
                    f"class_frequencies required for more than {len(EEG_BANDS)} classes"
                )
            return self
        if len(self.class_frequencies) != self.n_classes:
            raise ValueError("class_frequencies must list one frequency set per class")
        nyquist = self.sampling_rate / 2
        for freqs in self.class_frequencies:
            if not freqs or any(f <= 0 or f >= nyquist for f in freqs):
                raise ValueError(f"class frequencies must lie in (0, {nyquist}) Hz")
        return self

    def frequencies(self) -> List[List[float]]:
        if self.class_frequencies is not None:
            return [list(f) for f in self.class_frequencies]
        bands = list(EEG_BANDS.values())
        return [[(bands[c][0] + bands[c][1]) / 2] for c in range(self.n_classes)]


class DataConfig(_Section):
    path: Optional[Path] = Field(None, description="Directory of .eegb files plus labels.csv")
    synth: Optional[SynthConfig] = None
    sample_length: int = Field(400, gt=0, description="Sample length t^s in timestamps")
    stride: int = Field(200, ge=1, description="Segmentation stride s^t")
    sampling_rate: float = Field(200.0, gt=0, description="Target rate after resampling")
    normalize: bool = Field(True, description="Z-score each channel at ingestion")
    pretrain_exclude_test: bool = Field(
        True, description="Leave downstream test subjects out of pre-training"
    )

    @model_validator(mode="after")
    def _check_source(self, info: ValidationInfo):
        if (self.path is None) == (self.synth is None):
            raise ValueError("exactly one of data.path or data.synth must be set")
        check_path = not (info.context or {}).get("skip_path_check", False)
        if check_path and self.path is not None and not self.path.is_dir():
            raise ValueError(f"data path does not exist: {self.path}")
        return self


# --- Model ---
class PcaConfig(_Section):
    enabled: bool = True
    window: int = Field(40, gt=0, description="Window length omega")
    components: int = Field(20, gt=0, description="Retained components k")
    scale_coefficients: bool = Field(True, description="Standardize latent coefficients")

    @model_validator(mode="after")
    def _check_components(self):
        if self.enabled and self.components > self.window:
            raise ValueError("pca.components must not exceed pca.window")
        return self


class AugmentViewSpec(_Section):
    kind: Literal["identity", "zero_mask", "amplitude_scale"]
    mask_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    scale_range: Tuple[float, float] = (0.5, 2.0)

    @model_validator(mode="after")
    def _check_range(self):
        low, high = self.scale_range
        if not 0 < low <= high:
            raise ValueError("scale_range must satisfy 0 < low <= high")
        return self


def _default_views() -> List[AugmentViewSpec]:
    return [AugmentViewSpec(kind="zero_mask"), AugmentViewSpec(kind="amplitude_scale")]


class AugmentConfig(_Section):
    views: List[AugmentViewSpec] = Field(default_factory=_default_views, min_length=1)
    scattered_mask: bool = False


class EncoderConfig(_Section):
    patch_window: int = Field(40, gt=0)
    embed_dim: int = Field(64, gt=0)
    depth: int = Field(4, gt=0)
    heads: int = Field(4, gt=0)
    mlp_ratio: float = Field(4.0, gt=0)
    max_tokens: int = Field(256, gt=0, description="Positional table size")
    conv_kernel: int = Field(15, gt=0)
    conv_channels: int = Field(1, gt=0)

    @model_validator(mode="after")
    def _check_heads(self):
        if self.embed_dim % self.heads:
            raise ValueError("encoder.embed_dim must be divisible by encoder.heads")
        if self.conv_kernel % 2 == 0:
            raise ValueError("encoder.conv_kernel must be odd for same-padding")
        return self


class DiTConfig(_Section):
    token_dim: int = Field(64, gt=0)
    depth: int = Field(4, gt=0)
    heads: int = Field(4, gt=0)
    mlp_ratio: float = Field(4.0, gt=0)
    residual_conditioning: bool = True
    frequency_embedding_size: int = Field(256, gt=0)

    @model_validator(mode="after")
    def _check_heads(self):
        if self.token_dim % self.heads:
            raise ValueError("dit.token_dim must be divisible by dit.heads")
        if self.token_dim % 4:
            raise ValueError("dit.token_dim must be a multiple of 4 for 2-D sine-cosine positions")
        return self


class DiffusionConfig(_Section):
    t_max: int = Field(1000, ge=2)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(2e-2, gt=0, lt=1)
    vlb_weight: float = Field(1e-3, ge=0)
    p_uncond: float = Field(0.1, ge=0, le=1)
    guidance_scale: float = Field(2.0, ge=0)
    sample_stride: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_betas(self):
        if self.beta_start >= self.beta_end:
            raise ValueError("diffusion.beta_start must be below diffusion.beta_end")
        return self


# --- Training ---
class TrainConfig(_Section):
    batch_size: int = Field(32, gt=0)
    steps: int = Field(2000, gt=0)
    lr: float = Field(1e-3, gt=0)
    max_grad_norm: float = Field(1.0, gt=0)
    log_every: int = Field(50, gt=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)


class DownstreamConfig(_Section):
    task: str = "synthetic"
    split_mode: Literal["fixed-train-test", "loso", "fraction"] = "fixed-train-test"
    fraction: float = Field(1.0, gt=0, le=1)
    test_subjects: List[str] = Field(default_factory=list)
    epochs: int = Field(50, gt=0)
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, gt=0)
    frozen_encoder: bool = False
    use_views: bool = False
    n_classes: Optional[int] = Field(None, ge=2)
    embedding_samples: Optional[int] = Field(None, gt=0)
    embedding_balanced: bool = True


class OutputConfig(_Section):
    directory: Path = Path("runs")


class RunConfig(_Section):
    data: DataConfig
    pca: PcaConfig = Field(default_factory=PcaConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    dit: DiTConfig = Field(default_factory=DiTConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    downstream: DownstreamConfig = Field(default_factory=DownstreamConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _check_geometry(self):
        t_s = self.data.sample_length
        if self.dit.token_dim != self.encoder.embed_dim:
            raise ValueError("dit.token_dim must equal encoder.embed_dim (shared conditioning width)")
        if t_s % self.pca.window:
            raise ValueError("pca.window must divide data.sample_length")
        if t_s % self.encoder.patch_window:
            raise ValueError("encoder.patch_window must divide data.sample_length")
        if self.data.synth is not None:
            if t_s > self.data.synth.duration:
                raise ValueError("data.sample_length exceeds data.synth.duration")
            tokens = self.data.synth.channels * (t_s // self.encoder.patch_window)
            if tokens > self.encoder.max_tokens:
                raise ValueError(
                    f"encoder.max_tokens={self.encoder.max_tokens} is below the token grid ({tokens})"
                )
        if self.downstream.split_mode != "loso" and not self.downstream.test_subjects:
            raise ValueError(f"downstream.test_subjects required for split_mode={self.downstream.split_mode}")
        return self

    @property
    def latent_window(self) -> int:
        return self.pca.window

    @property
    def latent_components(self) -> int:
        return self.pca.components if self.pca.enabled else self.pca.window


# --- Loading ---
def load_run_config(path: Path | str) -> RunConfig:
    """Parse and validate a TOML run config; EEGDM_OUT overrides output.directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config {path} is not valid TOML: {e}") from e
    return parse_run_config(raw, base_dir=path.parent)


def parse_run_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    data = raw.get("data")
    if base_dir is not None and isinstance(data, dict) and data.get("path"):
        data_path = Path(data["path"])
        if not data_path.is_absolute():
            data["path"] = str((base_dir / data_path).resolve())
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid run config: {problems}") from e
    override = settings.output_override()
    if override is not None:
        config = config.model_copy(update={"output": OutputConfig(directory=override)})
    return config


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()
