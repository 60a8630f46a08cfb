"""
signal_store.py — EEG Data Model, Persistence & Splits
-------------------------------------------------------

This module holds the EEG containers used across the toolkit and everything that
moves them between disk, generators and training code.

Features:
- `Recording` / `Sample` containers (C×T and C×t^s float32 matrices)
- EEGB1 file format: one header line (`EEGB1 {json}\\n`) followed by float32
  little-endian values in channel-major order
- Dataset directories (`*.eegb` + `labels.csv` sidecar) with resampling and
  per-channel z-scoring at ingestion
- Segmentation into ⌊(T − t^s)/s^t⌋ + 1 samples
- Deterministic synthetic EEG: band-limited sinusoid mixtures plus 1/f noise
- Fixed, leave-one-subject-out and class-stratified fraction splits

Dependencies:
- numpy for signal generation and interpolation
- pandas for the label sidecar
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.run_config import DataConfig, SynthConfig
from tools.errors import (
    MalformedHeaderError,
    RecordingError,
    SegmentationError,
    ShapeMismatchError,
    SplitError,
    TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

FORMAT_TAG = b"EEGB1"
PAYLOAD_DTYPE = "float32-le"
LABELS_SIDECAR = "labels.csv"
SPLIT_MODES = ("fixed-train-test", "loso", "fraction")


# --- Containers ---
@dataclass(frozen=True, eq=False)
class Recording:
    """
    One continuous multi-channel EEG recording X ∈ R^{C×T}.

    Data is stored as float32 so a save/load round trip is bit-exact.
    """
    recording_id: str
    data: np.ndarray
    sampling_rate: float
    channel_names: Tuple[str, ...] = ()
    subject_id: str = "S01"
    label: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise RecordingError(f"recording data must be a non-empty C×T matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise RecordingError(f"recording {self.recording_id} contains non-finite values")
        if not self.sampling_rate > 0:
            raise RecordingError(f"sampling_rate must be positive, got {self.sampling_rate}")
        names = tuple(self.channel_names) or tuple(f"EEG{i + 1:02d}" for i in range(data.shape[0]))
        if len(names) != data.shape[0]:
            raise RecordingError(f"{len(names)} channel names for {data.shape[0]} channels")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Sample:
    """A C×t^s window cut from a recording."""
    data: np.ndarray
    source_recording: str
    offset: int
    label: Optional[int] = None
    subject_id: str = "S01"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise RecordingError(f"sample data must be C×t^s, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def sample_id(self) -> str:
        return f"{self.source_recording}@{self.offset}"

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    mode: str
    fraction: float = 1.0
    held_out_subject: Optional[str] = None
    test_subjects: Tuple[str, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise SplitError(f"unknown split mode {self.mode!r}")
        if not 0 < self.fraction <= 1:
            raise SplitError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.mode == "loso" and not self.held_out_subject:
            raise SplitError("loso split requires held_out_subject")
        if self.mode != "loso" and not self.test_subjects:
            raise SplitError(f"{self.mode} split requires test_subjects")
        object.__setattr__(self, "test_subjects", tuple(self.test_subjects))


# --- Segmentation ---
def segment(recording: Recording, sample_length: int, stride: int) -> List[Sample]:
    """Cut ⌊(T − t^s)/s^t⌋ + 1 samples; sample i starts at i·s^t."""
    if stride < 1:
        raise SegmentationError(f"stride must be at least 1, got {stride}")
    if sample_length < 1:
        raise SegmentationError(f"sample length must be at least 1, got {sample_length}")
    if sample_length > recording.duration:
        raise SegmentationError("sample length exceeds recording")

    count = (recording.duration - sample_length) // stride + 1
    return [
        Sample(
            data=recording.data[:, i * stride: i * stride + sample_length],
            source_recording=recording.recording_id,
            offset=i * stride,
            label=recording.label,
            subject_id=recording.subject_id,
        )
        for i in range(count)
    ]


# --- Preprocessing ---
def zscore(recording: Recording) -> Recording:
    """Per-channel mean 0 / variance 1; constant channels are only centred."""
    data = recording.data.astype(np.float64)
    mean = data.mean(axis=1, keepdims=True)
    std = data.std(axis=1, keepdims=True)
    flat = std[:, 0] == 0
    if flat.any():
        logger.warning(
            "Recording %s: %d constant channel(s) left unscaled", recording.recording_id, int(flat.sum())
        )
        std[flat] = 1.0
    return replace(recording, data=(data - mean) / std)


def resample(recording: Recording, target_rate: float) -> Recording:
    """Linear interpolation onto a uniform grid at target_rate covering the same span."""
    if target_rate <= 0:
        raise RecordingError(f"target rate must be positive, got {target_rate}")
    if target_rate == recording.sampling_rate:
        return recording
    span = (recording.duration - 1) / recording.sampling_rate
    new_length = int(math.floor(span * target_rate + 1e-9)) + 1
    t_old = np.arange(recording.duration) / recording.sampling_rate
    t_new = np.arange(new_length) / target_rate
    data = np.stack([np.interp(t_new, t_old, channel) for channel in recording.data.astype(np.float64)])
    return replace(recording, data=data, sampling_rate=target_rate)


# --- Synthetic EEG ---
def pink_noise(rng: np.random.Generator, channels: int, length: int) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum (DC removed), one row per channel."""
    white = rng.standard_normal((channels, length))
    spectrum = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(length)
    shaping = np.zeros_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    noise = np.fft.irfft(spectrum * shaping, n=length, axis=-1)
    std = noise.std(axis=-1, keepdims=True)
    std[std == 0] = 1.0
    return noise / std


def synth_generate(config: SynthConfig, seed: Optional[int] = None) -> List[Recording]:
    """
    Generate `n_classes × recordings_per_class` labelled recordings.

    Class c is a sum of sinusoids at `config.frequencies()[c]`, each with amplitude
    `config.amplitude` and a random phase per channel, plus 1/f noise scaled to
    `snr_db` relative to the analytic sinusoid power (no noise when snr_db is inf).
    """
    seed = config.seed if seed is None else seed
    if config.channels < 1 or config.duration < 1 or config.sampling_rate <= 0:
        raise RecordingError("synthetic dimensions must be positive")
    rng = np.random.default_rng(seed)
    frequencies = config.frequencies()
    t = np.arange(config.duration) / config.sampling_rate
    gains = 1.0 + rng.uniform(-config.subject_gain_jitter, config.subject_gain_jitter, size=config.subjects)
    noisy = not math.isinf(config.snr_db)

    recordings = []
    for label, freqs in enumerate(frequencies):
        freqs = np.asarray(freqs, dtype=np.float64)
        signal_power = len(freqs) * config.amplitude ** 2 / 2
        for r in range(config.recordings_per_class):
            index = label * config.recordings_per_class + r
            subject = index % config.subjects
            phases = rng.uniform(0.0, 2 * np.pi, size=(config.channels, len(freqs)))
            waves = np.sin(2 * np.pi * freqs[None, :, None] * t[None, None, :] + phases[:, :, None])
            data = config.amplitude * waves.sum(axis=1)
            if noisy:
                noise_power = signal_power / 10 ** (config.snr_db / 10)
                data = data + np.sqrt(noise_power) * pink_noise(rng, config.channels, config.duration)
            recordings.append(Recording(
                recording_id=f"synth-c{label}-r{r:03d}",
                data=gains[subject] * data,
                sampling_rate=config.sampling_rate,
                subject_id=f"S{subject + 1:02d}",
                label=label,
            ))
    logger.info(
        "Generated %d synthetic recordings (%d classes, seed=%d)", len(recordings), len(frequencies), seed
    )
    return recordings


# --- EEGB1 persistence ---
def save_recording(recording: Recording, path: Path | str) -> Path:
    path = Path(path)
    header = {
        "recording_id": recording.recording_id,
        "subject_id": recording.subject_id,
        "label": recording.label,
        "channel_names": list(recording.channel_names),
        "sampling_rate": recording.sampling_rate,
        "shape": [recording.channels, recording.duration],
        "dtype": PAYLOAD_DTYPE,
    }
    with open(path, "wb") as f:
        f.write(FORMAT_TAG + b" " + json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(recording.data.astype("<f4").tobytes(order="C"))
    return path


def _parse_header(raw: bytes) -> Tuple[dict, int]:
    newline = raw.find(b"\n")
    if not raw.startswith(FORMAT_TAG + b" ") or newline < 0:
        raise MalformedHeaderError("malformed header: missing EEGB1 tag line")
    try:
        header = json.loads(raw[len(FORMAT_TAG) + 1:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"malformed header: {e}") from e
    required = {"recording_id", "channel_names", "sampling_rate", "shape", "dtype"}
    if not isinstance(header, dict) or not required <= header.keys():
        raise MalformedHeaderError(f"malformed header: expected keys {sorted(required)}")
    shape = header["shape"]
    if (
        not isinstance(shape, list) or len(shape) != 2
        or not all(isinstance(n, int) and n > 0 for n in shape)
    ):
        raise MalformedHeaderError(f"malformed header: bad shape {shape!r}")
    if header["dtype"] != PAYLOAD_DTYPE:
        raise MalformedHeaderError(f"malformed header: unsupported dtype {header['dtype']!r}")
    return header, newline + 1


def load_recording(path: Path | str) -> Recording:
    raw = Path(path).read_bytes()
    header, start = _parse_header(raw)
    payload = raw[start:]
    channels, duration = header["shape"]

    if len(payload) % 4:
        raise TruncatedPayloadError("truncated payload")
    values = len(payload) // 4
    if values != channels * duration:
        if values % duration == 0:
            raise ShapeMismatchError(
                f"shape mismatch: header declares {channels} channels, payload holds {values // duration}"
            )
        raise TruncatedPayloadError("truncated payload")
    if len(header["channel_names"]) != channels:
        raise ShapeMismatchError(
            f"shape mismatch: {len(header['channel_names'])} channel names for {channels} channels"
        )

    data = np.frombuffer(payload, dtype="<f4").reshape(channels, duration).astype(np.float32)
    return Recording(
        recording_id=header["recording_id"],
        data=data,
        sampling_rate=header["sampling_rate"],
        channel_names=tuple(header["channel_names"]),
        subject_id=header.get("subject_id") or "S01",
        label=header.get("label"),
    )


def write_dataset(recordings: Iterable[Recording], directory: Path | str) -> Path:
    """Write one .eegb file per recording plus the labels.csv sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for recording in recordings:
        save_recording(recording, directory / f"{recording.recording_id}.eegb")
        rows.append({
            "recording_id": recording.recording_id,
            "subject_id": recording.subject_id,
            "label": recording.label,
        })
    pd.DataFrame(rows, columns=["recording_id", "subject_id", "label"]).to_csv(
        directory / LABELS_SIDECAR, index=False
    )
    return directory


def load_dataset(
    directory: Path | str,
    sampling_rate: Optional[float] = None,
    normalize: bool = True,
) -> List[Recording]:
    """Read a dataset directory; sidecar subject/label values override file headers."""
    directory = Path(directory)
    files = sorted(directory.glob("*.eegb"))
    if not files:
        raise RecordingError(f"no .eegb recordings found in {directory}")

    sidecar = {}
    if (directory / LABELS_SIDECAR).exists():
        df = pd.read_csv(directory / LABELS_SIDECAR, dtype={"recording_id": str, "subject_id": str})
        for row in df.itertuples(index=False):
            label = None if pd.isna(row.label) else int(row.label)
            sidecar[row.recording_id] = (row.subject_id, label)

    recordings = []
    for path in files:
        recording = load_recording(path)
        if recording.recording_id in sidecar:
            subject_id, label = sidecar[recording.recording_id]
            recording = replace(recording, subject_id=subject_id, label=label)
        if sampling_rate is not None:
            recording = resample(recording, sampling_rate)
        if normalize:
            recording = zscore(recording)
        recordings.append(recording)

    channel_counts = {r.channels for r in recordings}
    if len(channel_counts) > 1:
        raise RecordingError(f"recordings disagree on channel count: {sorted(channel_counts)}")
    logger.info("Loaded %d recordings from %s", len(recordings), directory)
    return recordings


def load_samples(data: DataConfig) -> List[Sample]:
    """Ingest the configured corpus (files or synthetic) and segment it."""
    if data.synth is not None:
        recordings = [resample(r, data.sampling_rate) for r in synth_generate(data.synth)]
        if data.normalize:
            recordings = [zscore(r) for r in recordings]
    else:
        recordings = load_dataset(data.path, sampling_rate=data.sampling_rate, normalize=data.normalize)
    samples = []
    for recording in recordings:
        samples.extend(segment(recording, data.sample_length, data.stride))
    return samples


# --- Sample collections ---
def stack_samples(samples: Sequence[Sample]) -> np.ndarray:
    if not samples:
        raise RecordingError("no samples to stack")
    shapes = {s.data.shape for s in samples}
    if len(shapes) > 1:
        raise RecordingError(f"samples disagree on shape: {sorted(shapes)}")
    return np.stack([s.data for s in samples]).astype(np.float32)


def labels_of(samples: Sequence[Sample]) -> np.ndarray:
    if any(s.label is None for s in samples):
        raise SplitError("every sample needs a label")
    return np.array([s.label for s in samples], dtype=np.int64)


def subjects_of(samples: Sequence[Sample]) -> List[str]:
    return sorted({s.subject_id for s in samples})


def canonical_order(samples: Iterable[Sample]) -> List[Sample]:
    """Order independent of how the corpus was listed: by recording id, then offset."""
    return sorted(samples, key=lambda s: (s.source_recording, s.offset))


# --- Splits ---
def stratified_fraction(samples: Sequence[Sample], fraction: float, seed: int) -> List[Sample]:
    """
    Select ⌈fraction·N⌉ samples, allocating per-class quotas by largest remainder
    so each class stays within one sample of its proportional share.
    """
    if not 0 < fraction <= 1:
        raise SplitError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1:
        return list(samples)
    labels = labels_of(samples)
    target = math.ceil(fraction * len(samples))
    classes, counts = np.unique(labels, return_counts=True)

    exact = fraction * counts
    quotas = np.floor(exact).astype(int)
    remainder = target - int(quotas.sum())
    # ties broken by class id
    order = sorted(range(len(classes)), key=lambda i: (-(exact[i] - quotas[i]), classes[i]))
    for i in order[:remainder]:
        quotas[i] += 1

    rng = np.random.default_rng(seed)
    chosen = []
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(labels == cls)
        chosen.extend(rng.choice(members, size=int(quota), replace=False).tolist())
    return [samples[i] for i in sorted(chosen)]


def split_samples(samples: Sequence[Sample], spec: SplitSpec) -> Tuple[List[Sample], List[Sample]]:
    """Return (train, test) according to the split spec."""
    if spec.mode == "loso":
        held_out = {spec.held_out_subject}
    else:
        held_out = set(spec.test_subjects)
    train = [s for s in samples if s.subject_id not in held_out]
    test = [s for s in samples if s.subject_id in held_out]
    if spec.mode == "fraction":
        train = stratified_fraction(train, spec.fraction, spec.seed)
    if not train:
        raise SplitError(f"{spec.mode} split left no training samples")
    if not test:
        raise SplitError(f"{spec.mode} split left no evaluation samples (held out: {sorted(held_out)})")
    return train, test
