"""
checkpoint.py — Versioned model containers
-------------------------------------------

Pre-trained models are one `torch.save` archive (`EEGDM-CKPT`) holding:
- `format` / `version` tags
- `manifest`: resolved run config, step count, seed and the shape of every tensor
- `tensors`: flat name → tensor map with `encoder.*`, `dit.*` and `pca.*` prefixes

Fine-tuned classifiers use the same layout (`EEGDM-CLASSIFIER`) with `encoder.*` and
`head.*` tensors. Loading rebuilds the modules from the embedded config and checks
every tensor against both the manifest and the freshly built module before any
weights are copied.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import torch
from pydantic import ValidationError

from config.run_config import RunConfig
from models.dit_denoiser import DiT
from models.encoder import EEGEncoder
from tools.diffusion import GaussianDiffusion
from tools.errors import CheckpointError
from tools.pca_latent import PcaBasis

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "EEGDM-CKPT"
CHECKPOINT_VERSION = 1
PCA_TENSORS = ("basis", "mean", "eigenvalues", "coeff_scale")


@dataclass
class Checkpoint:
    config: RunConfig
    encoder: EEGEncoder
    dit: DiT
    basis: PcaBasis
    diffusion: GaussianDiffusion
    step: int = 0
    seed: int = 0
    latent_shape: Optional[tuple] = None


def build_models(config: RunConfig, latent_shape: Optional[tuple] = None):
    encoder = EEGEncoder(config.encoder)
    grid = tuple(latent_shape[:2]) if latent_shape else None
    dit = DiT(config.dit, components=config.latent_components, t_max=config.diffusion.t_max, grid=grid)
    return encoder, dit


def _pca_tensors(basis: PcaBasis) -> Dict[str, torch.Tensor]:
    tensors = {f"pca.{name}": torch.from_numpy(getattr(basis, name).copy()) for name in PCA_TENSORS}
    tensors["pca.total_variance"] = torch.tensor(basis.total_variance, dtype=torch.float64)
    return tensors


def save_checkpoint(path: Path | str, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: Dict[str, torch.Tensor] = {}
    tensors.update({f"encoder.{k}": v.detach().cpu() for k, v in ckpt.encoder.state_dict().items()})
    tensors.update({f"dit.{k}": v.detach().cpu() for k, v in ckpt.dit.state_dict().items()})
    tensors.update(_pca_tensors(ckpt.basis))
    manifest = {
        "config": ckpt.config.model_dump_json(),
        "step": ckpt.step,
        "seed": ckpt.seed,
        "latent_shape": list(ckpt.latent_shape) if ckpt.latent_shape else None,
        "pca": {"window": ckpt.basis.window, "components": ckpt.basis.components},
        "shapes": {name: list(t.shape) for name, t in tensors.items()},
    }
    torch.save(
        {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "manifest": manifest, "tensors": tensors},
        path,
    )
    logger.info("Saved checkpoint %s (%d tensors, step %d)", path, len(tensors), ckpt.step)
    return path


def _load_module(module: torch.nn.Module, prefix: str, tensors: Dict[str, torch.Tensor]):
    expected = module.state_dict()
    state = {}
    for name, ref in expected.items():
        key = f"{prefix}.{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {key}")
        if tuple(tensors[key].shape) != tuple(ref.shape):
            raise CheckpointError(
                f"tensor {key} has shape {tuple(tensors[key].shape)}, model expects {tuple(ref.shape)}"
            )
        state[name] = tensors[key]
    extra = [k for k in tensors if k.startswith(prefix + ".") and k[len(prefix) + 1:] not in expected]
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors: {extra[:5]}")
    module.load_state_dict(state)


def _check_manifest_shapes(manifest: dict, tensors: Dict[str, torch.Tensor]):
    for name, shape in manifest["shapes"].items():
        if name not in tensors:
            raise CheckpointError(f"manifest lists tensor {name} missing from the archive")
        if list(tensors[name].shape) != list(shape):
            raise CheckpointError(f"tensor {name} has shape {list(tensors[name].shape)}, manifest says {shape}")


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    archive = _read_archive(path)
    if archive["format"] != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an {CHECKPOINT_FORMAT} archive")
    if archive.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {archive.get('version')}")

    manifest = archive["manifest"]
    tensors = archive["tensors"]
    _check_manifest_shapes(manifest, tensors)

    try:
        config = RunConfig.model_validate_json(manifest["config"], context={"skip_path_check": True})
    except ValidationError as e:
        raise CheckpointError(f"checkpoint config is invalid: {e}") from e
    latent_shape = tuple(manifest["latent_shape"]) if manifest.get("latent_shape") else None
    encoder, dit = build_models(config, latent_shape)
    _load_module(encoder, "encoder", tensors)
    _load_module(dit, "dit", tensors)

    pca = manifest["pca"]
    basis = PcaBasis(
        window=pca["window"],
        components=pca["components"],
        basis=tensors["pca.basis"].numpy(),
        mean=tensors["pca.mean"].numpy(),
        eigenvalues=tensors["pca.eigenvalues"].numpy(),
        coeff_scale=tensors["pca.coeff_scale"].numpy(),
        total_variance=float(tensors["pca.total_variance"]),
    )
    if basis.components != config.latent_components:
        raise CheckpointError(
            f"PCA basis has {basis.components} components, config expects {config.latent_components}"
        )
    return Checkpoint(
        config=config,
        encoder=encoder,
        dit=dit,
        basis=basis,
        diffusion=GaussianDiffusion.from_config(config.diffusion),
        step=manifest["step"],
        seed=manifest["seed"],
        latent_shape=latent_shape,
    )


# --- Fine-tuned classifiers ---
CLASSIFIER_FORMAT = "EEGDM-CLASSIFIER"


@dataclass
class Classifier:
    config: RunConfig
    encoder: EEGEncoder
    head: torch.nn.Linear
    seed: int = 0


def save_classifier(path: Path | str, classifier: Classifier) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = {f"encoder.{k}": v.detach().cpu() for k, v in classifier.encoder.state_dict().items()}
    tensors.update({f"head.{k}": v.detach().cpu() for k, v in classifier.head.state_dict().items()})
    manifest = {
        "config": classifier.config.model_dump_json(),
        "seed": classifier.seed,
        "n_classes": classifier.head.out_features,
        "shapes": {name: list(t.shape) for name, t in tensors.items()},
    }
    torch.save(
        {"format": CLASSIFIER_FORMAT, "version": CHECKPOINT_VERSION, "manifest": manifest, "tensors": tensors},
        path,
    )
    return path


def _read_archive(path: Path) -> dict:
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"could not read checkpoint {path}: {e}") from e
    if not isinstance(archive, dict) or archive.get("format") not in (CHECKPOINT_FORMAT, CLASSIFIER_FORMAT):
        raise CheckpointError(f"{path} is not a model archive")
    return archive


def load_classifier(path: Path | str) -> Classifier:
    path = Path(path)
    archive = _read_archive(path)
    if archive["format"] != CLASSIFIER_FORMAT:
        raise CheckpointError(f"{path} holds a pre-trained model, not a fine-tuned classifier")
    manifest, tensors = archive["manifest"], archive["tensors"]
    _check_manifest_shapes(manifest, tensors)
    try:
        config = RunConfig.model_validate_json(manifest["config"], context={"skip_path_check": True})
    except ValidationError as e:
        raise CheckpointError(f"classifier config is invalid: {e}") from e
    encoder = EEGEncoder(config.encoder)
    _load_module(encoder, "encoder", tensors)
    head = torch.nn.Linear(config.encoder.embed_dim, manifest["n_classes"])
    _load_module(head, "head", tensors)
    encoder.eval()
    return Classifier(config=config, encoder=encoder, head=head, seed=manifest["seed"])


def load_encoder(path: Path | str) -> EEGEncoder:
    """Encoder from either a pre-trained checkpoint or a fine-tuned classifier."""
    path = Path(path)
    if _read_archive(path)["format"] == CLASSIFIER_FORMAT:
        return load_classifier(path).encoder
    return load_checkpoint(path).encoder
