"""
commands.py — Experiment commands
----------------------------------

One function per command, shared by the CLI and the HTTP routers:

- `cmd_pretrain`: fit PCA, train encoder + DiT, write checkpoint and training curve
- `cmd_generate`: conditioned generation to EEGB files plus a quality report
- `cmd_finetune` / `cmd_evaluate` / `cmd_loso` / `cmd_export_embeddings`: downstream
- `cmd_ablate`: the four PCA × augmentation variants
- `cmd_pca_sweep`: reconstruction error and downstream accuracy per component count

Every command writes `config.resolved.json`, its outputs and a `manifest.json` into one
directory and records the run in the registry.
"""

import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from config.run_config import RunConfig, config_hash, load_run_config
from tools import downstream, pca_latent, run_registry
from tools.checkpoint import (
    Classifier,
    load_checkpoint,
    load_classifier,
    load_encoder,
    save_checkpoint,
    save_classifier,
)
from tools.errors import ConfigError, DownstreamError, EEGDMError, NumericalError
from tools.manifest import write_manifest
from tools.metrics import MetricsReport, aggregate
from tools.pretrain import Pretrainer, fit_basis, pretrain_split
from tools.signal_store import (
    Recording,
    Sample,
    canonical_order,
    load_samples,
    save_recording,
    split_samples,
    stack_samples,
)

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "config.resolved.json"


@dataclass
class RunContext:
    command: str
    config: RunConfig
    seeds: List[int]
    out_dir: Path
    run_id: Optional[int] = None
    files: List[Path] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def track(self, path: Path) -> Path:
        self.files.append(Path(path))
        return Path(path)

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.path(name)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
        return self.track(path)

    def record(self, scope: str, metrics: Dict[str, float]):
        run_registry.record_metrics(self.run_id, scope, metrics)


@contextmanager
def run_context(
    command: str,
    config: RunConfig,
    seeds: Sequence[int],
    out_dir: Optional[Path] = None,
) -> Iterator[RunContext]:
    out = Path(out_dir) if out_dir else Path(config.output.directory) / command
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(command=command, config=config, seeds=list(seeds), out_dir=out.resolve())
    ctx.run_id = run_registry.start_run(command, ctx.seeds, config_hash(config), str(ctx.out_dir))
    ctx.track(ctx.path(RESOLVED_CONFIG))
    ctx.path(RESOLVED_CONFIG).write_text(config.model_dump_json(indent=2))
    logger.info("%s → %s", command, ctx.out_dir)
    try:
        yield ctx
    except NumericalError as e:
        run_registry.finish_run(ctx.run_id, "diverged", str(e))
        raise
    except EEGDMError as e:
        run_registry.finish_run(ctx.run_id, "invalid", str(e))
        raise
    except Exception as e:
        run_registry.finish_run(ctx.run_id, "failed", str(e))
        raise
    write_manifest(ctx.out_dir, command, config_hash(config), ctx.seeds, ctx.files, ctx.extra)
    run_registry.finish_run(ctx.run_id, "ok")


# --- Shared helpers ---
def resolve_seeds(config: RunConfig, seed: Optional[int]) -> List[int]:
    return [seed] if seed is not None else list(config.train.seeds)


def with_overrides(config: RunConfig, overrides: Dict[str, Dict[str, Any]]) -> RunConfig:
    raw = config.model_dump()
    for section, values in overrides.items():
        raw[section] = {**raw[section], **values}
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid override {overrides}: {e}") from e


def evaluation_samples(samples: Sequence[Sample], config: RunConfig) -> List[Sample]:
    """Samples of the downstream test subjects, or every sample when none are configured."""
    held_out = set(config.downstream.test_subjects)
    chosen = [s for s in canonical_order(samples) if not held_out or s.subject_id in held_out]
    if not chosen:
        raise DownstreamError(f"no samples for test subjects {sorted(held_out)}")
    return chosen


def downstream_runs(ckpt, samples: Sequence[Sample], config: RunConfig, seeds: Sequence[int]):
    """Fold results for the configured protocol: one per seed, or per subject and seed for LOSO."""
    if config.downstream.split_mode == "loso":
        folds, _ = downstream.run_loso(ckpt, samples, config, seeds)
        return folds
    return [downstream.run_split(ckpt, samples, config, seed) for seed in seeds]


def quality_subset(samples: Sequence[Sample], limit: int, seed: int) -> List[Sample]:
    if len(samples) <= limit:
        return list(samples)
    rng = np.random.default_rng(seed)
    return [samples[i] for i in sorted(rng.choice(len(samples), size=limit, replace=False))]


# --- Commands ---
def cmd_pretrain(config_path: Path | str, out: Optional[Path] = None, seed: Optional[int] = None) -> Dict[str, Any]:
    config = load_run_config(config_path)
    seed = resolve_seeds(config, seed)[0]
    with run_context("pretrain", config, [seed], out) as ctx:
        trainer = Pretrainer(config, seed)
        curve = trainer.fit()
        ckpt_path = ctx.track(save_checkpoint(ctx.path("checkpoint.pt"), trainer.checkpoint()))
        curve_path = ctx.track(trainer.write_curve(ctx.path("training_curve.csv")))
        result = {
            "checkpoint": str(ckpt_path),
            "curve": str(curve_path),
            "steps": trainer.step,
            "initial_loss": curve[0]["loss"],
            "final_loss": curve[-1]["loss"],
            "explained_variance": trainer.basis.explained_variance_ratio,
        }
        ctx.record(f"seed={seed}", {"final_loss": result["final_loss"], "initial_loss": result["initial_loss"]})
        ctx.write_json("pretrain.json", result)
    return result


def cmd_generate(
    config_path: Path | str,
    checkpoint: Path | str,
    n: int = 8,
    scale: Optional[float] = None,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
) -> Dict[str, Any]:
    config = load_run_config(config_path)
    ckpt = load_checkpoint(checkpoint)
    seed = resolve_seeds(config, seed)[0]
    scale = ckpt.config.diffusion.guidance_scale if scale is None else scale
    with run_context("generate", config, [seed], out) as ctx:
        pool = evaluation_samples(load_samples(config.data), config)
        if n > len(pool):
            raise DownstreamError(f"requested {n} generations, only {len(pool)} conditioning samples")
        sources = quality_subset(pool, n, seed)
        generated = downstream.generate_for(ckpt, sources, scale, seed)
        for i, (source, signal) in enumerate(zip(sources, generated)):
            recording = Recording(
                recording_id=f"generated-{i:04d}",
                data=signal.data,
                sampling_rate=config.data.sampling_rate,
                subject_id=source.subject_id,
                label=source.label,
            )
            ctx.track(save_recording(recording, ctx.path(f"{recording.recording_id}.eegb")))
        pearson_time, pearson_freq, warnings = downstream.signal_pearson(
            stack_samples(generated), stack_samples(sources)
        )
        report = {
            "n": n,
            "guidance_scale": scale,
            "seed": seed,
            "pearson_time": pearson_time,
            "pearson_freq": pearson_freq,
            "sources": [s.sample_id for s in sources],
            "warnings": warnings,
        }
        ctx.record(f"seed={seed}", {"pearson_time": pearson_time, "pearson_freq": pearson_freq})
        ctx.write_json("quality.json", report)
    return report


def cmd_finetune(
    config_path: Path | str,
    checkpoint: Path | str,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    config = load_run_config(config_path)
    ckpt = load_checkpoint(checkpoint)
    seeds = resolve_seeds(config, seed)
    with run_context("finetune", config, seeds, out) as ctx:
        samples = canonical_order(load_samples(config.data))
        if config.downstream.split_mode == "loso":
            raise DownstreamError("split_mode=loso is run by the loso command")
        runs = []
        for s in seeds:
            train, test = split_samples(samples, downstream.split_for(config, s))
            result = downstream.finetune(ckpt, train, config, s)
            report = downstream.evaluate(result.encoder, result.head, test)
            ctx.track(save_classifier(
                ctx.path(f"classifier_seed{s}.pt"),
                Classifier(config=config, encoder=result.encoder, head=result.head, seed=s),
            ))
            ctx.record(f"seed={s}", report.scalars())
            runs.append({
                "seed": s,
                "n_train": len(train),
                "train_ids": [x.sample_id for x in train],
                "report": report.model_dump(),
                "curve": result.curve,
            })
        summary = aggregate([MetricsReport.model_validate(r["report"]) for r in runs])
        ctx.record("aggregate", {f"{k}_mean": v["mean"] for k, v in summary.items()})
        payload = {"split_mode": config.downstream.split_mode, "runs": runs, "aggregate": summary}
        ctx.write_json("finetune.json", payload)
    return payload


def cmd_evaluate(
    config_path: Path | str,
    checkpoint: Path | str,
    out: Optional[Path] = None,
) -> Dict[str, Any]:
    """Evaluate a fine-tuned classifier on the configured evaluation samples."""
    config = load_run_config(config_path)
    classifier = load_classifier(checkpoint)
    with run_context("evaluate", config, [classifier.seed], out) as ctx:
        eval_set = evaluation_samples(load_samples(config.data), config)
        report = downstream.evaluate(classifier.encoder, classifier.head, eval_set)
        ctx.record("eval", report.scalars())
        ctx.write_json("metrics.json", report.model_dump())
    return report.model_dump()


def cmd_loso(
    config_path: Path | str,
    checkpoint: Path | str,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    config = load_run_config(config_path)
    ckpt = load_checkpoint(checkpoint)
    seeds = resolve_seeds(config, seed)
    with run_context("loso", config, seeds, out) as ctx:
        folds, summary = downstream.run_loso(ckpt, load_samples(config.data), config, seeds)
        for fold in folds:
            ctx.record(f"subject={fold.held_out},seed={fold.seed}", fold.report.scalars())
        ctx.record("aggregate", {f"{k}_mean": v["mean"] for k, v in summary.items()})
        payload = {
            "folds": [
                {"subject": f.held_out, "seed": f.seed, "report": f.report.model_dump()} for f in folds
            ],
            "aggregate": summary,
        }
        ctx.write_json("loso.json", payload)
    return payload


def cmd_export_embeddings(
    config_path: Path | str,
    checkpoint: Path | str,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    config = load_run_config(config_path)
    encoder = load_encoder(checkpoint)
    seed = resolve_seeds(config, seed)[0]
    with run_context("export-embeddings", config, [seed], out) as ctx:
        samples = canonical_order(load_samples(config.data))
        df = downstream.export_embeddings(
            encoder,
            samples,
            ctx.path("embeddings.csv"),
            count=config.downstream.embedding_samples,
            balanced=config.downstream.embedding_balanced,
            seed=seed,
        )
        ctx.track(ctx.path("embeddings.csv"))
        result = {"path": str(ctx.path("embeddings.csv")), "rows": len(df), "columns": len(df.columns)}
    return result


# --- Experiments ---
ABLATION_VARIANTS = {
    "A": {"pca": False, "augment": False},
    "B": {"pca": True, "augment": False},
    "C": {"pca": False, "augment": True},
    "D": {"pca": True, "augment": True},
}


def variant_config(config: RunConfig, pca: bool, augment: bool) -> RunConfig:
    views = [v.model_dump() for v in config.augment.views] if augment else [{"kind": "identity"}]
    return with_overrides(config, {"pca": {"enabled": pca}, "augment": {"views": views}})


def cmd_ablate(
    config_path: Path | str,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    quality_samples: int = 32,
) -> Dict[str, Any]:
    """Pre-train and fine-tune each variant with identical seeds; report accuracy and generation quality."""
    config = load_run_config(config_path)
    seeds = resolve_seeds(config, seed)
    with run_context("ablate", config, seeds, out) as ctx:
        samples = load_samples(config.data)
        quality_pool = evaluation_samples(samples, config)
        table = {}
        for name, flags in ABLATION_VARIANTS.items():
            variant = variant_config(config, **flags)
            reports, quality = [], []
            for s in seeds:
                trainer = Pretrainer(variant, s, samples)
                trainer.fit(progress=False)
                ckpt = trainer.checkpoint()
                reports.extend(f.report for f in downstream_runs(ckpt, samples, variant, [s]))
                quality.append(downstream.generation_quality(
                    ckpt, quality_subset(quality_pool, quality_samples, s), seed=s
                ))
            summary = aggregate(reports)
            table[name] = {
                **flags,
                "metrics": summary,
                "pearson_time": {
                    "mean": float(np.mean([q["pearson_time"] for q in quality])),
                    "std": float(np.std([q["pearson_time"] for q in quality])),
                },
                "pearson_freq": {
                    "mean": float(np.mean([q["pearson_freq"] for q in quality])),
                    "std": float(np.std([q["pearson_freq"] for q in quality])),
                },
            }
            ctx.record(f"variant={name}", {
                "balanced_accuracy_mean": summary["balanced_accuracy"]["mean"],
                "pearson_time_mean": table[name]["pearson_time"]["mean"],
                "pearson_freq_mean": table[name]["pearson_freq"]["mean"],
            })
            logger.info(
                "Variant %s: balanced_accuracy=%.4f pearson_freq=%.4f",
                name, summary["balanced_accuracy"]["mean"], table[name]["pearson_freq"]["mean"],
            )
        ctx.write_json("ablation.json", {"seeds": seeds, "variants": table})
    return table


def cmd_pca_sweep(
    config_path: Path | str,
    components: Sequence[int],
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    downstream_eval: bool = True,
) -> Dict[str, Any]:
    """Per component count: training-set reconstruction MSE, explained variance and downstream accuracy."""
    config = load_run_config(config_path)
    seeds = resolve_seeds(config, seed)
    components = sorted(set(components))
    with run_context("pca-sweep", config, seeds, out) as ctx:
        samples = load_samples(config.data)
        signals = stack_samples(pretrain_split(samples, config))
        windows = pca_latent.collect_windows(signals, config.pca.window)
        rows = []
        for k in components:
            variant = with_overrides(config, {"pca": {"enabled": True, "components": k}})
            basis = fit_basis(signals, variant)
            row = {
                "components": k,
                "reconstruction_mse": pca_latent.reconstruction_mse(windows, basis),
                "explained_variance": basis.explained_variance_ratio,
            }
            if downstream_eval:
                reports = []
                for s in seeds:
                    trainer = Pretrainer(variant, s, samples)
                    trainer.fit(progress=False)
                    reports.extend(f.report for f in downstream_runs(trainer.checkpoint(), samples, variant, [s]))
                row["metrics"] = aggregate(reports)
            ctx.record(f"k={k}", {
                "reconstruction_mse": row["reconstruction_mse"],
                "explained_variance": row["explained_variance"],
            })
            rows.append(row)
        mse = [r["reconstruction_mse"] for r in rows]
        if any(b > a + 1e-12 for a, b in zip(mse, mse[1:])):
            logger.warning("Reconstruction MSE increased with k: %s", mse)
        ctx.write_json("pca_sweep.json", {"seeds": seeds, "rows": rows})
    return {"rows": rows}
