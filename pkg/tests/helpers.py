"""Small configs and sample builders shared by the tests."""

import json
import math
from pathlib import Path

from tools.signal_store import Sample

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def tiny_raw_config(**overrides) -> dict:
    """A few-second synthetic corpus and a very small model."""
    raw = {
        "data": {
            "sample_length": 80,
            "stride": 40,
            "sampling_rate": 100.0,
            "synth": {
                "channels": 2,
                "duration": 400,
                "sampling_rate": 100.0,
                "n_classes": 2,
                "recordings_per_class": 6,
                "subjects": 3,
                "snr_db": 20.0,
                "class_frequencies": [[2.0, 3.0], [20.0, 25.0]],
                "seed": 0,
            },
        },
        "pca": {"window": 20, "components": 6},
        "encoder": {"patch_window": 20, "embed_dim": 16, "depth": 1, "heads": 2, "mlp_ratio": 2.0,
                    "max_tokens": 32, "conv_kernel": 5},
        "dit": {"token_dim": 16, "depth": 1, "heads": 2, "mlp_ratio": 2.0, "frequency_embedding_size": 32},
        "diffusion": {"t_max": 20, "guidance_scale": 2.0},
        "train": {"batch_size": 8, "steps": 5, "lr": 1e-3, "log_every": 5, "seeds": [0]},
        "downstream": {"test_subjects": ["S03"], "epochs": 2, "batch_size": 8},
    }
    for section, values in overrides.items():
        if isinstance(values, dict) and isinstance(raw.get(section), dict):
            raw[section] = {**raw[section], **values}
        else:
            raw[section] = values
    return raw


def make_sample(data, source="rec", offset=0, label=0, subject="S01"):
    return Sample(data=data, source_recording=source, offset=offset, label=label, subject_id=subject)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return json.dumps(str(value))


def _toml_table(name: str, table: dict, lines: list):
    scalars = {k: v for k, v in table.items() if not isinstance(v, dict) and not _is_table_list(v)}
    lines.append(f"[{name}]")
    lines.extend(f"{k} = {_toml_value(v)}" for k, v in scalars.items())
    lines.append("")
    for key, value in table.items():
        if isinstance(value, dict):
            _toml_table(f"{name}.{key}", value, lines)
        elif _is_table_list(value):
            for item in value:
                lines.append(f"[[{name}.{key}]]")
                lines.extend(f"{k} = {_toml_value(v)}" for k, v in item.items())
                lines.append("")


def _is_table_list(value) -> bool:
    return isinstance(value, list) and bool(value) and all(isinstance(v, dict) for v in value)


def write_toml(raw: dict, path: Path) -> Path:
    """Write a run-config dict (sections of scalars, nested tables, arrays of tables)."""
    lines: list = []
    for section, table in raw.items():
        _toml_table(section, table, lines)
    path.write_text("\n".join(lines))
    return path
