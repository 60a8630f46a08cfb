"""
settings.py - Central environment settings for the EEG diffusion toolkit

All output paths are derived from EEGDM_OUT so every command writes under one root.
Values may come from the process environment or a local .env file.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


# --- Helper Functions ---
def normalize_root(env_var: str, default: str) -> Path:
    """
    Resolve a filesystem path from an environment variable, falling back to a default.
    """
    raw = os.getenv(env_var, default)
    if not (raw.startswith(os.sep) or raw.startswith('.') or raw.startswith('~')):
        raw = os.sep + raw
    return Path(raw).expanduser().resolve()


def output_root() -> Path:
    """Output root, re-read on every call so tests and the CLI can override EEGDM_OUT."""
    return normalize_root("EEGDM_OUT", "./runs")


def output_override() -> Path | None:
    """Explicit EEGDM_OUT override, or None when the config's output.directory applies."""
    if os.getenv("EEGDM_OUT"):
        return output_root()
    return None


# --- Runtime ---
OUTPUT_ROOT = output_root()
LOG_LEVEL = os.getenv("EEGDM_LOG_LEVEL", "INFO").upper()
DEVICE = os.getenv("EEGDM_DEVICE", "cpu")

# --- Run registry ---
DATABASE_URL = os.getenv("DATABASE_URL", f"sqlite:///{OUTPUT_ROOT / 'registry.db'}")
