"""Piezoelectric vibration harvester simulator (C++ core)."""

import os
from pathlib import Path

from ._core import *  # noqa: F401,F403
from ._core import PresetCatalog

__version__ = "0.1.0"

_BUNDLED = Path(__file__).resolve().parent / "presets"


def catalog(*dirs):
    """Preset catalog over `dirs`; falls back to VIBEHARVEST_PRESET_DIR, then
    the presets shipped in the wheel, then the source tree."""
    if dirs:
        return PresetCatalog([str(d) for d in dirs])
    if "VIBEHARVEST_PRESET_DIR" not in os.environ and _BUNDLED.is_dir():
        return PresetCatalog([str(_BUNDLED)])
    return PresetCatalog()
