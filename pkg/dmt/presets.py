"""Preset management - per-dataset hyperparameters shipped as flat config files."""
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .settings import ConfigEntry, ConfigManager, DmtSettings

__all__ = "Preset", "PresetManager",

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Preset:
    name: str
    path: Path
    description: str
    entries: dict[str, ConfigEntry]


class PresetManager:
    """Discovers ``preset.d/*.conf`` files across the settings search path.

    Earlier search directories shadow later ones.
    """
    config_manager: ConfigManager
    presetd_paths: list[Path]

    def __init__(self, config_manager: ConfigManager | None = None, presetd_paths: list[Path] | None = None):
        self.config_manager = config_manager or ConfigManager()
        if presetd_paths is not None:
            self.presetd_paths = presetd_paths
        else:
            self.presetd_paths = (self.config_manager.settings or DmtSettings()).get_presetd_paths()

    def discover_presets(self) -> dict[str, Path]:
        """Map preset names to files, sorted by name."""
        presets = {}

        for presetd_path in self.presetd_paths:
            if not presetd_path.exists():
                continue

            for file_path in sorted(presetd_path.glob('*.conf')):
                if not file_path.is_file():
                    continue
                name = file_path.stem
                if name in presets:
                    logger.warning("Duplicate preset %r found at %s, keeping %s", name, file_path, presets[name])
                else:
                    presets[name] = file_path

        return dict(sorted(presets.items()))

    def load_preset(self, name: str) -> Preset:
        presets = self.discover_presets()
        if name not in presets:
            available = ", ".join(presets) or "none"
            raise ConfigError(f"unknown preset {name!r} (available: {available})")

        path = presets[name]
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"{path}: cannot read preset: {e}") from e

        return Preset(name, path, self._description(text), self.config_manager.parse(text, str(path)))

    @staticmethod
    def _description(text: str) -> str:
        """First comment line of the file."""
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("#"):
                return line.lstrip("#").strip()
            if line:
                break
        return ""
