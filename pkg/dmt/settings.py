"""Configuration for dmt - environment settings and run configuration.

Run configuration (``TrainConfig`` with its nested ``LossConfig``) is written
as flat ``key = value`` text. The environment only affects ambient behaviour
(log level, preset search path), never the numbers of a run.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .util.paths import get_contrib_paths
from .util.system import get_project_root

__all__ = "DmtSettings", "LossConfig", "TrainConfig", "ConfigManager", "ConfigEntry", "CONFIG_KEYS", "format_value",

logger = logging.getLogger(__name__)


class DmtSettings(BaseSettings):
    """Ambient settings loaded from the environment."""
    model_config = SettingsConfigDict(
        env_prefix="DMT_",
        extra="ignore",
        validate_assignment=True,
        env_ignore_empty=True,
    )

    log_level: str | None = Field(default=None, description="Logging level for dmt (default: INFO) (env: DMT_LOG_LEVEL)")
    path: str | list[Path] = Field(
        default_factory=lambda: [
            get_project_root() / ".dmt",
            Path.home() / ".dmt",
            *get_contrib_paths()
        ],
        description="Search list for preset.d directories (env: DMT_PATH, colon-separated)"
    )

    @field_validator('path', mode='after')
    @classmethod
    def parse_path(cls, v) -> list[Path]:
        """Parse DMT_PATH or return the list as paths."""
        if isinstance(v, str):
            return [Path(p.strip()).expanduser() for p in v.split(':') if p.strip()]
        return [Path(p).expanduser() for p in v]

    def get_presetd_paths(self) -> list[Path]:
        """Existing preset.d directories, in search order."""
        return [p / "preset.d" for p in self.path if (p / "preset.d").is_dir()]


class LossConfig(BaseModel):
    """Loss family, weights, kernel shape and perplexity."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    mode: Literal["lgp", "lis"] = Field("lgp", description="Two-way divergence (lgp) or distance matching (lis)")
    alpha: float = Field(1.0, ge=0, description="Weight of each input/layer pair loss")
    beta: float = Field(1.0, ge=0, description="Reconstruction weight (autoencoder)")
    mu0: float = Field(1.0, ge=0, description="Initial push-away weight (lis), decays linearly to 0")
    push_threshold: float | None = Field(None, gt=0, description="Push-away distance B (lis); none = batch median")
    nu_start: float = Field(0.001, gt=0, description="Latent kernel ν at the first epoch")
    nu_end: float = Field(100.0, gt=0, description="Latent kernel ν at the last epoch")
    nu_input: float = Field(100.0, gt=0, description="Input kernel ν")
    q: float = Field(40.0, gt=1, description="Perplexity Q of the input similarities")
    q_latent: float | None = Field(None, gt=1, description="Perplexity of layer similarities; none = q")
    lis_k: int = Field(10, ge=1, description="Input neighbors per point for the lis distance term")
    layers: list[int] = Field(default_factory=lambda: [-1], description="Encoder layers compared to the input; -1 = latent")

    @field_validator('layers')
    @classmethod
    def validate_layers(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one layer is required")
        if 0 in v:
            raise ValueError("layer 0 is the input itself")
        return v

    @model_validator(mode='after')
    def validate_nu_order(self) -> 'LossConfig':
        if self.nu_start > self.nu_end:
            raise ValueError(f"nu_start ({self.nu_start}) must not exceed nu_end ({self.nu_end})")
        return self

    @property
    def latent_perplexity(self) -> float:
        return self.q if self.q_latent is None else self.q_latent


class TrainConfig(BaseModel):
    """Everything that determines a training run besides the data."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    epochs: int = Field(500, ge=1, description="Number of epochs E")
    batch_size: int = Field(1500, ge=2, description="Batch size M′ (clipped to the dataset size)")
    lr: float = Field(0.001, gt=0, description="Adam learning rate")
    seed: int = Field(0, ge=0, description="Seed of the single random stream")
    dims: list[int] = Field(default_factory=lambda: [-1, 600, 500, 400, 300, 200, 2], description="Encoder widths; -1 = data width")
    autoencoder: bool = Field(False, description="Train a mirrored decoder jointly")
    n_neighbors: int | None = Field(None, ge=1, description="k of the input k-NN graph; none = min(M-1, max(15, 3Q))")
    eval_every: int = Field(0, ge=0, description="Evaluate metrics every n epochs (0 = off)")
    checkpoint_every: int = Field(0, ge=0, description="Checkpoint every n epochs (0 = final only)")
    log_every: int = Field(10, ge=1, description="Log progress every n epochs")
    loss: LossConfig = Field(default_factory=LossConfig)

    @field_validator('dims')
    @classmethod
    def validate_dims(cls, v: list[int]) -> list[int]:
        if len(v) < 2:
            raise ValueError("at least an input and an output width are required")
        if any(d < 1 for d in v[1:]) or (v[0] < 1 and v[0] != -1):
            raise ValueError("widths must be positive (the first may be -1)")
        return v

    def flat(self) -> dict[str, Any]:
        """Every setting under its flat key."""
        data = self.model_dump(exclude={"loss"})
        data.update(self.loss.model_dump())
        return data


_TRAIN_KEYS = tuple(k for k in TrainConfig.model_fields if k != "loss")
_LOSS_KEYS = tuple(LossConfig.model_fields)
CONFIG_KEYS = _TRAIN_KEYS + _LOSS_KEYS
LIST_KEYS = {"dims", "layers"}
_NONE_WORDS = {"", "none", "null"}


def format_value(value: Any) -> str:
    """Flat text form of a config value (floats round-trip exactly)."""
    match value:
        case None:
            return "none"
        case bool():
            return str(value).lower()
        case float():
            return repr(value)
        case list() | tuple():
            return ",".join(format_value(v) for v in value)
        case _:
            return str(value)


@dataclass(frozen=True)
class ConfigEntry:
    """One ``key = value`` line and where it came from."""
    key: str
    raw: str
    origin: str

    @property
    def value(self) -> Any:
        text = self.raw.strip()
        if self.key in LIST_KEYS:
            return [item.strip() for item in text.split(",") if item.strip()]
        if text.lower() in _NONE_WORDS:
            return None
        return text


class ConfigManager:
    """Parses, merges and validates flat run configuration.

    Sources are applied in order (defaults, preset, file, flags); later
    sources override earlier ones key by key. Every problem across all sources
    is collected and raised in a single ``ConfigError``.
    """
    settings: DmtSettings

    def __init__(self, settings: DmtSettings | None = None):
        self.settings = settings or DmtSettings()

    def parse(self, text: str, source: str = "<config>") -> dict[str, ConfigEntry]:
        entries: dict[str, ConfigEntry] = {}
        problems: list[str] = []

        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue

            origin = f"{source}:{number}"
            key, sep, raw = stripped.partition("=")
            key = key.strip()
            if not sep or not key:
                problems.append(f"{origin}: expected 'key = value', got {line.strip()!r}")
                continue
            if key not in CONFIG_KEYS:
                problems.append(f"{origin}: unknown key {key!r}")
                continue
            if key in entries:
                problems.append(f"{origin}: duplicate key {key!r} (first set at {entries[key].origin})")
                continue

            entries[key] = ConfigEntry(key, raw.strip(), origin)

        if problems:
            raise ConfigError(problems)

        return entries

    def read(self, path: Path | str) -> dict[str, ConfigEntry]:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config file: {e}") from e
        return self.parse(text, str(path))

    def overrides(self, values: Mapping[str, Any], source: str = "flag") -> dict[str, ConfigEntry]:
        """Entries from already-split key/value pairs such as command-line flags."""
        unknown = [f"{source}: unknown key {key!r}" for key in values if key not in CONFIG_KEYS]
        if unknown:
            raise ConfigError(unknown)
        return {
            key: ConfigEntry(key, format_value(value) if not isinstance(value, str) else value, f"{source} --{key.replace('_', '-')}")
            for key, value in values.items() if value is not None
        }

    def resolve(self, *sources: Mapping[str, ConfigEntry]) -> TrainConfig:
        """Merge sources over the defaults and validate the result."""
        merged: dict[str, ConfigEntry] = {}
        for source in sources:
            merged.update(source)

        train = {k: e.value for k, e in merged.items() if k in _TRAIN_KEYS}
        loss = {k: e.value for k, e in merged.items() if k in _LOSS_KEYS}

        try:
            return TrainConfig.model_validate({**train, "loss": loss})
        except ValidationError as e:
            raise ConfigError([self._describe(error, merged) for error in e.errors()]) from None

    @staticmethod
    def _describe(error: dict, merged: Mapping[str, ConfigEntry]) -> str:
        loc = [part for part in error.get("loc", ()) if isinstance(part, str) and part != "loss"]
        key = loc[0] if loc else None
        if key in merged:
            entry = merged[key]
            return f"{entry.origin}: {key} = {entry.raw!r}: {error['msg']}"
        if key:
            return f"{key}: {error['msg']}"
        return error["msg"]

    @staticmethod
    def format(cfg: TrainConfig) -> str:
        """Flat text that :meth:`parse` reads back into an equal configuration."""
        return "".join(f"{key} = {format_value(value)}\n" for key, value in cfg.flat().items())
