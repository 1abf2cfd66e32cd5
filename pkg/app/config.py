"""
Pipeline configuration.

Defaults mirror the experimental setup: five ESD emotions with Surprise as the
primary, 50 ms / 12.5 ms framing, C = 0.1 for the rankers. A JSON file passed
with --config overrides the defaults and CLI globals override the file.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, MissingFile, ParseError
from .models import LAYOUT_VERSION, FrameSpec, SolverOptions, TrainConfig, normalize_label

load_dotenv()

logger = logging.getLogger(__name__)

# ═══════════════════════════════════════════════════════════
# Environment
# ═══════════════════════════════════════════════════════════

LOG_LEVEL = os.getenv("EMOMIX_LOG_LEVEL", "INFO")
CACHE_DIR = os.getenv("EMOMIX_CACHE_DIR", "")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

DEFAULT_EMOTIONS = ["neutral", "angry", "happy", "sad", "surprise"]


def configure_logging(level: Optional[str] = None):
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)


class PitchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    f_min: float = 60.0
    f_max: float = 400.0
    voicing_threshold: float = Field(default=0.30, ge=0.0, le=1.0)
    algorithm: str = "nccf-parabolic"


class MetricConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mcep_order: int = Field(default=24, ge=1, le=79)
    mcd_variant: str = "averaged"  # "averaged" or "standard"

    @field_validator("mcd_variant")
    @classmethod
    def _check_variant(cls, value: str) -> str:
        if value not in ("averaged", "standard"):
            raise ValueError("mcd_variant must be 'averaged' or 'standard'")
        return value


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    emotion_set: List[str] = Field(default_factory=lambda: list(DEFAULT_EMOTIONS))
    primary_emotion: str = "surprise"
    all_pairs: bool = False
    frame_spec: FrameSpec = FrameSpec()
    pitch: PitchConfig = PitchConfig()
    layout_version: str = LAYOUT_VERSION
    solver: SolverOptions = SolverOptions()
    probe: TrainConfig = TrainConfig()
    metrics: MetricConfig = MetricConfig()
    seed: int = 0
    jobs: int = Field(default=1, ge=1)
    out_dir: str = "./out"
    cache_dir: str = CACHE_DIR

    @field_validator("emotion_set")
    @classmethod
    def _normalize_emotions(cls, value: List[str]) -> List[str]:
        labels = [normalize_label(v) for v in value]
        if len(labels) < 2 or len(set(labels)) != len(labels):
            raise ValueError("emotion_set needs at least two distinct labels")
        return labels

    @field_validator("primary_emotion")
    @classmethod
    def _normalize_primary(cls, value: str) -> str:
        return normalize_label(value)

    @model_validator(mode="after")
    def _check_primary(self):
        if self.primary_emotion not in self.emotion_set:
            raise ValueError(f"primary_emotion {self.primary_emotion} not in emotion_set")
        if not 0 < self.pitch.f_min < self.pitch.f_max:
            raise ValueError("pitch range must satisfy 0 < f_min < f_max")
        if self.layout_version != LAYOUT_VERSION:
            raise ValueError(f"Unsupported feature layout {self.layout_version}")
        return self

    @property
    def reference_emotions(self) -> List[str]:
        return [e for e in self.emotion_set if e != self.primary_emotion]

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Apply non-None overrides (CLI globals) and re-validate"""
        values = {k: v for k, v in overrides.items() if v is not None}
        if not values:
            return self
        try:
            return PipelineConfig.model_validate({**self.model_dump(mode="json"), **values})
        except ValidationError as e:
            raise ConfigError(_first_error(e))

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"{location}: {first['msg']}" if location else first["msg"]


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Load a PipelineConfig from a JSON file, or defaults if no path is given"""
    if not path:
        return PipelineConfig()

    config_path = Path(path)
    if not config_path.exists():
        raise MissingFile(f"Config not found at {config_path}")

    text = config_path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in {config_path}: {e.msg}", line=e.lineno, column=e.colno)

    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_first_error(e))

    logger.info(f"Config loaded from {config_path} (hash {config.config_hash()[:12]})")
    return config
