"""
Pydantic models for the emotion-attribute toolkit.

Numeric payloads are numpy arrays (read-only after validation) and serialize
to plain JSON lists, so every persisted document round-trips through
`model_dump_json` / `model_validate_json`.
"""

from enum import Enum
from typing import Annotated, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from .errors import (
    DimensionMismatch,
    InvalidPercentage,
    InvalidTradeoff,
    TransitionSumViolation,
    UnsupportedAudio,
)


FEATURE_DIM = 384
LAYOUT_VERSION = "emo384-v1"
PIPELINE_SAMPLE_RATE = 16000
N_MEL_BANDS = 80
LOG_FLOOR = 1e-10
TRANSITION_TOLERANCE = 1e-9


def _frozen_array(dtype):
    def convert(value):
        array = np.array(value, dtype=dtype)
        array.setflags(write=False)
        return array
    return convert


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array(np.float64)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_frozen_array(np.int64)),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


def normalize_label(label: str) -> str:
    return label.strip().lower()


def pair_id(emotion_a: str, emotion_b: str) -> str:
    """Identifier of an emotion pair, e.g. 'surprise-angry'"""
    return f"{emotion_a}-{emotion_b}"


# ═══════════════════════════════════════════════════════════
# Audio and features
# ═══════════════════════════════════════════════════════════

class WindowName(str, Enum):
    HANN = "hann"
    HAMMING = "hamming"
    RECTANGULAR = "rectangular"


class FrameSpec(_Frozen):
    frame_length: float = 0.050  # seconds
    hop_length: float = 0.0125  # seconds
    window: WindowName = WindowName.HANN

    @model_validator(mode="after")
    def _check_lengths(self):
        if not 0 < self.hop_length <= self.frame_length:
            raise ValueError("FrameSpec requires 0 < hop_length <= frame_length")
        return self

    def frame_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_length * sample_rate))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_length * sample_rate)))

    def with_window(self, window: WindowName) -> "FrameSpec":
        return self.model_copy(update={"window": window})


class AudioBuffer(_Frozen):
    samples: FloatArray
    sample_rate: int = Field(gt=0)

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, samples: np.ndarray) -> np.ndarray:
        if samples.ndim != 1:
            raise UnsupportedAudio("Audio must be mono (one-dimensional samples)")
        if not np.all(np.isfinite(samples)):
            raise UnsupportedAudio("Audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise UnsupportedAudio("Audio samples must lie within [-1.0, 1.0]")
        return samples

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


class LldTrack(_Frozen):
    name: str
    values: FloatArray

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: np.ndarray) -> np.ndarray:
        if values.ndim != 1:
            raise ValueError("LLD track must be one-dimensional")
        if np.any(np.isnan(values)):
            raise ValueError("LLD track contains NaN")
        return values

    def __len__(self) -> int:
        return int(self.values.size)


class FeatureVector(_Frozen):
    values: FloatArray
    layout_version: str = LAYOUT_VERSION

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: np.ndarray) -> np.ndarray:
        if values.shape != (FEATURE_DIM,):
            raise DimensionMismatch(
                f"Feature vector must have {FEATURE_DIM} entries, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("Feature vector contains non-finite entries")
        return values


class MelSpectrogram(_Frozen):
    frames: FloatArray  # T x 80 log-mel energies
    frame_spec: FrameSpec

    @field_validator("frames")
    @classmethod
    def _check_frames(cls, frames: np.ndarray) -> np.ndarray:
        if frames.ndim != 2 or frames.shape[1] != N_MEL_BANDS:
            raise ValueError(f"Mel spectrogram must be T x {N_MEL_BANDS}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("Mel spectrogram contains non-finite entries")
        return frames


class F0Contour(_Frozen):
    values: FloatArray  # Hz, 0.0 = unvoiced
    frame_spec: FrameSpec = FrameSpec()

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: np.ndarray) -> np.ndarray:
        if values.ndim != 1:
            raise ValueError("F0 contour must be one-dimensional")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("F0 values must be finite and non-negative")
        return values

    @property
    def voiced(self) -> np.ndarray:
        return self.values > 0


class McepSequence(_Frozen):
    frames: FloatArray  # T x M

    @field_validator("frames")
    @classmethod
    def _check_frames(cls, frames: np.ndarray) -> np.ndarray:
        if frames.ndim != 2 or frames.shape[1] < 1:
            raise ValueError("MCEP sequence must be a T x M matrix with M >= 1")
        if not np.all(np.isfinite(frames)):
            raise ValueError("MCEP sequence contains non-finite entries")
        return frames

    @property
    def order(self) -> int:
        return int(self.frames.shape[1])

    def __len__(self) -> int:
        return int(self.frames.shape[0])


class AlignmentPath(_Frozen):
    pairs: IntArray  # K x 2, monotone
    cost: float = 0.0

    @field_validator("pairs")
    @classmethod
    def _check_steps(cls, pairs: np.ndarray) -> np.ndarray:
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ValueError("Alignment path must be a non-empty K x 2 array")
        if tuple(pairs[0]) != (0, 0):
            raise ValueError("Alignment path must start at (0, 0)")
        steps = np.diff(pairs, axis=0)
        allowed = np.all((steps >= 0) & (steps <= 1), axis=1) & (steps.sum(axis=1) > 0)
        if not np.all(allowed):
            raise ValueError("Alignment steps must be (1,0), (0,1) or (1,1)")
        return pairs

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


# ═══════════════════════════════════════════════════════════
# Ranking
# ═══════════════════════════════════════════════════════════

class Standardization(_Frozen):
    mean: FloatArray
    scale: FloatArray

    @model_validator(mode="after")
    def _check_scale(self):
        if self.mean.shape != self.scale.shape:
            raise ValueError("Standardization mean and scale must have equal shapes")
        if np.any(self.scale <= 0) or not np.all(np.isfinite(self.scale)):
            raise ValueError("Standardization scale entries must be positive")
        return self

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardization":
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    def apply(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.scale


class SolverOptions(_Frozen):
    c: float = 0.1
    tolerance: float = 1e-8
    max_iter: int = Field(default=500, gt=0)
    similar_pair_cap: float = 4.0  # x ordered-pair count
    seed: int = 0
    strict: bool = False  # raise DidNotConverge instead of flagging

    @field_validator("c")
    @classmethod
    def _check_c(cls, c: float) -> float:
        if not c > 0:
            raise InvalidTradeoff(f"Trade-off C must be positive, got {c}")
        return c


class RankingProblem(_Frozen):
    emotion_pair: Tuple[str, str]
    data: FloatArray  # standardized rows, A first then B
    standardization: Standardization
    ordered_pairs: IntArray  # (i, j): row i must outrank row j
    similar_pairs: IntArray  # (i, j): rows i and j should score equally
    c_tradeoff: float
    n_a: int
    n_b: int

    @model_validator(mode="after")
    def _check_problem(self):
        if not self.c_tradeoff > 0:
            raise InvalidTradeoff(f"Trade-off C must be positive, got {self.c_tradeoff}")
        n_rows = self.data.shape[0]
        for name in ("ordered_pairs", "similar_pairs"):
            pairs = getattr(self, name)
            if pairs.size and (pairs.ndim != 2 or pairs.shape[1] != 2):
                raise ValueError(f"{name} must be a K x 2 index array")
            if pairs.size and (pairs.min() < 0 or pairs.max() >= n_rows):
                raise ValueError(f"{name} references rows outside the data matrix")
        ordered = {tuple(p) for p in self.ordered_pairs.reshape(-1, 2).tolist()}
        similar = {tuple(p) for p in self.similar_pairs.reshape(-1, 2).tolist()}
        if ordered & similar:
            raise ValueError("ordered_pairs and similar_pairs must be disjoint")
        return self

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])


class RankingModel(_Frozen):
    format_version: int = 1
    emotion_pair: Tuple[str, str]
    weights: FloatArray
    standardization: Standardization
    score_min: float
    score_max: float
    c: float
    converged: bool
    objective: float
    iterations: int = 0
    gradient_norm: float = 0.0
    convergence_threshold: float = 0.0

    @model_validator(mode="after")
    def _check_model(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("Ranking weights must be finite")
        if self.weights.shape != self.standardization.mean.shape:
            raise DimensionMismatch("Weights and standardization dimensions differ")
        if self.score_min > self.score_max:
            raise ValueError("score_min must not exceed score_max")
        return self

    @property
    def pair_id(self) -> str:
        return pair_id(*self.emotion_pair)


class AttributeSource(str, Enum):
    PREDICTED = "predicted"
    MANUAL = "manual"


class EmotionAttributeVector(_Frozen):
    primary: str
    entries: Dict[str, float]  # pair id -> attribute in [0, 1]
    source: AttributeSource

    @field_validator("entries")
    @classmethod
    def _check_entries(cls, entries: Dict[str, float]) -> Dict[str, float]:
        for key, value in entries.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Attribute {key}={value} outside [0, 1]")
        return entries

    def entry(self, reference: str) -> float:
        return self.entries[pair_id(self.primary, normalize_label(reference))]

    def references(self) -> List[str]:
        prefix = f"{self.primary}-"
        return [key[len(prefix):] for key in self.entries]


# ═══════════════════════════════════════════════════════════
# Mixer
# ═══════════════════════════════════════════════════════════

class MixMode(str, Enum):
    MIXING = "mixing"
    TRANSITION = "transition"


class MixSpec(_Frozen):
    primary_emotion: str
    reference_percentages: Dict[str, float] = {}
    mode: MixMode = MixMode.MIXING
    # Unset: 100 in mixing mode, 100 - sum(references) in transition mode
    primary_percentage: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _implicit_primary(cls, data):
        if not isinstance(data, dict) or data.get("primary_percentage") is not None:
            return data
        data = dict(data)
        share = 100.0
        mode = data.get("mode", MixMode.MIXING)
        if getattr(mode, "value", mode) == MixMode.TRANSITION.value:
            try:
                share = 100.0 - sum(float(v) for v in (data.get("reference_percentages") or {}).values())
            except (TypeError, ValueError):
                pass  # reported by the reference validator
        data["primary_percentage"] = share
        return data

    @field_validator("primary_emotion")
    @classmethod
    def _normalize_primary(cls, value: str) -> str:
        return normalize_label(value)

    @field_validator("reference_percentages")
    @classmethod
    def _normalize_references(cls, value: Dict[str, float]) -> Dict[str, float]:
        normalized = {normalize_label(k): float(v) for k, v in value.items()}
        for label, percentage in normalized.items():
            if not 0.0 <= percentage <= 100.0:
                raise InvalidPercentage(f"Percentage for {label} must be in [0, 100], got {percentage}")
        return normalized

    @model_validator(mode="after")
    def _check_spec(self):
        if self.primary_emotion in self.reference_percentages:
            raise ValueError(f"Primary emotion {self.primary_emotion} cannot also be a reference")
        if self.mode == MixMode.TRANSITION:
            total = self.primary_percentage + sum(self.reference_percentages.values())
            if abs(total - 100.0) > TRANSITION_TOLERANCE:
                raise TransitionSumViolation(
                    f"Transition percentages must sum to 100, got {total:g}"
                )
            if self.primary_percentage < -TRANSITION_TOLERANCE:
                raise TransitionSumViolation(
                    f"References add up to {100.0 - self.primary_percentage:g}%, "
                    f"leaving no share for {self.primary_emotion}"
                )
        if not -TRANSITION_TOLERANCE <= self.primary_percentage <= 100.0 + TRANSITION_TOLERANCE:
            raise InvalidPercentage(
                f"Primary percentage must be in [0, 100], got {self.primary_percentage}"
            )
        return self


# ═══════════════════════════════════════════════════════════
# Probe
# ═══════════════════════════════════════════════════════════

class TrainConfig(_Frozen):
    learning_rate: float = Field(default=0.1, gt=0)
    l2_penalty: float = Field(default=1e-3, ge=0)
    epochs: int = Field(default=300, gt=0)
    noise_sigma: float = Field(default=0.1, ge=0)
    seed: int = 0


class ProbeModel(_Frozen):
    format_version: int = 1
    weights: FloatArray  # K x d
    biases: FloatArray  # K
    emotion_labels: List[str]
    standardization: Standardization
    final_loss: float = 0.0

    @model_validator(mode="after")
    def _check_probe(self):
        k = len(self.emotion_labels)
        if k < 2:
            raise ValueError("Probe needs at least two emotion labels")
        if self.weights.ndim != 2 or self.weights.shape[0] != k or self.biases.shape != (k,):
            raise ValueError("Probe parameter shapes do not match the label count")
        if self.weights.shape[1] != self.standardization.dim:
            raise DimensionMismatch("Probe weights and standardization dimensions differ")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("Probe parameters must be finite")
        return self


# ═══════════════════════════════════════════════════════════
# Dataset manifests
# ═══════════════════════════════════════════════════════════

class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"
    EVAL = "eval"


class ManifestEntry(_Frozen):
    path: str
    speaker_id: str
    emotion_label: str
    split: Optional[Split] = None
    mix_percentage: Optional[float] = None  # used by score-vs-percentage plots


class Manifest(_Frozen):
    entries: List[ManifestEntry]
    source: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def by_split(self, split: Split) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def by_emotion(self, emotion: str, split: Optional[Split] = None) -> List[ManifestEntry]:
        return [
            e for e in self.entries
            if e.emotion_label == emotion and (split is None or e.split == split)
        ]


# ═══════════════════════════════════════════════════════════
# Service Request/Response Models
# ═══════════════════════════════════════════════════════════

class MixRequest(BaseModel):
    primary_emotion: str = "surprise"
    reference_percentages: Dict[str, float] = {}  # e.g. {"angry": 90}
    mode: MixMode = MixMode.MIXING
    primary_percentage: Optional[float] = None  # implicit when unset


class MixResponse(BaseModel):
    primary: str
    source: AttributeSource
    entries: Dict[str, float]  # pair id -> attribute
    percentages: Dict[str, float]  # reference -> percentage
    mixed_effect: Optional[str] = None


class SweepRequest(MixRequest):
    emotion: str
    steps: List[float] = [0.0, 30.0, 60.0, 90.0]


class SweepStep(BaseModel):
    step: float
    entries: Dict[str, float]


class SweepResponse(BaseModel):
    primary: str
    emotion: str
    steps: List[SweepStep]


class FeaturesRequest(BaseModel):
    features: List[float]  # 384 values in layout order
    primary_emotion: Optional[str] = None


class PredictResponse(BaseModel):
    primary: str
    source: AttributeSource
    entries: Dict[str, float]


class ClassifyResponse(BaseModel):
    label: str
    probabilities: Dict[str, float]


class HealthResponse(BaseModel):
    status: str
    models_loaded: bool
    pair_models: List[str]
    probe_loaded: bool
    version: str
    environment: str
