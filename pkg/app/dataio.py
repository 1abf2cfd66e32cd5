"""
Data I/O
Manifests, WAV ingestion, the feature cache and artifact persistence.

Design:
- Manifest CSV header: path,speaker,emotion[,split][,mix_percentage]; JSON accepted too
- Relative paths resolve against the manifest's directory
- Unsplit entries get a seeded 300/30/20 split per (emotion, speaker)
- Every artifact is written to a temp file and renamed into place
- Feature cache files are keyed by SHA-256 of the audio bytes + layout version
"""

import hashlib
import json
import logging
import os
import re
import struct
import tempfile
from io import BytesIO
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import soundfile as sf
from joblib import Parallel, delayed
from pydantic import BaseModel, ValidationError

from .errors import (
    CacheError,
    DuplicatePath,
    MissingFile,
    ParseError,
    UnknownEmotion,
    UnsupportedAudio,
)
from .features import extract_feature_vector, feature_names
from .models import (
    FEATURE_DIM,
    LAYOUT_VERSION,
    PIPELINE_SAMPLE_RATE,
    AudioBuffer,
    EmotionAttributeVector,
    FeatureVector,
    FrameSpec,
    Manifest,
    ManifestEntry,
    ProbeModel,
    RankingModel,
    Split,
    normalize_label,
)

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["path", "speaker", "emotion"]
OPTIONAL_COLUMNS = ["split", "mix_percentage"]
SPLIT_PROPORTIONS = {Split.TRAIN: 300, Split.TEST: 30, Split.EVAL: 20}

FLOAT_FORMAT = "%.9g"

CACHE_MAGIC = b"EMOF"
CACHE_FORMAT_VERSION = 1

PathLike = Union[str, Path]


# ═══════════════════════════════════════════════════════════
# Atomic writes
# ═══════════════════════════════════════════════════════════

def atomic_write_bytes(path: PathLike, data: bytes):
    """Write via a sibling temp file and os.replace; no partial file survives a failure"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(dir=target.parent, prefix=f".{target.name}.", delete=False)
    try:
        with handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


# ═══════════════════════════════════════════════════════════
# Manifests
# ═══════════════════════════════════════════════════════════

def _csv_error(error: Exception) -> ParseError:
    match = re.search(r"line (\d+)", str(error))
    line = int(match.group(1)) if match else None
    return ParseError(f"Malformed manifest CSV: {str(error).strip()}", line=line)


def _read_csv_rows(path: Path) -> List[tuple]:
    """Rows as (line number, {column: text}) with the header validated"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise ParseError(f"Manifest {path} is empty", line=1, column=1)
    except pd.errors.ParserError as e:
        raise _csv_error(e)

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    for name in REQUIRED_COLUMNS:
        if name not in frame.columns:
            raise ParseError(f"Manifest header is missing column '{name}'", line=1, column=1)
    for position, name in enumerate(frame.columns, start=1):
        if name not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS:
            raise ParseError(f"Unexpected manifest column '{name}'", line=1, column=position)

    columns = list(frame.columns)
    frame = frame.fillna("")
    return [
        (index + 2, {name: str(row[name]).strip() for name in columns}, columns)
        for index, row in frame.iterrows()
    ]


def _read_json_rows(path: Path) -> List[tuple]:
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid manifest JSON: {e.msg}", line=e.lineno, column=e.colno)

    if isinstance(data, dict):
        data = data.get("entries")
    if not isinstance(data, list):
        raise ParseError("Manifest JSON must be a list of entries or {\"entries\": [...]}", line=1, column=1)

    rows = []
    columns = REQUIRED_COLUMNS + OPTIONAL_COLUMNS
    for index, item in enumerate(data, start=1):
        if not isinstance(item, dict):
            raise ParseError(f"Manifest entry {index} is not an object", line=index)
        record = {k: "" if item.get(k) is None else str(item.get(k)).strip() for k in columns}
        if not record["speaker"] and item.get("speaker_id") is not None:
            record["speaker"] = str(item["speaker_id"]).strip()
        if not record["emotion"] and item.get("emotion_label") is not None:
            record["emotion"] = str(item["emotion_label"]).strip()
        rows.append((index, record, columns))
    return rows


def _entry_from_row(line: int, record: Dict[str, str], columns: List[str], base: Path,
                    emotion_set: Optional[Sequence[str]]) -> ManifestEntry:
    for name in REQUIRED_COLUMNS:
        if not record.get(name):
            raise ParseError(f"Empty '{name}' field", line=line, column=columns.index(name) + 1)

    emotion = normalize_label(record["emotion"])
    if emotion_set is not None and emotion not in emotion_set:
        raise UnknownEmotion(f"Unknown emotion '{record['emotion']}' on line {line}")

    split = None
    if record.get("split"):
        try:
            split = Split(record["split"].lower())
        except ValueError:
            raise ParseError(
                f"Invalid split '{record['split']}'", line=line, column=columns.index("split") + 1
            )

    mix_percentage = None
    if record.get("mix_percentage"):
        try:
            mix_percentage = float(record["mix_percentage"])
        except ValueError:
            raise ParseError(
                f"Invalid mix_percentage '{record['mix_percentage']}'",
                line=line,
                column=columns.index("mix_percentage") + 1,
            )

    path = Path(record["path"])
    if not path.is_absolute():
        path = base / path
    return ManifestEntry(
        path=str(path.resolve()),
        speaker_id=record["speaker"],
        emotion_label=emotion,
        split=split,
        mix_percentage=mix_percentage,
    )


def load_manifest(
    path: PathLike,
    emotion_set: Optional[Sequence[str]] = None,
    check_files: bool = True,
    seed: int = 0,
) -> Manifest:
    """
    Parse and validate a manifest.

    Raises ParseError (with line/column), MissingFile, DuplicatePath or
    UnknownEmotion. Entries without a split are assigned one (seeded).
    """
    manifest_path = Path(path)
    if not manifest_path.exists():
        raise MissingFile(f"Manifest not found at {manifest_path}")

    if manifest_path.suffix.lower() == ".json":
        rows = _read_json_rows(manifest_path)
    else:
        rows = _read_csv_rows(manifest_path)

    labels = [normalize_label(e) for e in emotion_set] if emotion_set is not None else None
    base = manifest_path.resolve().parent
    entries = []
    seen = {}
    for line, record, columns in rows:
        entry = _entry_from_row(line, record, columns, base, labels)
        if entry.path in seen:
            raise DuplicatePath(
                f"Duplicate path {entry.path} (lines {seen[entry.path]} and {line})"
            )
        seen[entry.path] = line
        if check_files and not Path(entry.path).is_file():
            raise MissingFile(f"Audio file {entry.path} (line {line}) does not exist")
        entries.append(entry)

    manifest = Manifest(entries=entries, source=str(manifest_path))
    if any(e.split is None for e in entries):
        manifest = auto_split(manifest, seed)
    logger.info(f"Manifest loaded from {manifest_path}: {len(manifest)} entries")
    return manifest


def auto_split(manifest: Manifest, seed: int = 0) -> Manifest:
    """
    Assign train/test/eval to unsplit entries in 300/30/20 proportions,
    per (emotion, speaker) group, after a seeded shuffle.
    """
    rng = np.random.default_rng(seed)
    total = sum(SPLIT_PROPORTIONS.values())
    assigned: Dict[int, Split] = {}

    groups: Dict[tuple, List[int]] = {}
    for index, entry in enumerate(manifest.entries):
        if entry.split is None:
            groups.setdefault((entry.emotion_label, entry.speaker_id), []).append(index)

    for key in sorted(groups):
        members = groups[key]
        order = [members[i] for i in rng.permutation(len(members))]
        n_test = len(order) * SPLIT_PROPORTIONS[Split.TEST] // total
        n_eval = len(order) * SPLIT_PROPORTIONS[Split.EVAL] // total
        n_train = len(order) - n_test - n_eval
        for position, index in enumerate(order):
            if position < n_train:
                assigned[index] = Split.TRAIN
            elif position < n_train + n_test:
                assigned[index] = Split.TEST
            else:
                assigned[index] = Split.EVAL

    entries = [
        e.model_copy(update={"split": assigned[i]}) if i in assigned else e
        for i, e in enumerate(manifest.entries)
    ]
    return Manifest(entries=entries, source=manifest.source)


# ═══════════════════════════════════════════════════════════
# Audio
# ═══════════════════════════════════════════════════════════

def read_wav(path: PathLike) -> AudioBuffer:
    """16-bit PCM mono 16 kHz WAV -> AudioBuffer with samples in [-1, 1)"""
    wav_path = Path(path)
    if not wav_path.is_file():
        raise MissingFile(f"Audio file {wav_path} does not exist")
    try:
        info = sf.info(str(wav_path))
    except RuntimeError as e:
        raise UnsupportedAudio(f"Cannot read {wav_path}: {e}")

    if info.format != "WAV" or info.subtype != "PCM_16":
        raise UnsupportedAudio(f"{wav_path} is {info.format}/{info.subtype}, expected WAV/PCM_16")
    if info.channels != 1:
        raise UnsupportedAudio(f"{wav_path} has {info.channels} channels, expected mono")
    if info.samplerate != PIPELINE_SAMPLE_RATE:
        raise UnsupportedAudio(
            f"{wav_path} is sampled at {info.samplerate} Hz, expected {PIPELINE_SAMPLE_RATE} Hz"
        )

    samples, sample_rate = sf.read(str(wav_path), dtype="float64", always_2d=False)
    return AudioBuffer(samples=samples, sample_rate=sample_rate)


def write_wav(path: PathLike, audio: AudioBuffer):
    buffer = BytesIO()
    sf.write(buffer, audio.samples, audio.sample_rate, subtype="PCM_16", format="WAV")
    atomic_write_bytes(path, buffer.getvalue())


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ═══════════════════════════════════════════════════════════
# Feature cache
# ═══════════════════════════════════════════════════════════

def encode_features(vector: FeatureVector) -> bytes:
    layout = vector.layout_version.encode("utf-8")
    header = CACHE_MAGIC + struct.pack("<HH", CACHE_FORMAT_VERSION, len(layout)) + layout
    return header + struct.pack("<I", vector.values.size) + vector.values.astype("<f8").tobytes()


def decode_features(data: bytes) -> FeatureVector:
    try:
        if data[:4] != CACHE_MAGIC:
            raise CacheError("Not a feature cache file (bad magic)")
        version, layout_len = struct.unpack_from("<HH", data, 4)
        if version != CACHE_FORMAT_VERSION:
            raise CacheError(f"Unsupported cache format version {version}")
        offset = 8 + layout_len
        layout = data[8:offset].decode("utf-8")
        (count,) = struct.unpack_from("<I", data, offset)
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset + 4)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CacheError(f"Corrupt feature cache entry: {e}")
    if layout != LAYOUT_VERSION or count != FEATURE_DIM:
        raise CacheError(f"Cache entry has layout {layout} with {count} values")
    return FeatureVector(values=values.astype(np.float64), layout_version=layout)


class FeatureCache:
    """Directory of .emof files; a miss or a corrupt entry means re-extraction"""

    def __init__(self, directory: PathLike, layout_version: str = LAYOUT_VERSION):
        self.directory = Path(directory)
        self.layout_version = layout_version

    def key(self, audio_path: PathLike) -> str:
        return f"{file_digest(audio_path)}-{self.layout_version}"

    def _file(self, audio_path: PathLike) -> Path:
        return self.directory / f"{self.key(audio_path)}.emof"

    def get(self, audio_path: PathLike) -> Optional[FeatureVector]:
        cache_file = self._file(audio_path)
        if not cache_file.exists():
            return None
        try:
            return decode_features(cache_file.read_bytes())
        except CacheError as e:
            logger.warning(f"Ignoring cache entry {cache_file.name}: {e.message}")
            return None

    def put(self, audio_path: PathLike, vector: FeatureVector):
        atomic_write_bytes(self._file(audio_path), encode_features(vector))


def _extract_one(
    path: str,
    cache: Optional[FeatureCache],
    spec: FrameSpec,
    f_min: float,
    f_max: float,
    voicing_threshold: float,
) -> FeatureVector:
    if cache is not None:
        cached = cache.get(path)
        if cached is not None:
            return cached
    vector = extract_feature_vector(read_wav(path), spec, f_min, f_max, voicing_threshold)
    if cache is not None:
        cache.put(path, vector)
    return vector


def extract_manifest_features(
    entries: Sequence[ManifestEntry],
    spec: Optional[FrameSpec] = None,
    f_min: float = 60.0,
    f_max: float = 400.0,
    voicing_threshold: float = 0.30,
    cache: Optional[FeatureCache] = None,
    jobs: int = 1,
) -> List[FeatureVector]:
    """Feature vectors in entry order; extraction fans out over `jobs` threads"""
    spec = spec or FrameSpec()
    vectors = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_extract_one)(e.path, cache, spec, f_min, f_max, voicing_threshold)
        for e in entries
    )
    logger.info(f"Extracted {len(vectors)} feature vectors ({jobs} worker(s))")
    return list(vectors)


# ═══════════════════════════════════════════════════════════
# Tables
# ═══════════════════════════════════════════════════════════

def write_table(frame: pd.DataFrame, path: PathLike):
    """UTF-8 CSV with 9 significant digits"""
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write_text(path, text)


def read_table(path: PathLike) -> pd.DataFrame:
    table_path = Path(path)
    if not table_path.exists():
        raise MissingFile(f"Table not found at {table_path}")
    try:
        return pd.read_csv(table_path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise _csv_error(e)


def features_table(paths: Sequence[str], vectors: Sequence[FeatureVector]) -> pd.DataFrame:
    frame = pd.DataFrame(np.vstack([v.values for v in vectors]), columns=feature_names())
    frame.insert(0, "path", list(paths))
    return frame


def features_from_table(frame: pd.DataFrame) -> Dict[str, FeatureVector]:
    names = feature_names()
    missing = [n for n in names if n not in frame.columns]
    if missing:
        raise ParseError(f"Feature table lacks {len(missing)} layout columns (first: {missing[0]})", line=1)
    values = frame[names].to_numpy(dtype=np.float64)
    return {
        str(path): FeatureVector(values=row)
        for path, row in zip(frame["path"], values)
    }


def attributes_table(paths: Sequence[str], vectors: Sequence[EmotionAttributeVector]) -> pd.DataFrame:
    rows = [{"path": p, **v.entries} for p, v in zip(paths, vectors)]
    return pd.DataFrame(rows)


# ═══════════════════════════════════════════════════════════
# Model documents
# ═══════════════════════════════════════════════════════════

def save_document(document: BaseModel, path: PathLike):
    atomic_write_text(path, document.model_dump_json(indent=2) + "\n")


def _load_document(model_cls, path: PathLike):
    document_path = Path(path)
    if not document_path.exists():
        raise MissingFile(f"Model file not found at {document_path}")
    text = document_path.read_text(encoding="utf-8")
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in {document_path}: {e.msg}", line=e.lineno, column=e.colno)
    try:
        return model_cls.model_validate_json(text)
    except ValidationError as e:
        raise ParseError(f"{document_path} is not a valid {model_cls.__name__}: {e.errors()[0]['msg']}")


def load_ranking_model(path: PathLike) -> RankingModel:
    return _load_document(RankingModel, path)


def load_probe_model(path: PathLike) -> ProbeModel:
    return _load_document(ProbeModel, path)


def ranking_model_path(directory: PathLike, model: RankingModel) -> Path:
    return Path(directory) / f"rank_{model.pair_id}.json"


def save_ranking_models(models: Iterable[RankingModel], directory: PathLike) -> List[Path]:
    written = []
    for model in models:
        target = ranking_model_path(directory, model)
        save_document(model, target)
        written.append(target)
    return written


def load_ranking_models(directory: PathLike) -> List[RankingModel]:
    model_dir = Path(directory)
    if not model_dir.is_dir():
        raise MissingFile(f"Model directory {model_dir} does not exist")
    return [load_ranking_model(p) for p in sorted(model_dir.glob("rank_*.json"))]


def save_json(data: dict, path: PathLike):
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
