"""
Pytest fixtures for emotion-mixer tests
"""

import numpy as np
import pytest

from app.config import PipelineConfig
from app.dataio import write_wav
from app.models import AudioBuffer, PIPELINE_SAMPLE_RATE


# ═══════════════════════════════════════════════════════════
# Audio Fixtures
# ═══════════════════════════════════════════════════════════

@pytest.fixture
def tone():
    """
    Factory for sine audio.

    tone(220) is a steady 220 Hz sine; tone(150, 250) glides linearly from
    150 Hz to 250 Hz over the duration.
    """
    def make(f_start=220.0, f_end=None, duration=1.0, amplitude=0.5, sample_rate=PIPELINE_SAMPLE_RATE):
        f_end = f_start if f_end is None else f_end
        t = np.arange(int(round(duration * sample_rate))) / sample_rate
        frequency = f_start + (f_end - f_start) * t / duration
        phase = 2.0 * np.pi * np.cumsum(frequency) / sample_rate
        return AudioBuffer(samples=amplitude * np.sin(phase), sample_rate=sample_rate)
    return make


@pytest.fixture
def noise():
    """Factory for fixed-seed uniform noise in [-amplitude, amplitude]"""
    def make(duration=1.0, amplitude=0.2, seed=0, sample_rate=PIPELINE_SAMPLE_RATE):
        rng = np.random.default_rng(seed)
        samples = rng.uniform(-amplitude, amplitude, int(round(duration * sample_rate)))
        return AudioBuffer(samples=samples, sample_rate=sample_rate)
    return make


# ═══════════════════════════════════════════════════════════
# Synthetic Feature Fixtures
# ═══════════════════════════════════════════════════════════

def _split(a: np.ndarray, b: np.ndarray, n_train: int) -> dict:
    return {
        "train_a": a[:n_train],
        "train_b": b[:n_train],
        "test_a": a[n_train:],
        "test_b": b[n_train:],
    }


def _two_clusters(separation: float, seed: int, n: int = 100, dim: int = 10, n_train: int = 60):
    rng = np.random.default_rng(seed)
    offset = np.zeros(dim)
    offset[0] = separation / 2.0
    a = rng.normal(size=(n, dim)) + offset
    b = rng.normal(size=(n, dim)) - offset
    return _split(a, b, n_train)


def _margin_clusters(margin: float, seed: int, n: int = 100, dim: int = 10, n_train: int = 60):
    """Like _two_clusters, but first coordinates are margin/2 + |N(0, 1)| on A and mirrored on B"""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, dim))
    b = rng.normal(size=(n, dim))
    a[:, 0] = margin / 2.0 + np.abs(a[:, 0])
    b[:, 0] = -(margin / 2.0 + np.abs(b[:, 0]))
    return _split(a, b, n_train)


@pytest.fixture
def separable_clusters():
    """
    Two unit-normal clusters (N = 200, d = 10, fixed seed) with a 4 sigma
    gap between them along the first axis. Set A is the high side.
    """
    return _margin_clusters(margin=4.0, seed=7)


@pytest.fixture
def overlapping_clusters():
    """Gaussian clusters with centres 3 sigma apart, so the classes overlap"""
    return _two_clusters(separation=3.0, seed=11)


@pytest.fixture
def probe_clusters():
    """Four separable clusters of 50 samples (d = 10), one per emotion"""
    rng = np.random.default_rng(3)
    labels = ["angry", "happy", "sad", "surprise"]
    features, targets = [], []
    for k, label in enumerate(labels):
        centre = np.zeros(10)
        centre[k] = 8.0
        features.append(rng.normal(size=(50, 10)) + centre)
        targets += [label] * 50
    return np.vstack(features), targets


# ═══════════════════════════════════════════════════════════
# Dataset Fixtures
# ═══════════════════════════════════════════════════════════

@pytest.fixture
def toy_config(tmp_path):
    """Two-emotion config writing into a temporary output directory"""
    return PipelineConfig(
        emotion_set=["surprise", "angry"],
        primary_emotion="surprise",
        out_dir=str(tmp_path / "out"),
        cache_dir=str(tmp_path / "cache"),
    )


@pytest.fixture
def toy_manifest(tmp_path, tone):
    """
    Eight half-second glides: high-pitched 'surprise', low-pitched 'angry'.
    Three of each are in the train split and one of each in test.
    Returns the manifest CSV path.
    """
    audio_dir = tmp_path / "wavs"
    rows = ["path,speaker,emotion,split"]
    for i in range(4):
        split = "train" if i < 3 else "test"
        surprise = tone(260.0 + 10 * i, 340.0 + 10 * i, duration=0.5, amplitude=0.6)
        angry = tone(120.0 + 5 * i, 150.0 + 5 * i, duration=0.5, amplitude=0.3)
        write_wav(audio_dir / f"surprise_{i}.wav", surprise)
        write_wav(audio_dir / f"angry_{i}.wav", angry)
        rows.append(f"wavs/surprise_{i}.wav,spk1,surprise,{split}")
        rows.append(f"wavs/angry_{i}.wav,spk1,angry,{split}")

    manifest_path = tmp_path / "manifest.csv"
    manifest_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest_path
