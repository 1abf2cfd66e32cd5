"""
Acoustic Feature Extraction
Deterministic frame-level descriptors and the 384-dim utterance vector.

Layout (version emo384-v1):
- 16 LLD tracks: zcr, rms, f0, voicing, mfcc1..mfcc12
- each track and its delta reduced by 12 functionals
- order: all raw tracks (LLD-major, functional-minor), then all delta tracks
  16 x 12 + 16 x 12 = 384

Conventions:
- ZCR, RMS and F0 work on rectangular frames
- MFCC: pre-emphasis 0.97 on the signal, Hann window, 26 HTK mel bands 0-8000 Hz
- mel spectrogram: Hann window, 80 HTK mel bands 0-8000 Hz
- every log is taken of max(x, 1e-10)
"""

import logging
from functools import lru_cache
from typing import List, Optional

import librosa
import numpy as np
from scipy import stats
from scipy.fft import dct, rfft
from scipy.signal import get_window

from .errors import AudioTooShort, InvalidRange, TrackTooShort, UnsupportedAudio
from .models import (
    FEATURE_DIM,
    LAYOUT_VERSION,
    LOG_FLOOR,
    N_MEL_BANDS,
    PIPELINE_SAMPLE_RATE,
    AudioBuffer,
    F0Contour,
    FeatureVector,
    FrameSpec,
    LldTrack,
    MelSpectrogram,
    WindowName,
)

logger = logging.getLogger(__name__)

N_FFT = 1024
MEL_F_MAX = 8000.0
PRE_EMPHASIS = 0.97
N_MFCC = 12
N_MFCC_BANDS = 26

F0_MIN = 60.0
F0_MAX = 400.0
VOICING_THRESHOLD = 0.30
VOICING_RMS_FLOOR = 1e-5
OCTAVE_GUARD = 0.85  # first peak within this fraction of the best one wins

LLD_NAMES = ["zcr", "rms", "f0", "voicing"] + [f"mfcc{i}" for i in range(1, N_MFCC + 1)]
FUNCTIONAL_NAMES = [
    "mean", "stddev", "kurtosis", "skewness", "min", "max", "range",
    "minpos", "maxpos", "linregc1", "linregc2", "linregerrQ",
]


def feature_names() -> List[str]:
    """Column names of the 384-dim feature vector, in layout order"""
    raw = [f"{lld}_{f}" for lld in LLD_NAMES for f in FUNCTIONAL_NAMES]
    deltas = [f"{lld}_de_{f}" for lld in LLD_NAMES for f in FUNCTIONAL_NAMES]
    return raw + deltas


# ═══════════════════════════════════════════════════════════
# Framing
# ═══════════════════════════════════════════════════════════

@lru_cache(maxsize=32)
def _window(name: str, length: int) -> np.ndarray:
    if name == WindowName.RECTANGULAR.value:
        window = np.ones(length)
    else:
        window = get_window(name, length, fftbins=True).astype(np.float64)
    window.setflags(write=False)
    return window


def _frame_array(samples: np.ndarray, frame_len: int, hop: int, window: str) -> np.ndarray:
    if frame_len < 1:
        raise InvalidRange("Frame length must cover at least one sample")
    if samples.size == 0 or samples.size < frame_len:
        raise AudioTooShort(
            f"Audio has {samples.size} samples, shorter than one frame ({frame_len})"
        )
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_len)[::hop]
    return windows * _window(window, frame_len)


def frame_signal(audio: AudioBuffer, spec: FrameSpec) -> np.ndarray:
    """
    Split audio into windowed frames.

    Returns an (n_frames x frame_samples) array with
    n_frames = floor((N - L) / H) + 1.
    """
    return _frame_array(
        audio.samples,
        spec.frame_samples(audio.sample_rate),
        spec.hop_samples(audio.sample_rate),
        spec.window.value,
    )


def _require_pipeline_rate(audio: AudioBuffer):
    if audio.sample_rate != PIPELINE_SAMPLE_RATE:
        raise UnsupportedAudio(
            f"Expected {PIPELINE_SAMPLE_RATE} Hz audio, got {audio.sample_rate} Hz "
            "(resample before extraction)"
        )


# ═══════════════════════════════════════════════════════════
# Time-domain descriptors
# ═══════════════════════════════════════════════════════════

def zero_crossing_rate(frame: np.ndarray) -> float:
    """Sign changes per adjacent sample pair, in [0, 1]"""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("Frame must be non-empty")
    if frame.size == 1:
        return 0.0
    positive = frame >= 0
    return float(np.count_nonzero(positive[1:] != positive[:-1]) / (frame.size - 1))


def rms_energy(frame: np.ndarray) -> float:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("Frame must be non-empty")
    return float(np.sqrt(np.mean(np.square(frame))))


# ═══════════════════════════════════════════════════════════
# Pitch
# ═══════════════════════════════════════════════════════════

def _nccf(frame: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of a frame with itself at the given lags"""
    n = frame.size
    r = np.correlate(frame, frame, mode="full")[n - 1:]
    cumulative = np.concatenate(([0.0], np.cumsum(np.square(frame))))
    head = cumulative[n - lags]
    tail = cumulative[n] - cumulative[lags]
    denom = np.sqrt(head * tail)
    out = np.zeros(lags.size)
    np.divide(r[lags], denom, out=out, where=denom > 0)
    return out


def _pick_period(values: np.ndarray, lags: np.ndarray) -> tuple:
    """Return (refined lag, peak strength) for one NCCF curve"""
    best = float(values.max())
    interior = np.arange(1, values.size - 1)
    is_peak = (values[interior] >= values[interior - 1]) & (values[interior] >= values[interior + 1])
    candidates = interior[is_peak & (values[interior] >= OCTAVE_GUARD * best)]
    k = int(candidates[0]) if candidates.size else int(np.argmax(values))

    shift = 0.0
    if 0 < k < values.size - 1:
        a, b, c = values[k - 1], values[k], values[k + 1]
        denom = a - 2.0 * b + c
        if denom < 0:
            shift = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return float(lags[k]) + shift, float(values[k])


def _pitch_track(
    frames: np.ndarray,
    sample_rate: int,
    f_min: float,
    f_max: float,
    voicing_threshold: float,
) -> tuple:
    frame_len = frames.shape[1]
    min_lag = max(1, int(np.floor(sample_rate / f_max)))
    max_lag = min(frame_len - 2, int(np.ceil(sample_rate / f_min)))
    if max_lag - min_lag < 2:
        raise InvalidRange(
            f"Frame of {frame_len} samples cannot resolve pitch down to {f_min} Hz"
        )
    lags = np.arange(min_lag, max_lag + 1)

    f0 = np.zeros(frames.shape[0])
    strength = np.zeros(frames.shape[0])
    for i, frame in enumerate(frames):
        if rms_energy(frame) < VOICING_RMS_FLOOR:
            continue
        lag, peak = _pick_period(_nccf(frame, lags), lags)
        strength[i] = min(max(peak, 0.0), 1.0)
        if peak >= voicing_threshold:
            f0[i] = float(np.clip(sample_rate / lag, f_min, f_max))
    return f0, strength


def _check_pitch_range(sample_rate: int, f_min: float, f_max: float):
    if not 0 < f_min < f_max < sample_rate / 2:
        raise InvalidRange(
            f"Pitch range must satisfy 0 < f_min < f_max < {sample_rate / 2:g} Hz, "
            f"got [{f_min:g}, {f_max:g}]"
        )


def estimate_f0(
    audio: AudioBuffer,
    spec: FrameSpec,
    f_min: float = F0_MIN,
    f_max: float = F0_MAX,
    voicing_threshold: float = VOICING_THRESHOLD,
) -> F0Contour:
    """
    Frame-wise F0 by normalized autocorrelation with parabolic peak refinement.

    Voiced frames carry F0 in [f_min, f_max]; unvoiced frames are exactly 0.0.
    """
    _check_pitch_range(audio.sample_rate, f_min, f_max)
    frames = frame_signal(audio, spec.with_window(WindowName.RECTANGULAR))
    f0, _ = _pitch_track(frames, audio.sample_rate, f_min, f_max, voicing_threshold)
    return F0Contour(values=f0, frame_spec=spec)


# ═══════════════════════════════════════════════════════════
# Spectral descriptors
# ═══════════════════════════════════════════════════════════

def _fft_size(frame_len: int) -> int:
    return max(N_FFT, 1 << (frame_len - 1).bit_length())


@lru_cache(maxsize=16)
def _mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    bank = librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=0.0,
        fmax=min(MEL_F_MAX, sample_rate / 2),
        htk=True,
        norm=None,
        dtype=np.float64,
    )
    bank.setflags(write=False)
    return bank


def _log_mel(frames: np.ndarray, sample_rate: int, n_mels: int) -> np.ndarray:
    n_fft = _fft_size(frames.shape[-1])
    power = np.square(np.abs(rfft(frames, n=n_fft, axis=-1)))
    energies = power @ _mel_filterbank(sample_rate, n_fft, n_mels).T
    return np.log(np.maximum(energies, LOG_FLOOR))


def _cepstrum(log_mel: np.ndarray, n_coeffs: int) -> np.ndarray:
    return dct(log_mel, type=2, norm="ortho", axis=-1)[..., 1:n_coeffs + 1]


def mfcc(
    frame: np.ndarray,
    sample_rate: int = PIPELINE_SAMPLE_RATE,
    n_coeffs: int = N_MFCC,
    n_mels: int = N_MFCC_BANDS,
) -> np.ndarray:
    """MFCC 1..n_coeffs of one windowed frame (coefficient 0 excluded)"""
    frame = np.asarray(frame, dtype=np.float64)
    return _cepstrum(_log_mel(frame[np.newaxis, :], sample_rate, n_mels), n_coeffs)[0]


def _pre_emphasis(samples: np.ndarray) -> np.ndarray:
    if samples.size == 0:
        return samples
    return np.concatenate((samples[:1], samples[1:] - PRE_EMPHASIS * samples[:-1]))


def _mfcc_track(audio: AudioBuffer, spec: FrameSpec) -> np.ndarray:
    frames = _frame_array(
        _pre_emphasis(audio.samples),
        spec.frame_samples(audio.sample_rate),
        spec.hop_samples(audio.sample_rate),
        WindowName.HANN.value,
    )
    return _cepstrum(_log_mel(frames, audio.sample_rate, N_MFCC_BANDS), N_MFCC)


def mel_spectrogram(audio: AudioBuffer, spec: Optional[FrameSpec] = None) -> MelSpectrogram:
    """T x 80 log-mel matrix, 50 ms Hann frames every 12.5 ms by default"""
    _require_pipeline_rate(audio)
    spec = spec or FrameSpec()
    frames = frame_signal(audio, spec.with_window(WindowName.HANN))
    return MelSpectrogram(
        frames=_log_mel(frames, audio.sample_rate, N_MEL_BANDS),
        frame_spec=spec,
    )


# ═══════════════════════════════════════════════════════════
# Track post-processing
# ═══════════════════════════════════════════════════════════

def delta(track: LldTrack) -> LldTrack:
    """Regression delta over the two neighbouring frames, edges replicated"""
    if len(track) < 1:
        raise TrackTooShort(f"Track {track.name} is empty")
    padded = np.pad(track.values, 1, mode="edge")
    return LldTrack(name=f"{track.name}_de", values=(padded[2:] - padded[:-2]) / 2.0)


def functionals(track: LldTrack) -> np.ndarray:
    """
    Reduce a track to its 12 functionals:
    mean, stddev, kurtosis, skewness, min, max, range, relative min position,
    relative max position, regression slope, regression offset, regression MSE.
    """
    values = track.values
    n = values.size
    if n < 2:
        raise TrackTooShort(f"Track {track.name} needs at least 2 frames, got {n}")

    mean = float(np.mean(values))
    std = float(np.std(values))
    kurtosis = skewness = 0.0
    if std > 0:
        kurtosis = float(stats.kurtosis(values, fisher=False, bias=True))
        skewness = float(stats.skew(values, bias=True))
        if not (np.isfinite(kurtosis) and np.isfinite(skewness)):
            kurtosis = skewness = 0.0

    v_min = float(np.min(values))
    v_max = float(np.max(values))

    t = np.arange(n, dtype=np.float64)
    t_centered = t - t.mean()
    slope = float(np.dot(t_centered, values - mean) / np.dot(t_centered, t_centered))
    offset = mean - slope * float(t.mean())
    mse = float(np.mean(np.square(values - (offset + slope * t))))

    return np.array([
        mean, std, kurtosis, skewness, v_min, v_max, v_max - v_min,
        np.argmin(values) / (n - 1), np.argmax(values) / (n - 1),
        slope, offset, mse,
    ])


# ═══════════════════════════════════════════════════════════
# Utterance-level vector
# ═══════════════════════════════════════════════════════════

def lld_tracks(
    audio: AudioBuffer,
    spec: Optional[FrameSpec] = None,
    f_min: float = F0_MIN,
    f_max: float = F0_MAX,
    voicing_threshold: float = VOICING_THRESHOLD,
) -> List[LldTrack]:
    """The 16 frame-level descriptor tracks in layout order"""
    spec = spec or FrameSpec()
    _check_pitch_range(audio.sample_rate, f_min, f_max)

    frames = frame_signal(audio, spec.with_window(WindowName.RECTANGULAR))
    zcr = np.array([zero_crossing_rate(f) for f in frames])
    rms = np.array([rms_energy(f) for f in frames])
    f0, voicing = _pitch_track(frames, audio.sample_rate, f_min, f_max, voicing_threshold)
    cepstra = _mfcc_track(audio, spec)

    tracks = [
        LldTrack(name="zcr", values=zcr),
        LldTrack(name="rms", values=rms),
        LldTrack(name="f0", values=f0),
        LldTrack(name="voicing", values=voicing),
    ]
    tracks += [
        LldTrack(name=f"mfcc{i + 1}", values=cepstra[:, i]) for i in range(N_MFCC)
    ]
    return tracks


def extract_feature_vector(
    audio: AudioBuffer,
    spec: Optional[FrameSpec] = None,
    f_min: float = F0_MIN,
    f_max: float = F0_MAX,
    voicing_threshold: float = VOICING_THRESHOLD,
) -> FeatureVector:
    """384-dim utterance descriptor: 16 LLDs x (raw + delta) x 12 functionals"""
    _require_pipeline_rate(audio)
    tracks = lld_tracks(audio, spec, f_min, f_max, voicing_threshold)
    raw = [functionals(t) for t in tracks]
    deltas = [functionals(delta(t)) for t in tracks]
    values = np.concatenate(raw + deltas)
    assert values.size == FEATURE_DIM
    return FeatureVector(values=values, layout_version=LAYOUT_VERSION)
