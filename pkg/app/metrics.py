"""
Objective Similarity Metrics
Mel-cepstral distortion and F0 Pearson correlation over DTW-aligned frames.

Design:
- MCEPs are the DCT of the 80-band log-mel spectrum, coefficients 1..M
- One DTW path (computed on MCEPs) is reused for the F0 comparison
- MCD "averaged" variant keeps 1/M inside the per-frame term; "standard" drops it
"""

import logging
import math
from typing import Optional

import librosa
import numpy as np
from scipy import stats
from scipy.fft import dct

from .errors import InsufficientVoicedOverlap, InvalidRange, OrderMismatch, ZeroVariance
from .features import mel_spectrogram
from .models import N_MEL_BANDS, AlignmentPath, AudioBuffer, F0Contour, FrameSpec, McepSequence

logger = logging.getLogger(__name__)

MCEP_ORDER = 24
MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)
MCD_VARIANTS = ("averaged", "standard")
# Ties prefer the diagonal, then (i-1, j), then (i, j-1)
DTW_STEPS = np.array([[1, 1], [1, 0], [0, 1]])


def extract_mcep(audio: AudioBuffer, order: int = MCEP_ORDER, spec: Optional[FrameSpec] = None) -> McepSequence:
    """T x order cepstra of the log-mel spectrogram; coefficient 0 (gain) dropped"""
    if not 1 <= order < N_MEL_BANDS:
        raise InvalidRange(f"MCEP order must be in [1, {N_MEL_BANDS - 1}], got {order}")
    log_mel = mel_spectrogram(audio, spec).frames
    cepstra = dct(log_mel, type=2, norm="ortho", axis=1)[:, 1:order + 1]
    return McepSequence(frames=cepstra)


# ═══════════════════════════════════════════════════════════
# Alignment
# ═══════════════════════════════════════════════════════════

def align_frames(a: np.ndarray, b: np.ndarray) -> AlignmentPath:
    """DTW between two (T x M) frame matrices under Euclidean frame distance"""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("DTW needs non-empty sequences")
    total, path = librosa.sequence.dtw(
        X=a.T, Y=b.T, metric="euclidean", step_sizes_sigma=DTW_STEPS, backtrack=True
    )
    return AlignmentPath(pairs=np.ascontiguousarray(path[::-1], dtype=np.int64), cost=float(total[-1, -1]))


def dtw_align(a: McepSequence, b: McepSequence) -> AlignmentPath:
    """Minimum-cost monotone path from (0, 0) to (T_a - 1, T_b - 1)"""
    if a.order != b.order:
        raise OrderMismatch(f"MCEP orders differ: {a.order} vs {b.order}")
    return align_frames(a.frames, b.frames)


# ═══════════════════════════════════════════════════════════
# Mel-cepstral distortion
# ═══════════════════════════════════════════════════════════

def mcd(
    reference: McepSequence,
    test: McepSequence,
    variant: str = "averaged",
    path: Optional[AlignmentPath] = None,
) -> float:
    """Mean per-frame distortion in dB over the DTW-aligned frame pairs"""
    if variant not in MCD_VARIANTS:
        raise ValueError(f"Unknown MCD variant {variant}")
    if reference.order != test.order:
        raise OrderMismatch(f"MCEP orders differ: {reference.order} vs {test.order}")

    path = path or dtw_align(reference, test)
    diff = reference.frames[path.pairs[:, 0]] - test.frames[path.pairs[:, 1]]
    per_frame = MCD_CONSTANT * np.sqrt(np.sum(np.square(diff), axis=1))
    if variant == "averaged":
        per_frame = per_frame / reference.order
    return float(np.mean(per_frame))


# ═══════════════════════════════════════════════════════════
# F0 correlation
# ═══════════════════════════════════════════════════════════

def _f0_pairs(reference: F0Contour, test: F0Contour, path: Optional[AlignmentPath]) -> np.ndarray:
    if path is not None:
        return path.pairs
    if reference.values.size == test.values.size:
        index = np.arange(reference.values.size)
        return np.column_stack((index, index))
    if reference.values.size == 0 or test.values.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return align_frames(reference.values[:, np.newaxis], test.values[:, np.newaxis]).pairs


def f0_pcc(reference: F0Contour, test: F0Contour, path: Optional[AlignmentPath] = None) -> float:
    """
    Pearson correlation of F0 over aligned, mutually voiced frames.

    Without a path, equal-length contours are compared frame by frame and
    unequal ones are aligned by DTW on the contours themselves.
    """
    pairs = _f0_pairs(reference, test, path)
    if pairs.size and (pairs[:, 0].max() >= reference.values.size or pairs[:, 1].max() >= test.values.size):
        raise ValueError("Alignment path does not fit the F0 contours")

    ref = reference.values[pairs[:, 0]]
    tst = test.values[pairs[:, 1]]
    voiced = (ref > 0) & (tst > 0)
    if np.count_nonzero(voiced) < 2:
        raise InsufficientVoicedOverlap(
            f"Only {np.count_nonzero(voiced)} mutually voiced frames after alignment"
        )

    ref, tst = ref[voiced], tst[voiced]
    if np.ptp(ref) == 0 or np.ptp(tst) == 0:
        raise ZeroVariance("F0 is constant over the voiced overlap")

    r = stats.pearsonr(ref, tst).statistic
    return float(np.clip(r, -1.0, 1.0))
