"""
Unit tests for MCD, F0 PCC and DTW alignment
"""

import math

import numpy as np
import pytest

from app.errors import InsufficientVoicedOverlap, InvalidRange, OrderMismatch, ZeroVariance
from app.metrics import MCD_CONSTANT, align_frames, dtw_align, extract_mcep, f0_pcc, mcd
from app.models import AlignmentPath, AudioBuffer, F0Contour, McepSequence


def _brute_force_dtw(a, b):
    """Minimum summed Euclidean cost over every monotone path"""
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, total):
        nonlocal best
        total += float(np.linalg.norm(a[i] - b[j]))
        if total >= best:
            return
        if (i, j) == (n - 1, m - 1):
            best = total
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total)
        if i + 1 < n:
            walk(i + 1, j, total)
        if j + 1 < m:
            walk(i, j + 1, total)

    walk(0, 0, 0.0)
    return best


def _diagonal(n):
    index = np.arange(n)
    return AlignmentPath(pairs=np.column_stack((index, index)))


# ═══════════════════════════════════════════════════════════
# MCEP extraction
# ═══════════════════════════════════════════════════════════

class TestMcep:
    """Tests for extract_mcep"""

    def test_shape_one_second(self, tone):
        """Order 24 on 1 s -> 77 x 24"""
        assert extract_mcep(tone(220)).frames.shape == (77, 24)

    def test_silence_is_constant(self):
        frames = extract_mcep(AudioBuffer(samples=np.zeros(16000), sample_rate=16000)).frames
        assert np.all(frames == frames[0])

    def test_gain_invariance(self, noise):
        """Gain only moves coefficient 0, which is dropped"""
        audio = noise(amplitude=0.2)
        louder = AudioBuffer(samples=3.0 * audio.samples, sample_rate=16000)
        np.testing.assert_allclose(extract_mcep(louder).frames, extract_mcep(audio).frames, atol=1e-6)

    @pytest.mark.parametrize("order", [0, 80])
    def test_order_out_of_range(self, tone, order):
        with pytest.raises(InvalidRange):
            extract_mcep(tone(220), order=order)


# ═══════════════════════════════════════════════════════════
# Alignment
# ═══════════════════════════════════════════════════════════

class TestDtw:
    """Tests for dtw_align"""

    def test_identical_sequences_diagonal(self):
        frames = np.random.default_rng(0).normal(size=(7, 3))
        path = dtw_align(McepSequence(frames=frames), McepSequence(frames=frames))
        np.testing.assert_array_equal(path.pairs, _diagonal(7).pairs)
        assert path.cost == 0.0

    def test_repeated_frames_cost_zero(self):
        """Each frame duplicated matches the original exactly"""
        frames = np.random.default_rng(1).normal(size=(5, 4))
        path = dtw_align(McepSequence(frames=frames), McepSequence(frames=np.repeat(frames, 2, axis=0)))
        assert path.cost == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(int(rng.integers(1, 7)), 2))
        b = rng.normal(size=(int(rng.integers(1, 7)), 2))
        assert align_frames(a, b).cost == pytest.approx(_brute_force_dtw(a, b), abs=1e-12)

    def test_path_endpoints_and_steps(self):
        rng = np.random.default_rng(3)
        path = align_frames(rng.normal(size=(9, 2)), rng.normal(size=(5, 2)))
        assert tuple(path.pairs[0]) == (0, 0)
        assert tuple(path.pairs[-1]) == (8, 4)
        steps = np.diff(path.pairs, axis=0)
        assert all(tuple(s) in {(1, 0), (0, 1), (1, 1)} for s in steps.tolist())

    def test_cost_at_most_diagonal(self):
        """For equal lengths the optimum never exceeds the diagonal path"""
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
            diagonal = float(np.sum(np.linalg.norm(a - b, axis=1)))
            assert align_frames(a, b).cost <= diagonal + 1e-12

    def test_path_cost_matches_pairs(self):
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
        path = align_frames(a, b)
        total = sum(float(np.linalg.norm(a[i] - b[j])) for i, j in path.pairs)
        assert path.cost == pytest.approx(total, abs=1e-12)

    def test_order_mismatch_raises(self):
        with pytest.raises(OrderMismatch):
            dtw_align(McepSequence(frames=np.zeros((3, 2))), McepSequence(frames=np.zeros((3, 4))))


# ═══════════════════════════════════════════════════════════
# Mel-cepstral distortion
# ═══════════════════════════════════════════════════════════

class TestMcd:
    """Tests for mcd"""

    def test_identical_is_zero(self):
        frames = McepSequence(frames=np.random.default_rng(0).normal(size=(10, 24)))
        assert mcd(frames, frames) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("variant", ["averaged", "standard"])
    def test_self_distance_is_zero(self, seed, variant):
        rng = np.random.default_rng(seed)
        frames = McepSequence(frames=rng.normal(size=(int(rng.integers(1, 40)), int(rng.integers(1, 30)))))
        assert mcd(frames, frames, variant=variant) == 0.0

    def test_single_frame_order_one(self):
        """M = 1, difference d -> (10 sqrt 2 / ln 10) |d|"""
        ref = McepSequence(frames=np.array([[0.5]]))
        test = McepSequence(frames=np.array([[-0.25]]))
        assert mcd(ref, test) == pytest.approx(10 * math.sqrt(2) / math.log(10) * 0.75, abs=1e-12)

    def test_matches_scalar_reimplementation(self):
        rng = np.random.default_rng(6)
        ref = McepSequence(frames=rng.normal(size=(12, 24)))
        test = McepSequence(frames=rng.normal(size=(9, 24)))
        path = dtw_align(ref, test)

        total = 0.0
        for i, j in path.pairs:
            squared = sum((ref.frames[i, m] - test.frames[j, m]) ** 2 for m in range(24))
            total += (10 * math.sqrt(2) / math.log(10)) * (1 / 24) * math.sqrt(squared)
        assert mcd(ref, test) == pytest.approx(total / len(path), abs=1e-9)

    def test_standard_variant_drops_order_factor(self):
        rng = np.random.default_rng(7)
        ref = McepSequence(frames=rng.normal(size=(6, 24)))
        test = McepSequence(frames=rng.normal(size=(6, 24)))
        path = _diagonal(6)
        assert mcd(ref, test, "standard", path) == pytest.approx(24 * mcd(ref, test, "averaged", path))

    def test_symmetric_on_diagonal(self):
        rng = np.random.default_rng(8)
        ref = McepSequence(frames=rng.normal(size=(6, 4)))
        test = McepSequence(frames=rng.normal(size=(6, 4)))
        path = _diagonal(6)
        assert mcd(ref, test, path=path) == pytest.approx(mcd(test, ref, path=path), abs=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(9)
        ref = McepSequence(frames=rng.normal(size=(5, 3)))
        test = McepSequence(frames=rng.normal(size=(7, 3)))
        assert mcd(ref, test) >= 0.0

    def test_constant(self):
        assert MCD_CONSTANT == pytest.approx(10 * math.sqrt(2) / math.log(10))

    def test_order_mismatch_raises(self):
        with pytest.raises(OrderMismatch):
            mcd(McepSequence(frames=np.zeros((3, 2))), McepSequence(frames=np.zeros((3, 3))))

    def test_unknown_variant_raises(self):
        frames = McepSequence(frames=np.zeros((2, 2)))
        with pytest.raises(ValueError):
            mcd(frames, frames, variant="other")


# ═══════════════════════════════════════════════════════════
# F0 correlation
# ═══════════════════════════════════════════════════════════

@pytest.fixture
def contour():
    rng = np.random.default_rng(10)
    return F0Contour(values=rng.uniform(120.0, 260.0, size=40))


class TestF0Pcc:
    """Tests for f0_pcc"""

    def test_self_correlation(self, contour):
        assert f0_pcc(contour, contour) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_self_correlation_random_contours(self, seed):
        """Random voicing and pitch; any contour with two voiced frames correlates fully with itself"""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 80))
        values = rng.uniform(80.0, 400.0, n) * (rng.uniform(size=n) > 0.3)
        values[:2] = [120.0, 180.0]
        contour = F0Contour(values=values)
        assert f0_pcc(contour, contour) == pytest.approx(1.0, abs=1e-12)

    def test_positive_affine(self, contour):
        scaled = F0Contour(values=1.7 * contour.values + 30.0)
        assert f0_pcc(contour, scaled) == pytest.approx(1.0, abs=1e-12)

    def test_negative_affine(self, contour):
        flipped = F0Contour(values=500.0 - contour.values)
        assert f0_pcc(contour, flipped) == pytest.approx(-1.0, abs=1e-12)

    def test_affine_invariance(self, contour):
        other = F0Contour(values=np.random.default_rng(11).uniform(100.0, 300.0, size=40))
        transformed = F0Contour(values=2.5 * other.values + 12.0)
        assert f0_pcc(contour, transformed) == pytest.approx(f0_pcc(contour, other), abs=1e-12)

    def test_matches_covariance_formula(self, contour):
        other = F0Contour(values=np.random.default_rng(12).uniform(100.0, 300.0, size=40))
        x, y = contour.values, other.values
        mx, my = sum(x) / len(x), sum(y) / len(y)
        cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
        sx = math.sqrt(sum((a - mx) ** 2 for a in x))
        sy = math.sqrt(sum((b - my) ** 2 for b in y))
        assert f0_pcc(contour, other) == pytest.approx(cov / (sx * sy), abs=1e-12)

    def test_unvoiced_frames_excluded(self, contour):
        """Zeroed frames drop out of the correlation"""
        values = contour.values.copy()
        values[::3] = 0.0
        masked = F0Contour(values=values)
        keep = values > 0
        expected = f0_pcc(F0Contour(values=contour.values[keep]), F0Contour(values=values[keep]))
        assert f0_pcc(contour, masked) == pytest.approx(expected, abs=1e-12)

    def test_explicit_path(self):
        path = AlignmentPath(pairs=np.array([[0, 0], [1, 0], [2, 1], [3, 2]]))
        ref = F0Contour(values=[100.0, 110.0, 140.0, 150.0])
        test = F0Contour(values=[105.0, 135.0, 160.0])
        expected = np.corrcoef([100.0, 110.0, 140.0, 150.0], [105.0, 105.0, 135.0, 160.0])[0, 1]
        assert f0_pcc(ref, test, path) == pytest.approx(expected, abs=1e-12)

    def test_insufficient_overlap(self):
        ref = F0Contour(values=[100.0, 0.0, 0.0, 120.0])
        test = F0Contour(values=[0.0, 110.0, 130.0, 125.0])
        with pytest.raises(InsufficientVoicedOverlap):
            f0_pcc(ref, test)

    def test_zero_variance(self):
        ref = F0Contour(values=[200.0] * 10)
        test = F0Contour(values=np.linspace(100.0, 200.0, 10))
        with pytest.raises(ZeroVariance):
            f0_pcc(ref, test)

    def test_result_in_range(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            ref = F0Contour(values=rng.uniform(80, 300, size=15))
            test = F0Contour(values=rng.uniform(80, 300, size=15))
            assert -1.0 <= f0_pcc(ref, test) <= 1.0
