"""
Unit tests for manifests, WAV ingestion, the feature cache and documents
"""

import json

import numpy as np
import pytest
import soundfile as sf

from app.dataio import (
    FeatureCache,
    atomic_write_text,
    auto_split,
    decode_features,
    encode_features,
    extract_manifest_features,
    features_from_table,
    features_table,
    load_manifest,
    load_ranking_model,
    load_ranking_models,
    read_table,
    read_wav,
    save_ranking_models,
    write_table,
    write_wav,
)
from app.errors import CacheError, DuplicatePath, MissingFile, ParseError, UnknownEmotion, UnsupportedAudio
from app.features import extract_feature_vector
from app.models import FEATURE_DIM, FeatureVector, Manifest, ManifestEntry, Split
from app.ranking import train_pair_model


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ═══════════════════════════════════════════════════════════
# Manifests
# ═══════════════════════════════════════════════════════════

class TestManifestParsing:
    """Tests for load_manifest"""

    def test_csv_manifest(self, toy_manifest):
        manifest = load_manifest(toy_manifest)
        assert len(manifest) == 8
        assert len(manifest.by_split(Split.TRAIN)) == 6
        assert len(manifest.by_emotion("angry", Split.TEST)) == 1

    def test_paths_resolved_against_manifest_dir(self, toy_manifest):
        entry = load_manifest(toy_manifest).entries[0]
        assert entry.path == str((toy_manifest.parent / "wavs" / "surprise_0.wav").resolve())

    def test_labels_normalized(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion,split\na.wav,s1, Angry ,train\n")
        entry = load_manifest(path, check_files=False).entries[0]
        assert entry.emotion_label == "angry"

    def test_json_manifest(self, tmp_path):
        entries = [
            {"path": "a.wav", "speaker_id": "s1", "emotion_label": "sad", "split": "eval"},
            {"path": "b.wav", "speaker": "s2", "emotion": "happy", "split": "train", "mix_percentage": 30},
        ]
        path = _write(tmp_path / "m.json", json.dumps({"entries": entries}))
        manifest = load_manifest(path, check_files=False)
        assert [e.emotion_label for e in manifest.entries] == ["sad", "happy"]
        assert manifest.entries[1].mix_percentage == 30.0

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,emotion\na.wav,sad\n")
        with pytest.raises(ParseError) as info:
            load_manifest(path, check_files=False)
        assert info.value.line == 1

    def test_unexpected_column(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion,mood\na.wav,s1,sad,x\n")
        with pytest.raises(ParseError) as info:
            load_manifest(path, check_files=False)
        assert (info.value.line, info.value.column) == (1, 4)

    def test_empty_field_reports_line_and_column(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\na.wav,s1,sad\nb.wav,,sad\n")
        with pytest.raises(ParseError) as info:
            load_manifest(path, check_files=False)
        assert (info.value.line, info.value.column) == (3, 2)
        assert "line 3, column 2" in info.value.message

    def test_malformed_row(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\na.wav,s1,sad\nb.wav,s1,sad,extra\n")
        with pytest.raises(ParseError) as info:
            load_manifest(path, check_files=False)
        assert info.value.line == 3

    def test_invalid_split(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion,split\na.wav,s1,sad,holdout\n")
        with pytest.raises(ParseError):
            load_manifest(path, check_files=False)

    def test_unknown_emotion_names_line(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\na.wav,s1,sad\nb.wav,s1,bored\n")
        with pytest.raises(UnknownEmotion) as info:
            load_manifest(path, emotion_set=["sad", "happy"], check_files=False)
        assert "line 3" in info.value.message

    def test_duplicate_path(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\na.wav,s1,sad\na.wav,s2,happy\n")
        with pytest.raises(DuplicatePath) as info:
            load_manifest(path, check_files=False)
        assert "lines 2 and 3" in info.value.message

    def test_missing_audio_file(self, tmp_path):
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\nnowhere.wav,s1,sad\n")
        with pytest.raises(MissingFile):
            load_manifest(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_manifest(tmp_path / "absent.csv")

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(ParseError):
            load_manifest(_write(tmp_path / "m.csv", ""), check_files=False)


class TestAutoSplit:
    """Tests for the seeded 300/30/20 split"""

    def _manifest(self, n, speakers=("s1",)):
        entries = [
            ManifestEntry(path=f"/data/{s}_{i}.wav", speaker_id=s, emotion_label="sad")
            for s in speakers for i in range(n)
        ]
        return Manifest(entries=entries)

    def test_proportions(self):
        manifest = auto_split(self._manifest(350))
        assert len(manifest.by_split(Split.TRAIN)) == 300
        assert len(manifest.by_split(Split.TEST)) == 30
        assert len(manifest.by_split(Split.EVAL)) == 20

    def test_per_speaker(self):
        """Every speaker contributes to every split"""
        manifest = auto_split(self._manifest(35, speakers=("s1", "s2")))
        for split in Split:
            speakers = {e.speaker_id for e in manifest.by_split(split)}
            assert speakers == {"s1", "s2"}

    def test_seeded(self):
        first = auto_split(self._manifest(70), seed=5)
        second = auto_split(self._manifest(70), seed=5)
        assert [e.split for e in first.entries] == [e.split for e in second.entries]

    def test_explicit_splits_kept(self):
        entries = [
            ManifestEntry(path="/a.wav", speaker_id="s", emotion_label="sad", split=Split.EVAL),
            ManifestEntry(path="/b.wav", speaker_id="s", emotion_label="sad"),
        ]
        manifest = auto_split(Manifest(entries=entries))
        assert manifest.entries[0].split == Split.EVAL
        assert manifest.entries[1].split == Split.TRAIN

    def test_applied_when_loading(self, tmp_path):
        rows = "\n".join(f"u{i}.wav,s1,happy" for i in range(35))
        path = _write(tmp_path / "m.csv", "path,speaker,emotion\n" + rows + "\n")
        manifest = load_manifest(path, check_files=False)
        assert all(e.split is not None for e in manifest.entries)


# ═══════════════════════════════════════════════════════════
# Audio
# ═══════════════════════════════════════════════════════════

class TestWav:
    """Tests for WAV reading and writing"""

    def test_round_trip(self, tmp_path, tone):
        audio = tone(220, duration=0.2)
        write_wav(tmp_path / "a.wav", audio)
        loaded = read_wav(tmp_path / "a.wav")
        assert loaded.sample_rate == 16000
        np.testing.assert_allclose(loaded.samples, audio.samples, atol=2.0 / 32768)

    def test_stereo_rejected(self, tmp_path):
        sf.write(str(tmp_path / "s.wav"), np.zeros((1600, 2)), 16000, subtype="PCM_16")
        with pytest.raises(UnsupportedAudio):
            read_wav(tmp_path / "s.wav")

    def test_other_rate_rejected(self, tmp_path):
        sf.write(str(tmp_path / "r.wav"), np.zeros(800), 8000, subtype="PCM_16")
        with pytest.raises(UnsupportedAudio):
            read_wav(tmp_path / "r.wav")

    def test_float_subtype_rejected(self, tmp_path):
        sf.write(str(tmp_path / "f.wav"), np.zeros(1600), 16000, subtype="FLOAT")
        with pytest.raises(UnsupportedAudio):
            read_wav(tmp_path / "f.wav")

    def test_not_audio_rejected(self, tmp_path):
        _write(tmp_path / "x.wav", "not audio")
        with pytest.raises(UnsupportedAudio):
            read_wav(tmp_path / "x.wav")

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            read_wav(tmp_path / "absent.wav")


# ═══════════════════════════════════════════════════════════
# Feature cache
# ═══════════════════════════════════════════════════════════

@pytest.fixture
def vector():
    return FeatureVector(values=np.random.default_rng(0).normal(size=FEATURE_DIM))


class TestFeatureCache:
    """Tests for the binary feature cache"""

    def test_encode_decode(self, vector):
        np.testing.assert_array_equal(decode_features(encode_features(vector)).values, vector.values)

    def test_bad_magic(self, vector):
        with pytest.raises(CacheError):
            decode_features(b"XXXX" + encode_features(vector)[4:])

    def test_truncated(self, vector):
        with pytest.raises(CacheError):
            decode_features(encode_features(vector)[:100])

    def test_wrong_layout(self, vector):
        other = FeatureVector(values=vector.values, layout_version="other-v0")
        with pytest.raises(CacheError):
            decode_features(encode_features(other))

    def test_put_get(self, tmp_path, tone, vector):
        write_wav(tmp_path / "a.wav", tone(220, duration=0.2))
        cache = FeatureCache(tmp_path / "cache")
        assert cache.get(tmp_path / "a.wav") is None
        cache.put(tmp_path / "a.wav", vector)
        np.testing.assert_array_equal(cache.get(tmp_path / "a.wav").values, vector.values)

    def test_key_follows_content(self, tmp_path, tone):
        """Same bytes under another name share a key; other bytes do not"""
        write_wav(tmp_path / "a.wav", tone(220, duration=0.2))
        write_wav(tmp_path / "b.wav", tone(220, duration=0.2))
        write_wav(tmp_path / "c.wav", tone(240, duration=0.2))
        cache = FeatureCache(tmp_path / "cache")
        assert cache.key(tmp_path / "a.wav") == cache.key(tmp_path / "b.wav")
        assert cache.key(tmp_path / "a.wav") != cache.key(tmp_path / "c.wav")

    def test_corrupt_entry_is_a_miss(self, tmp_path, tone, vector):
        write_wav(tmp_path / "a.wav", tone(220, duration=0.2))
        cache = FeatureCache(tmp_path / "cache")
        cache.put(tmp_path / "a.wav", vector)
        next((tmp_path / "cache").glob("*.emof")).write_bytes(b"garbage")
        assert cache.get(tmp_path / "a.wav") is None

    def test_cached_extraction_matches_fresh(self, toy_manifest, tmp_path):
        entries = load_manifest(toy_manifest).entries[:2]
        cache = FeatureCache(tmp_path / "cache")
        first = extract_manifest_features(entries, cache=cache)
        second = extract_manifest_features(entries, cache=cache)
        fresh = [extract_feature_vector(read_wav(e.path)) for e in entries]
        for a, b, c in zip(first, second, fresh):
            np.testing.assert_array_equal(a.values, c.values)
            np.testing.assert_array_equal(b.values, c.values)

    def test_jobs_do_not_change_vectors(self, toy_manifest):
        """Bitwise-identical vectors for 1 and 3 workers"""
        entries = load_manifest(toy_manifest).entries
        single = extract_manifest_features(entries, jobs=1)
        threaded = extract_manifest_features(entries, jobs=3)
        for a, b in zip(single, threaded):
            np.testing.assert_array_equal(a.values, b.values)


# ═══════════════════════════════════════════════════════════
# Tables and documents
# ═══════════════════════════════════════════════════════════

class TestTables:
    """Tests for CSV tables"""

    def test_features_table_round_trip(self, tmp_path, vector):
        write_table(features_table(["/a.wav"], [vector]), tmp_path / "f.csv")
        restored = features_from_table(read_table(tmp_path / "f.csv"))
        np.testing.assert_allclose(restored["/a.wav"].values, vector.values, rtol=1e-8)

    def test_tables_are_deterministic(self, tmp_path, vector):
        frame = features_table(["/a.wav"], [vector])
        write_table(frame, tmp_path / "one.csv")
        write_table(frame, tmp_path / "two.csv")
        assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()

    def test_missing_table(self, tmp_path):
        with pytest.raises(MissingFile):
            read_table(tmp_path / "absent.csv")

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        atomic_write_text(tmp_path / "out" / "a.txt", "hello")
        assert [p.name for p in (tmp_path / "out").iterdir()] == ["a.txt"]


class TestModelDocuments:
    """Tests for ranking model persistence"""

    @pytest.fixture
    def model(self, separable_clusters):
        return train_pair_model(separable_clusters["train_a"], separable_clusters["train_b"], ("surprise", "sad"))

    def test_save_and_load(self, tmp_path, model):
        paths = save_ranking_models([model], tmp_path)
        assert paths[0].name == "rank_surprise-sad.json"
        loaded = load_ranking_model(paths[0])
        np.testing.assert_array_equal(loaded.weights, model.weights)
        assert loaded.emotion_pair == ("surprise", "sad")
        assert loaded.score_min == model.score_min

    def test_load_directory(self, tmp_path, model):
        save_ranking_models([model], tmp_path)
        assert [m.pair_id for m in load_ranking_models(tmp_path)] == ["surprise-sad"]

    def test_invalid_json_reports_position(self, tmp_path):
        path = _write(tmp_path / "rank_x.json", '{\n  "weights": [1, 2,\n')
        with pytest.raises(ParseError) as info:
            load_ranking_model(path)
        assert info.value.line is not None

    def test_invalid_document(self, tmp_path):
        path = _write(tmp_path / "rank_x.json", '{"weights": [1.0]}')
        with pytest.raises(ParseError):
            load_ranking_model(path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(MissingFile):
            load_ranking_models(tmp_path / "absent")
