"""
Pipeline
Binds features, ranking, mixer, metrics and the probe into the CLI commands.

Every command reads inputs, writes its artifacts under `config.out_dir`, and
records a run log (config hash, seeds, per-stage timings, artifacts) in
`run_log.json`. Artifacts are written atomically; the run log is written
even when the command fails.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from . import __version__
from .config import PipelineConfig
from .dataio import (
    FeatureCache,
    attributes_table,
    extract_manifest_features,
    features_from_table,
    features_table,
    load_probe_model,
    load_ranking_models,
    read_table,
    read_wav,
    save_document,
    save_json,
    save_ranking_models,
    write_table,
)
from .errors import ConfigError, EmoMixError, EmptyEmotionSet, ManifestMismatch, MissingFile
from .features import estimate_f0
from .metrics import dtw_align, extract_mcep, f0_pcc, mcd
from .mixer import EXPERIMENT_STEPS, build_manual_vector, sweep
from .models import FeatureVector, Manifest, ManifestEntry, MixSpec, Split, pair_id
from .plots import plot_metric_curve, plot_probability_sweep
from .ranking import enumerate_pairs, pairwise_accuracy, predict_attribute_vector, train_pair_model
from .serprobe import classify, probability_sweep, probe_accuracy, train_probe

logger = logging.getLogger(__name__)

MODEL_DIR = "models"
PROBE_FILE = "probe.json"
RUN_LOG = "run_log.json"


# ═══════════════════════════════════════════════════════════
# Run bookkeeping
# ═══════════════════════════════════════════════════════════

@dataclass
class RunContext:
    config: PipelineConfig
    manifest: Optional[Manifest]
    options: dict
    stages: List[dict] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def out_dir(self) -> Path:
        return Path(self.config.out_dir)

    @property
    def model_dir(self) -> Path:
        return Path(self.options.get("models") or self.out_dir / MODEL_DIR)

    @contextmanager
    def stage(self, name: str):
        started = time.perf_counter()
        try:
            yield
        finally:
            seconds = time.perf_counter() - started
            self.stages.append({"name": name, "seconds": round(seconds, 6)})
            logger.info(f"Stage {name} finished in {seconds:.2f}s")

    def wrote(self, path: Path):
        self.artifacts.append(str(path))

    def require_manifest(self) -> Manifest:
        if self.manifest is None:
            raise MissingFile("This command needs a manifest (--manifest)")
        return self.manifest


@dataclass
class RunResult:
    exit_code: int
    artifacts: List[str]
    summary: dict
    error: Optional[EmoMixError] = None


def _cache(ctx: RunContext) -> FeatureCache:
    directory = ctx.config.cache_dir or ctx.out_dir / "cache"
    return FeatureCache(directory, ctx.config.layout_version)


def _features(ctx: RunContext, entries: Sequence[ManifestEntry]) -> List[FeatureVector]:
    pitch = ctx.config.pitch
    return extract_manifest_features(
        entries,
        spec=ctx.config.frame_spec,
        f_min=pitch.f_min,
        f_max=pitch.f_max,
        voicing_threshold=pitch.voicing_threshold,
        cache=_cache(ctx),
        jobs=ctx.config.jobs,
    )


def _table_features(path: str, entries: Sequence[ManifestEntry]) -> List[FeatureVector]:
    """Vectors from a features.csv written by an earlier extract run"""
    lookup = features_from_table(read_table(path))
    missing = [e.path for e in entries if e.path not in lookup]
    if missing:
        raise ManifestMismatch(f"{len(missing)} manifest paths are not in {path} (first: {missing[0]})")
    return [lookup[e.path] for e in entries]


def _select(manifest: Manifest, split: Optional[str]) -> List[ManifestEntry]:
    if not split or split == "all":
        return list(manifest.entries)
    return manifest.by_split(Split(split))


def _write_table(ctx: RunContext, frame: pd.DataFrame, name: str) -> Path:
    target = ctx.out_dir / name
    write_table(frame, target)
    ctx.wrote(target)
    return target


# ═══════════════════════════════════════════════════════════
# Commands
# ═══════════════════════════════════════════════════════════

def run_extract(ctx: RunContext):
    entries = _select(ctx.require_manifest(), ctx.options.get("split"))
    with ctx.stage("extract"):
        vectors = _features(ctx, entries)
    with ctx.stage("write"):
        frame = features_table([e.path for e in entries], vectors)
        frame.insert(1, "emotion", [e.emotion_label for e in entries])
        frame.insert(2, "split", [e.split.value if e.split else "" for e in entries])
        _write_table(ctx, frame, "features.csv")
    ctx.summary["utterances"] = len(entries)


def run_train_rank(ctx: RunContext):
    config = ctx.config
    manifest = ctx.require_manifest()
    train = manifest.by_split(Split.TRAIN)
    solver = config.solver.model_copy(update={"seed": config.seed})

    with ctx.stage("extract"):
        vectors = dict(zip([e.path for e in train], _features(ctx, train)))

    models = []
    for emotion_a, emotion_b in enumerate_pairs(config.emotion_set, config.primary_emotion, config.all_pairs):
        side_a = [vectors[e.path] for e in train if e.emotion_label == emotion_a]
        side_b = [vectors[e.path] for e in train if e.emotion_label == emotion_b]
        if not side_a or not side_b:
            raise EmptyEmotionSet(
                f"Pair {pair_id(emotion_a, emotion_b)} has {len(side_a)}/{len(side_b)} training utterances"
            )
        with ctx.stage(f"train {pair_id(emotion_a, emotion_b)}"):
            models.append(train_pair_model(side_a, side_b, (emotion_a, emotion_b), solver))

    with ctx.stage("write"):
        for target in save_ranking_models(models, ctx.model_dir):
            ctx.wrote(target)
    ctx.summary["models"] = {
        m.pair_id: {"converged": m.converged, "objective": m.objective, "iterations": m.iterations}
        for m in models
    }


def run_predict(ctx: RunContext):
    config = ctx.config
    entries = _select(ctx.require_manifest(), ctx.options.get("split"))
    models = load_ranking_models(ctx.model_dir)
    references = config.reference_emotions

    with ctx.stage("extract"):
        features_path = ctx.options.get("features")
        vectors = _table_features(features_path, entries) if features_path else _features(ctx, entries)
    with ctx.stage("predict"):
        attributes = [
            predict_attribute_vector(models, v, config.primary_emotion, references) for v in vectors
        ]
    with ctx.stage("write"):
        _write_table(ctx, attributes_table([e.path for e in entries], attributes), "attributes.csv")
    ctx.summary["utterances"] = len(entries)


def _mix_spec(ctx: RunContext) -> MixSpec:
    spec = ctx.options.get("mix_spec")
    if spec is not None:
        return spec
    return MixSpec(
        primary_emotion=ctx.options.get("primary") or ctx.config.primary_emotion,
        reference_percentages=ctx.options.get("percentages") or {},
        mode=ctx.options.get("mode") or "mixing",
        primary_percentage=ctx.options.get("primary_percentage"),
    )


def run_mix(ctx: RunContext):
    spec = _mix_spec(ctx)
    vector = build_manual_vector(spec, ctx.config.emotion_set)
    frame = pd.DataFrame([{"primary": vector.primary, "mode": spec.mode.value, **vector.entries}])
    _write_table(ctx, frame, "mix.csv")
    ctx.summary["entries"] = vector.entries


def run_sweep(ctx: RunContext):
    spec = _mix_spec(ctx)
    emotion = ctx.options["emotion"]
    steps = ctx.options.get("steps") or EXPERIMENT_STEPS
    vectors = sweep(spec, emotion, steps, ctx.config.emotion_set)
    frame = pd.DataFrame([{"step": step, **v.entries} for step, v in zip(steps, vectors)])
    _write_table(ctx, frame, "sweep.csv")
    ctx.summary["steps"] = len(vectors)


def _paired_entries(ctx: RunContext) -> List[tuple]:
    reference = ctx.require_manifest()
    test = ctx.options.get("test_manifest")
    if test is None:
        raise MissingFile("Evaluation needs a test manifest (--test)")
    if len(reference) != len(test):
        raise ManifestMismatch(
            f"Reference manifest has {len(reference)} rows, test manifest has {len(test)}"
        )
    if not len(reference):
        raise ManifestMismatch("Evaluation manifests have no rows")
    return list(zip(reference.entries, test.entries))


def _evaluate(ctx: RunContext, metric: str, score: Callable) -> pd.DataFrame:
    rows = []
    with ctx.stage(f"eval {metric}"):
        for ref_entry, test_entry in _paired_entries(ctx):
            ref_audio, test_audio = read_wav(ref_entry.path), read_wav(test_entry.path)
            percentage = test_entry.mix_percentage
            if percentage is None:
                percentage = np.nan
            rows.append({
                "reference": ref_entry.path,
                "test": test_entry.path,
                "mix_percentage": percentage,
                metric: score(ref_audio, test_audio),
            })
    frame = pd.DataFrame(rows)

    _write_table(ctx, frame, f"{metric}.csv")
    values = frame[metric].to_numpy(dtype=np.float64)
    summary = {"metric": metric, "pairs": int(values.size), "mean": float(values.mean()), "std": float(values.std())}
    target = ctx.out_dir / f"{metric}_summary.json"
    save_json(summary, target)
    ctx.wrote(target)
    ctx.summary.update(summary)

    if ctx.options.get("plot") and frame["mix_percentage"].notna().any():
        target = ctx.out_dir / f"{metric}.svg"
        plot_metric_curve(frame, metric, target)
        ctx.wrote(target)
    return frame


def run_eval_mcd(ctx: RunContext):
    metrics = ctx.config.metrics
    spec = ctx.config.frame_spec

    def score(ref_audio, test_audio) -> float:
        ref = extract_mcep(ref_audio, metrics.mcep_order, spec)
        tst = extract_mcep(test_audio, metrics.mcep_order, spec)
        return mcd(ref, tst, variant=metrics.mcd_variant)

    _evaluate(ctx, "mcd", score)


def run_eval_pcc(ctx: RunContext):
    metrics = ctx.config.metrics
    pitch = ctx.config.pitch
    spec = ctx.config.frame_spec

    def score(ref_audio, test_audio) -> float:
        path = dtw_align(
            extract_mcep(ref_audio, metrics.mcep_order, spec),
            extract_mcep(test_audio, metrics.mcep_order, spec),
        )
        ref = estimate_f0(ref_audio, spec, pitch.f_min, pitch.f_max, pitch.voicing_threshold)
        tst = estimate_f0(test_audio, spec, pitch.f_min, pitch.f_max, pitch.voicing_threshold)
        return f0_pcc(ref, tst, path)

    _evaluate(ctx, "pcc", score)


def run_probe_train(ctx: RunContext):
    train = ctx.require_manifest().by_split(Split.TRAIN)
    probe_config = ctx.config.probe.model_copy(update={"seed": ctx.config.seed})
    labels = [e.emotion_label for e in train]

    with ctx.stage("extract"):
        vectors = _features(ctx, train)
    with ctx.stage("train probe"):
        model = train_probe(vectors, labels, probe_config)
    target = ctx.out_dir / PROBE_FILE
    save_document(model, target)
    ctx.wrote(target)
    ctx.summary["train_accuracy"] = probe_accuracy(model, vectors, labels)
    ctx.summary["final_loss"] = model.final_loss


def _centroid(vectors: Sequence[FeatureVector], entries: Sequence[ManifestEntry], emotion: str) -> np.ndarray:
    rows = [v.values for v, e in zip(vectors, entries) if e.emotion_label == emotion]
    if not rows:
        raise EmptyEmotionSet(f"No {emotion} utterances to build a sweep endpoint")
    return np.mean(rows, axis=0)


def run_probe_eval(ctx: RunContext):
    model = load_probe_model(ctx.options.get("probe") or ctx.out_dir / PROBE_FILE)
    entries = _select(ctx.require_manifest(), ctx.options.get("split") or Split.EVAL.value)

    with ctx.stage("extract"):
        vectors = _features(ctx, entries)
    with ctx.stage("classify"):
        probabilities = np.vstack([classify(model, v) for v in vectors]) if vectors else np.zeros((0, len(model.emotion_labels)))

    frame = pd.DataFrame(probabilities, columns=[f"p_{label}" for label in model.emotion_labels])
    frame.insert(0, "path", [e.path for e in entries])
    frame.insert(1, "emotion", [e.emotion_label for e in entries])
    frame.insert(2, "predicted", [model.emotion_labels[k] for k in np.argmax(probabilities, axis=1)])
    _write_table(ctx, frame, "probe_eval.csv")
    if entries:
        ctx.summary["accuracy"] = float(np.mean(frame["predicted"] == frame["emotion"]))

    start, end = ctx.options.get("sweep_from"), ctx.options.get("sweep_to")
    if start and end:
        steps = int(ctx.options.get("sweep_steps") or 11)
        curve = probability_sweep(model, _centroid(vectors, entries, start), _centroid(vectors, entries, end), steps)
        sweep_frame = pd.DataFrame(curve, columns=[f"p_{label}" for label in model.emotion_labels])
        sweep_frame.insert(0, "step", np.arange(steps))
        _write_table(ctx, sweep_frame, "probe_sweep.csv")
        target = ctx.out_dir / "probe_sweep.svg"
        plot_probability_sweep(curve, model.emotion_labels, target, title=f"{start.capitalize()} to {end.capitalize()}")
        ctx.wrote(target)


def run_report(ctx: RunContext):
    config = ctx.config
    report: Dict[str, object] = {
        "version": __version__,
        "config_hash": config.config_hash(),
        "layout_version": config.layout_version,
        "models": {},
    }
    models = load_ranking_models(ctx.model_dir) if ctx.model_dir.is_dir() else []
    test = ctx.manifest.by_split(Split.TEST) if ctx.manifest is not None else []
    vectors = dict(zip([e.path for e in test], _features(ctx, test))) if test else {}

    for model in models:
        entry = {
            "converged": model.converged,
            "objective": model.objective,
            "iterations": model.iterations,
            "c": model.c,
        }
        side_a = [vectors[e.path] for e in test if e.emotion_label == model.emotion_pair[0]]
        side_b = [vectors[e.path] for e in test if e.emotion_label == model.emotion_pair[1]]
        if side_a and side_b:
            entry["pairwise_accuracy"] = pairwise_accuracy(model, side_a, side_b)
        report["models"][model.pair_id] = entry

    probe_path = ctx.out_dir / PROBE_FILE
    if probe_path.exists() and test:
        probe = load_probe_model(probe_path)
        report["probe_accuracy"] = probe_accuracy(probe, [vectors[e.path] for e in test], [e.emotion_label for e in test])

    target = ctx.out_dir / "report.json"
    save_json(report, target)
    ctx.wrote(target)
    ctx.summary.update(report)


HANDLERS: Dict[str, Callable[[RunContext], None]] = {
    "extract": run_extract,
    "train-rank": run_train_rank,
    "predict": run_predict,
    "mix": run_mix,
    "sweep": run_sweep,
    "eval-mcd": run_eval_mcd,
    "eval-pcc": run_eval_pcc,
    "probe-train": run_probe_train,
    "probe-eval": run_probe_eval,
    "report": run_report,
}


def run_pipeline(
    config: PipelineConfig,
    manifest: Optional[Manifest],
    command: str,
    **options,
) -> RunResult:
    """
    Run one command and write its run log.

    Returns exit code 0 on success, or the failing error's exit code.
    """
    if command not in HANDLERS:
        raise ValueError(f"Unknown command {command}")

    ctx = RunContext(config=config, manifest=manifest, options=options)
    error = None
    started = time.perf_counter()
    try:
        HANDLERS[command](ctx)
    except ValidationError as e:
        error = ConfigError(str(e.errors()[0]["msg"]))
        logger.error(f"{command} failed: {error.message}")
    except EmoMixError as e:
        error = e
        logger.error(f"{command} failed: {e.message}")

    log = {
        "command": command,
        "version": __version__,
        "config_hash": config.config_hash(),
        "layout_version": config.layout_version,
        "seeds": {"seed": config.seed, "solver": config.seed, "probe": config.seed},
        "jobs": config.jobs,
        "stages": ctx.stages,
        "total_seconds": round(time.perf_counter() - started, 6),
        "artifacts": ctx.artifacts,
        "status": "ok" if error is None else "error",
    }
    if error is not None:
        log["error"] = {"code": error.code, "exit_code": error.exit_code, "message": error.message}
    save_json(log, ctx.out_dir / RUN_LOG)

    return RunResult(
        exit_code=0 if error is None else error.exit_code,
        artifacts=ctx.artifacts,
        summary=ctx.summary,
        error=error,
    )
