"""
Command-line interface.

    python -m app [--config C] [--seed N] [--jobs N] [--out DIR] <command> [options]

Errors print one JSON diagnostic line to stderr and exit with the error's
code; logs go to stderr, artifacts to --out.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from .config import PipelineConfig, configure_logging, load_config
from .dataio import load_manifest
from .errors import ConfigError, EmoMixError, MissingFile, ParseError
from .mixer import EXPERIMENT_STEPS
from .models import MixMode, MixSpec, normalize_label
from .pipeline import run_pipeline

logger = logging.getLogger(__name__)


def _percentage_pair(text: str) -> tuple:
    """'angry=90' -> ('angry', 90.0)"""
    label, sep, value = text.partition("=")
    if not sep or not label.strip():
        raise argparse.ArgumentTypeError(f"Expected EMOTION=PERCENT, got '{text}'")
    try:
        return normalize_label(label), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Percentage in '{text}' is not a number")


def _steps(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Steps must be comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emomix",
        description="Mixed-emotion attribute toolkit: features, rankers, mixing and evaluation.",
    )
    parser.add_argument("--config", help="Pipeline config JSON")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument("--jobs", type=int, help="Worker threads for feature extraction")
    parser.add_argument("--out", help="Output directory for artifacts")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    commands = parser.add_subparsers(dest="command", required=True)

    extract = commands.add_parser("extract", help="Extract 384-dim features to features.csv")
    extract.add_argument("--manifest", required=True)
    extract.add_argument("--split", default="all", choices=["all", "train", "test", "eval"])

    train = commands.add_parser("train-rank", help="Train one ranker per emotion pair")
    train.add_argument("--manifest", required=True)

    predict = commands.add_parser("predict", help="Predict attribute vectors to attributes.csv")
    predict.add_argument("--manifest", required=True)
    predict.add_argument("--split", default="all", choices=["all", "train", "test", "eval"])
    predict.add_argument("--models", help="Directory of rank_*.json models")
    predict.add_argument("--features", help="features.csv from an earlier extract run (skips extraction)")

    for name, help_text in (("mix", "Manual attribute vector to mix.csv"),
                            ("sweep", "Percentage sweep of one emotion to sweep.csv")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--spec", help="MixSpec JSON file (overrides the flags below)")
        sub.add_argument("--primary", help="Primary emotion (default from config)")
        sub.add_argument("--mix", action="append", type=_percentage_pair, default=[],
                         metavar="EMOTION=PERCENT", help="Reference percentage, repeatable")
        sub.add_argument("--mode", choices=[m.value for m in MixMode], default=MixMode.MIXING.value)
        sub.add_argument("--primary-percentage", type=float)
        if name == "sweep":
            sub.add_argument("--emotion", required=True, help="Reference emotion to sweep")
            sub.add_argument("--steps", type=_steps, default=list(EXPERIMENT_STEPS),
                             help="Comma-separated percentages (default 0,30,60,90)")

    for name in ("eval-mcd", "eval-pcc"):
        sub = commands.add_parser(name, help=f"{name[5:].upper()} between paired manifests")
        sub.add_argument("--reference", required=True, help="Reference manifest")
        sub.add_argument("--test", required=True, help="Test manifest, paired by row")
        sub.add_argument("--plot", action="store_true", help="SVG of score vs. mix_percentage")

    probe_train = commands.add_parser("probe-train", help="Train the softmax emotion probe")
    probe_train.add_argument("--manifest", required=True)

    probe_eval = commands.add_parser("probe-eval", help="Per-utterance probe probabilities")
    probe_eval.add_argument("--manifest", required=True)
    probe_eval.add_argument("--split", default="eval", choices=["all", "train", "test", "eval"])
    probe_eval.add_argument("--probe", help="Probe JSON (default OUT/probe.json)")
    probe_eval.add_argument("--sweep-from", type=normalize_label, help="Start emotion centroid")
    probe_eval.add_argument("--sweep-to", type=normalize_label, help="End emotion centroid")
    probe_eval.add_argument("--sweep-steps", type=int, default=11)

    report = commands.add_parser("report", help="Aggregate model and probe metrics to report.json")
    report.add_argument("--manifest", help="Manifest whose test split is scored")
    report.add_argument("--models", help="Directory of rank_*.json models")

    return parser


def _load_mix_spec(path: str) -> MixSpec:
    spec_path = Path(path)
    if not spec_path.exists():
        raise MissingFile(f"MixSpec not found at {spec_path}")
    text = spec_path.read_text(encoding="utf-8")
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid MixSpec JSON: {e.msg}", line=e.lineno, column=e.colno)
    try:
        return MixSpec.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"Invalid MixSpec: {e.errors()[0]['msg']}")


def _options(args: argparse.Namespace, config: PipelineConfig) -> Dict[str, object]:
    options: Dict[str, object] = {}
    command = args.command

    if command in ("extract", "predict", "probe-eval"):
        options["split"] = args.split
    if command in ("predict", "report") and args.models:
        options["models"] = args.models
    if command == "predict" and args.features:
        options["features"] = args.features
    if command in ("mix", "sweep"):
        if args.spec:
            options["mix_spec"] = _load_mix_spec(args.spec)
        options["primary"] = args.primary
        options["percentages"] = dict(args.mix)
        options["mode"] = args.mode
        options["primary_percentage"] = args.primary_percentage
        if command == "sweep":
            options["emotion"] = args.emotion
            options["steps"] = args.steps
    if command in ("eval-mcd", "eval-pcc"):
        options["test_manifest"] = load_manifest(args.test, seed=config.seed)
        options["plot"] = args.plot
    if command == "probe-eval":
        options.update(
            probe=args.probe,
            sweep_from=args.sweep_from,
            sweep_to=args.sweep_to,
            sweep_steps=args.sweep_steps,
        )
    return options


def _manifest(args: argparse.Namespace, config: PipelineConfig):
    if args.command in ("eval-mcd", "eval-pcc"):
        return load_manifest(args.reference, seed=config.seed)
    path = getattr(args, "manifest", None)
    if not path:
        return None
    return load_manifest(path, emotion_set=config.emotion_set, seed=config.seed)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = load_config(args.config).with_overrides(seed=args.seed, jobs=args.jobs, out_dir=args.out)
        manifest = _manifest(args, config)
        options = _options(args, config)
    except EmoMixError as e:
        print(e.diagnostic(), file=sys.stderr)
        return e.exit_code

    result = run_pipeline(config, manifest, args.command, **options)
    if result.error is not None:
        print(result.error.diagnostic(), file=sys.stderr)
        return result.exit_code

    for artifact in result.artifacts:
        logger.info(f"Wrote {artifact}")
    return 0

