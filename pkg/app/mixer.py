"""
Emotion Mixer
Builds manual emotion-attribute vectors from user percentages.

Mapping: attribute = 1 - percentage / 100
- 0% of a reference emotion -> 1.0 (maximally different)
- 100% of a reference emotion -> 0.0 (same style)

Mixing mode keeps the primary emotion implicitly at 100%. Transition mode
requires the primary share plus every reference share to sum to 100%.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import InvalidPercentage, UnknownEmotion
from .models import (
    AttributeSource,
    EmotionAttributeVector,
    MixMode,
    MixSpec,
    normalize_label,
    pair_id,
)

logger = logging.getLogger(__name__)


# Primary (A) + reference (B) combinations and the mixed effect they aim at
MIXED_EFFECTS: Dict[Tuple[str, str], str] = {
    ("surprise", "happy"): "delight",
    ("surprise", "angry"): "outrage",
    ("surprise", "sad"): "disappointment",
}

EXPERIMENT_STEPS = [0.0, 30.0, 60.0, 90.0]


def mixed_effect_combinations() -> List[Tuple[str, str, str]]:
    """(primary, reference, mixed effect) rows of the experimental setup"""
    return [(a, b, effect) for (a, b), effect in MIXED_EFFECTS.items()]


def mixed_effect(spec: MixSpec) -> Optional[str]:
    """Named mixed effect of the last listed reference with a nonzero share, if any"""
    effect = None
    for reference, percentage in spec.reference_percentages.items():
        if percentage > 0:
            effect = MIXED_EFFECTS.get((spec.primary_emotion, reference), effect)
    return effect


def percentage_to_attribute(percentage: float) -> float:
    if not 0.0 <= percentage <= 100.0:
        raise InvalidPercentage(f"Percentage must be in [0, 100], got {percentage}")
    return 1.0 - percentage / 100.0


def attribute_to_percentage(attribute: float) -> float:
    return 100.0 * (1.0 - attribute)


def _references(spec: MixSpec, emotion_set: Optional[Sequence[str]]) -> List[str]:
    if emotion_set is None:
        return list(spec.reference_percentages)

    labels = [normalize_label(e) for e in emotion_set]
    if spec.primary_emotion not in labels:
        raise UnknownEmotion(f"Primary emotion {spec.primary_emotion} is not in {labels}")
    for label in spec.reference_percentages:
        if label not in labels:
            raise UnknownEmotion(f"Reference emotion {label} is not in {labels}")
    return [e for e in labels if e != spec.primary_emotion]


def build_manual_vector(spec: MixSpec, emotion_set: Optional[Sequence[str]] = None) -> EmotionAttributeVector:
    """
    Attribute vector for a MixSpec.

    With an emotion set, every non-primary emotion gets an entry (missing
    percentages count as 0%); without one, only the listed references do.
    """
    entries = {
        pair_id(spec.primary_emotion, reference): percentage_to_attribute(
            spec.reference_percentages.get(reference, 0.0)
        )
        for reference in _references(spec, emotion_set)
    }

    effect = mixed_effect(spec)
    if effect:
        logger.debug(f"Mix targets the {effect} effect")

    return EmotionAttributeVector(
        primary=spec.primary_emotion,
        entries=entries,
        source=AttributeSource.MANUAL,
    )


def percentages_from_vector(vector: EmotionAttributeVector) -> Dict[str, float]:
    """Invert the mapping: reference emotion -> percentage"""
    return {
        reference: attribute_to_percentage(vector.entry(reference))
        for reference in vector.references()
    }


def sweep(
    spec: MixSpec,
    emotion: str,
    steps: Sequence[float],
    emotion_set: Optional[Sequence[str]] = None,
) -> List[EmotionAttributeVector]:
    """
    One vector per step percentage of `emotion`, all other entries held fixed.

    In transition mode the primary share absorbs the change so the total stays 100%.
    """
    emotion = normalize_label(emotion)
    if emotion not in _references(spec, emotion_set):
        raise UnknownEmotion(f"{emotion} is not a reference emotion of this mix")

    vectors = []
    for step in steps:
        step = float(step)
        if not 0.0 <= step <= 100.0:
            raise InvalidPercentage(f"Sweep step must be in [0, 100], got {step}")
        percentages = {**spec.reference_percentages, emotion: step}
        # Transition steps leave the primary share unset so it absorbs the change
        step_spec = MixSpec(
            primary_emotion=spec.primary_emotion,
            reference_percentages=percentages,
            mode=spec.mode,
            primary_percentage=None if spec.mode == MixMode.TRANSITION else spec.primary_percentage,
        )
        vectors.append(build_manual_vector(step_spec, emotion_set))
    return vectors
