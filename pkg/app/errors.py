"""
Error hierarchy for the emotion-attribute toolkit.

Every error carries a stable `code` (used in diagnostics and API responses)
and a distinct nonzero `exit_code` used by the CLI.
"""

import json
from typing import Optional


class EmoMixError(Exception):
    code = "EmoMixError"
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def diagnostic(self) -> str:
        """Single-line machine-parseable description of the failure"""
        return json.dumps(
            {"error": self.code, "exit_code": self.exit_code, "message": self.message},
            ensure_ascii=False,
            separators=(",", ":"),
        )


# ═══════════════════════════════════════════════════════════
# Audio / features
# ═══════════════════════════════════════════════════════════

class AudioTooShort(EmoMixError):
    code = "AudioTooShort"
    exit_code = 10


class InvalidRange(EmoMixError):
    code = "InvalidRange"
    exit_code = 11


class TrackTooShort(EmoMixError):
    code = "TrackTooShort"
    exit_code = 12


class UnsupportedAudio(EmoMixError):
    code = "UnsupportedAudio"
    exit_code = 13


# ═══════════════════════════════════════════════════════════
# Ranking
# ═══════════════════════════════════════════════════════════

class EmptyEmotionSet(EmoMixError):
    code = "EmptyEmotionSet"
    exit_code = 20


class InvalidTradeoff(EmoMixError):
    code = "InvalidTradeoff"
    exit_code = 21


class DidNotConverge(EmoMixError):
    code = "DidNotConverge"
    exit_code = 22

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model  # best iterate


class DimensionMismatch(EmoMixError):
    code = "DimensionMismatch"
    exit_code = 23


class MissingPairModel(EmoMixError):
    code = "MissingPairModel"
    exit_code = 24


# ═══════════════════════════════════════════════════════════
# Mixer
# ═══════════════════════════════════════════════════════════

class InvalidPercentage(EmoMixError):
    code = "InvalidPercentage"
    exit_code = 30


class TransitionSumViolation(EmoMixError):
    code = "TransitionSumViolation"
    exit_code = 31


class UnknownEmotion(EmoMixError):
    code = "UnknownEmotion"
    exit_code = 32


# ═══════════════════════════════════════════════════════════
# Metrics
# ═══════════════════════════════════════════════════════════

class OrderMismatch(EmoMixError):
    code = "OrderMismatch"
    exit_code = 40


class InsufficientVoicedOverlap(EmoMixError):
    code = "InsufficientVoicedOverlap"
    exit_code = 41


class ZeroVariance(EmoMixError):
    code = "ZeroVariance"
    exit_code = 42


# ═══════════════════════════════════════════════════════════
# Probe
# ═══════════════════════════════════════════════════════════

class DegenerateLabels(EmoMixError):
    code = "DegenerateLabels"
    exit_code = 50


# ═══════════════════════════════════════════════════════════
# Data I/O and configuration
# ═══════════════════════════════════════════════════════════

class ParseError(EmoMixError):
    code = "ParseError"
    exit_code = 60

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + location)
        self.line = line
        self.column = column


class MissingFile(EmoMixError):
    code = "MissingFile"
    exit_code = 61


class DuplicatePath(EmoMixError):
    code = "DuplicatePath"
    exit_code = 62


class ManifestMismatch(EmoMixError):
    code = "ManifestMismatch"
    exit_code = 63


class ConfigError(EmoMixError):
    code = "ConfigError"
    exit_code = 64


class CacheError(EmoMixError):
    code = "CacheError"
    exit_code = 65
