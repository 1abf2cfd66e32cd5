"""
Model Store
Holds the trained pair rankers and the probe for the run-time service.

Design:
- Loaded once at startup from a model directory (rank_*.json, probe.json)
- Ranking models are required for /predict; the probe is optional
- Reload swaps the whole set so requests never see a half-loaded store
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .dataio import load_probe_model, load_ranking_models
from .models import ProbeModel, RankingModel

logger = logging.getLogger(__name__)

PROBE_FILE = "probe.json"


class ModelStore:
    def __init__(self, model_dir: str = "./out/models"):
        self.model_dir = model_dir
        self.models: Dict[Tuple[str, str], RankingModel] = {}
        self.probe: Optional[ProbeModel] = None
        self.loaded: bool = False

    def load(self):
        """Load pair models (and the probe if present) from the model directory"""
        directory = Path(self.model_dir)
        if not directory.is_dir():
            raise FileNotFoundError(f"Model directory not found at {directory}")

        models = {tuple(m.emotion_pair): m for m in load_ranking_models(directory)}
        if not models:
            raise FileNotFoundError(f"No rank_*.json models in {directory}")

        probe = None
        for candidate in (directory / PROBE_FILE, directory.parent / PROBE_FILE):
            if candidate.exists():
                probe = load_probe_model(candidate)
                break

        self.models, self.probe = models, probe
        self.loaded = True

    def reload(self):
        self.load()

    def pair_ids(self) -> List[str]:
        return sorted(m.pair_id for m in self.models.values())

    def get_info(self) -> dict:
        return {
            "loaded": self.loaded,
            "pair_models": self.pair_ids(),
            "probe_loaded": self.probe is not None,
        }
