import os
import json
import copy
import hashlib
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables
load_dotenv()

TOOL_NAME = "recogpass"
TOOL_VERSION = "1.0.0"

# Subsystems that draw randomness from the global seed
SEED_SUBSYSTEMS = ("synth", "pairs", "folds", "subsample", "patterns")


class AnalyzerConfig:
    def __init__(self):
        self.base_dir = Path(__file__).parent

        # Reproducibility
        self.SEED = int(os.getenv('RECOGPASS_SEED', '20190101'))

        # 2-D SAX discretization
        self.SAX_OMEGA = int(os.getenv('RECOGPASS_SAX_OMEGA', '8'))
        self.SAX_BETA = int(os.getenv('RECOGPASS_SAX_BETA', '6'))

        # Markov chain training
        self.MARKOV_ORDER = int(os.getenv('RECOGPASS_MARKOV_ORDER', '3'))
        self.ADDITIVE_LAMBDA = float(os.getenv('RECOGPASS_ADDITIVE_LAMBDA', '0.01'))

        # Recognizer evaluation
        self.IMPOSTOR_CAP = int(os.getenv('RECOGPASS_IMPOSTOR_CAP', '50'))  # 0 disables the cap
        self.PROTRACTOR_POINTS = int(os.getenv('RECOGPASS_PROTRACTOR_POINTS', '64'))

        # Guessing metrics
        self.BUCKET_WIDTH_BITS = float(os.getenv('RECOGPASS_BUCKET_WIDTH_BITS', '0.01'))
        self.CV_FOLDS = int(os.getenv('RECOGPASS_CV_FOLDS', '10'))
        self.MAX_GUESSES = int(os.getenv('RECOGPASS_MAX_GUESSES', '65536'))

        # Bias analysis
        self.HEATMAP_GRID = os.getenv('RECOGPASS_HEATMAP_GRID', '10x10')

        # Runtime
        self.THREADS = int(os.getenv('RECOGPASS_THREADS', '4'))
        self.LOG_LEVEL = os.getenv('RECOGPASS_LOG_LEVEL', 'INFO').upper()

        self._validate()

    def _validate(self):
        if self.THREADS < 1:
            raise ConfigError(f"threads must be >= 1, got {self.THREADS}")
        if self.BUCKET_WIDTH_BITS <= 0:
            raise ConfigError(f"bucket width must be positive, got {self.BUCKET_WIDTH_BITS}")
        if self.ADDITIVE_LAMBDA <= 0:
            raise ConfigError(f"additive lambda must be positive, got {self.ADDITIVE_LAMBDA}")
        if self.IMPOSTOR_CAP < 0:
            raise ConfigError(f"impostor cap must be >= 0, got {self.IMPOSTOR_CAP}")
        self.heatmap_dims()

    def _settings(self) -> Dict[str, Any]:
        return {k: v for k, v in vars(self).items() if k.isupper()}

    def layered(self, config_file: Optional[Path] = None,
                overrides: Optional[Dict[str, Any]] = None) -> 'AnalyzerConfig':
        """
        Build a new config: current values < JSON config file < explicit overrides

        Args:
            config_file: JSON object whose keys are setting names (any case)
            overrides: flag values; None entries are ignored

        Returns:
            New AnalyzerConfig, self is left untouched
        """
        layered = copy.copy(self)
        known = self._settings()

        if config_file is not None:
            path = Path(config_file)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                file_values = json.loads(path.read_text(encoding='utf-8'))
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file {path} is not valid JSON: {e}")
            if not isinstance(file_values, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            layered._apply(file_values, known, source=str(path))

        if overrides:
            layered._apply({k: v for k, v in overrides.items() if v is not None}, known, source="flags")

        layered._validate()
        return layered

    def _apply(self, values: Dict[str, Any], known: Dict[str, Any], source: str):
        for key, value in values.items():
            name = key.upper().replace('-', '_')
            if name not in known:
                raise ConfigError(f"unknown setting '{key}' in {source}")
            current = known[name]
            try:
                setattr(self, name, type(current)(value))
            except (TypeError, ValueError):
                raise ConfigError(f"setting '{key}' in {source}: cannot convert {value!r} to {type(current).__name__}")

    def heatmap_dims(self) -> Tuple[int, int]:
        """Parse HEATMAP_GRID ('ROWSxCOLS')"""
        try:
            rows, cols = (int(part) for part in self.HEATMAP_GRID.lower().split('x'))
        except ValueError:
            raise ConfigError(f"heatmap grid must look like '10x10', got {self.HEATMAP_GRID!r}")
        if rows < 2 or cols < 2:
            raise ConfigError(f"heatmap grid must be at least 2x2, got {self.HEATMAP_GRID!r}")
        return rows, cols

    def derive_seed(self, subsystem: str) -> int:
        """Per-subsystem seed derived from the global seed"""
        if subsystem not in SEED_SUBSYSTEMS:
            raise ConfigError(f"unknown seed subsystem '{subsystem}'")
        digest = hashlib.sha256(f"{self.SEED}/{subsystem}".encode()).digest()
        return int.from_bytes(digest[:8], 'big') >> 1

    def resolved(self) -> Dict[str, Any]:
        """Sorted settings for provenance headers"""
        return dict(sorted((k.lower(), v) for k, v in self._settings().items()))


config = AnalyzerConfig()
