"""Real-time sensing of a pair-programming dyad from two eye trackers.

Joint visual attention, per-person mental effort (pupil IPA) and joint
mental effort are computed on sliding windows, forecast 30 s ahead with
gradient-boosted trees, and fed to a cooldown-gated feedback policy.
"""

from .config import ConfigError, EngineConfig, load_config
from .engine import Engine, run_engine
from .policy import Action, CollabState, FeedbackEvent, Policy, PolicyConfig
from .records import Annotation
from .signals import GazeSample, Level, PupilSample

__version__ = "0.1.0"

__all__ = [
    "Action", "Annotation", "CollabState", "ConfigError", "Engine", "EngineConfig", "FeedbackEvent",
    "GazeSample", "Level", "Policy", "PolicyConfig", "PupilSample", "load_config", "run_engine",
]
