"""Windowed gaze/pupil indicators and their baseline-relative levels."""

from .baseline import (
    INDICATORS,
    BaselineEntry,
    BaselineProfile,
    CalibrationError,
    Level,
    TwoSDDiscretizer,
    calibrate_baseline,
    discretize_level,
)
from .gaze import (
    GazeDistribution,
    GazeSample,
    Viewport,
    build_gaze_distribution,
    jva_cosine,
    map_gaze_to_grid,
)
from .pupil import (
    IpaTransformer,
    MeWindow,
    PupilSample,
    PupilSeries,
    ipa,
    ipa_window,
    modulus_maxima,
    preprocess_pupil,
    universal_threshold,
)

__all__ = [
    "INDICATORS", "BaselineEntry", "BaselineProfile", "CalibrationError", "Level",
    "TwoSDDiscretizer", "calibrate_baseline", "discretize_level",
    "GazeDistribution", "GazeSample", "Viewport", "build_gaze_distribution", "jva_cosine",
    "map_gaze_to_grid",
    "IpaTransformer", "MeWindow", "PupilSample", "PupilSeries", "ipa", "ipa_window",
    "modulus_maxima", "preprocess_pupil", "universal_threshold",
]
