"""Analysis pipelines from spectra, traces and hole profiles to reported quantities."""

from .efficiency import detection_efficiency
from .hole import HoleResult, NoHoleError, hole_to_homogeneous
from .lifetime import (
    BackgroundStudy,
    LifetimeResult,
    aggregate_studies,
    background_choice_study,
    expected_lifetime_error,
    extract_lifetime,
    offresonant_detuning_hz,
    reference_statistics_repetitions,
)
from .matching import MatchReport, match_resonances
from .survey import SurveyLine, SurveyResult, survey_pipeline

__all__ = [
    "BackgroundStudy", "HoleResult", "LifetimeResult", "MatchReport", "NoHoleError", "SurveyLine",
    "SurveyResult", "aggregate_studies", "background_choice_study", "detection_efficiency",
    "expected_lifetime_error", "extract_lifetime", "hole_to_homogeneous", "match_resonances",
    "offresonant_detuning_hz", "reference_statistics_repetitions", "survey_pipeline",
]
