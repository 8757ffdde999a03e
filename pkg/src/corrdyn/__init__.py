"""Correspondence analysis of evoked responses."""

__version__ = "0.1.0"

from .ca import (AnalysisMatrix, CaSolution, CorrespondenceAnalysis, NonnegativeEncoder,  # noqa: E402
                 correspondence_analysis, encode_nonnegative, project_supplementary_rows)
from .model import EventList, Montage, Recording, TimeWindow  # noqa: E402
from .preprocess import ConditionERP, PreprocessSettings, preprocess_recording  # noqa: E402
from .stats import anova_oneway, cosine_table, pearson_with_p, sign_test  # noqa: E402

__all__ = [
    "AnalysisMatrix", "CaSolution", "CorrespondenceAnalysis", "NonnegativeEncoder",
    "correspondence_analysis", "encode_nonnegative", "project_supplementary_rows",
    "EventList", "Montage", "Recording", "TimeWindow",
    "ConditionERP", "PreprocessSettings", "preprocess_recording",
    "anova_oneway", "cosine_table", "pearson_with_p", "sign_test",
]
