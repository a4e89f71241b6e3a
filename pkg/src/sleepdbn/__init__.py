"""Dynamic Bayesian networks over sleep-stage bouts."""
from .bn import BnConfig, FittedBn, build_structure, fit, load_model, save_model
from .hypnogram_io import HEALTH_STATUSES, STAGES, Cohort, SubjectRecord, parse_cohort

__all__ = [
    "BnConfig",
    "Cohort",
    "FittedBn",
    "HEALTH_STATUSES",
    "STAGES",
    "SubjectRecord",
    "build_structure",
    "fit",
    "load_model",
    "parse_cohort",
    "save_model",
]
__version__ = "0.1.0"
