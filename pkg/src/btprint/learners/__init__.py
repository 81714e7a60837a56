"""From-scratch classifier suite behind one fit/predict contract."""

from .base import (
    ALL_ALGORITHMS,
    FAMILIES,
    AlgorithmId,
    Dataset,
    TrainedModel,
    class_scores,
    dumps_model,
    fit,
    learner_for,
    load_model,
    model_from_json,
    model_to_json,
    predict,
    predict_many,
    save_model,
)
from . import bayes, functions, rules, trees  # noqa: F401  (registers learners)

__all__ = [
    "ALL_ALGORITHMS", "FAMILIES", "AlgorithmId", "Dataset", "TrainedModel", "class_scores",
    "dumps_model", "fit", "learner_for", "load_model", "model_from_json", "model_to_json",
    "predict", "predict_many", "save_model",
]
