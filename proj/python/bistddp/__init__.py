"""Bi-STDDP: bidirectional spatio-temporal dependence and preference model
for identifying missing POI check-ins."""

from ._core import (
    DegenerateGeometry,
    EmptyCorpus,
    EmptyTrainSet,
    InvalidInput,
    Predictor,
    ShapeMismatch,
    StddpError,
    ablate,
    baselines,
    config_keys,
    evaluate,
    haversine_km,
    load_config_file,
    prepare,
    resolve_config,
    selfcheck,
    sweep,
    train,
    write_planted_corpus,
)

__all__ = [
    "DegenerateGeometry",
    "EmptyCorpus",
    "EmptyTrainSet",
    "InvalidInput",
    "Predictor",
    "ShapeMismatch",
    "StddpError",
    "ablate",
    "baselines",
    "config_keys",
    "evaluate",
    "haversine_km",
    "load_config_file",
    "prepare",
    "resolve_config",
    "selfcheck",
    "sweep",
    "train",
    "write_planted_corpus",
]
