"""Encoding-energy modelling: features, GPR and OLS models, measurement, evaluation."""

__version__ = "0.1.0"

from .features import Dataset, EncodingConfig, Preset, Sample, Standard, extract_features  # noqa: E402
from .gpr import FitOptions, GprModel, Hyperparams  # noqa: E402
from .linreg import LrModel  # noqa: E402
from .measurement import CitConfig, MeasurementResult, PowerTrace, measure_until_confident  # noqa: E402
from .synth import CorpusSpec, OracleParams, generate_corpus  # noqa: E402

__all__ = [
    "CitConfig",
    "CorpusSpec",
    "Dataset",
    "EncodingConfig",
    "FitOptions",
    "GprModel",
    "Hyperparams",
    "LrModel",
    "MeasurementResult",
    "OracleParams",
    "PowerTrace",
    "Preset",
    "Sample",
    "Standard",
    "extract_features",
    "generate_corpus",
    "measure_until_confident",
]
