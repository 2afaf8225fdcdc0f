"""JSON (de)serialization for fitted models, dispatched on ``model_kind``."""
import json
from pathlib import Path

from .errors import ModelFormatError
from .gpr import GprModel
from .linreg import LrModel

_KINDS = {"gpr": GprModel, "lr": LrModel}


def model_from_dict(d: dict):
    kind = d.get("model_kind") if isinstance(d, dict) else None
    if kind not in _KINDS:
        raise ModelFormatError(f"unknown model_kind {kind!r}")
    return _KINDS[kind].from_dict(d)


def save_model(model, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)
