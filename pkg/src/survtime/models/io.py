"""Versioned JSON serialization for fitted models."""
from __future__ import annotations

import json

from ..data import Encoding
from .base import ConstantModel, KaplanMeierModel, RandomRiskModel, SurvivalModel
from .cox import CoxModel
from .forest import ForestModel

FORMAT = "survtime-model"
VERSION = 1

MODEL_KINDS = {
    cls.kind: cls
    for cls in (CoxModel, ForestModel, KaplanMeierModel, ConstantModel, RandomRiskModel)
}


class ModelFormatError(ValueError):
    pass


def model_to_json(model: SurvivalModel, encoding: Encoding | None = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "encoding": encoding.to_dict() if encoding is not None else None,
        "model": model.to_dict(),
    }
    # json emits shortest round-trip float reprs, so reloading is exact
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def model_from_json(text: str) -> tuple[SurvivalModel, Encoding | None]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ModelFormatError("not a survtime model document")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model format version {doc.get('version')!r}")
    try:
        cls = MODEL_KINDS[doc["kind"]]
    except KeyError:
        raise ModelFormatError(f"unknown model kind {doc.get('kind')!r}") from None
    enc = Encoding.from_dict(doc["encoding"]) if doc.get("encoding") else None
    return cls.from_dict(doc["model"]), enc


def save_model(model: SurvivalModel, path, encoding: Encoding | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(model_to_json(model, encoding))


def load_model(path) -> tuple[SurvivalModel, Encoding | None]:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
