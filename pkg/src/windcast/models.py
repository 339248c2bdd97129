"""Model dispatch and versioned JSON persistence for both regressor kinds."""

from __future__ import annotations

import json
from pathlib import Path

from . import __version__
from .embed import EmbeddedDataset
from .errors import ArgumentError, FormatError
from .forest import ForestConfig, ForestModel, train_forest
from .svr import SvrConfig, SvrModel, train_svr

MODEL_FORMAT = "windcast-model"
MODEL_VERSION = 1
MODEL_KINDS = {"svr": SvrModel, "forest": ForestModel}


def train_model(kind: str, dataset: EmbeddedDataset, config=None, workers: int | None = 1):
    if kind == "svr":
        return train_svr(dataset, config or SvrConfig())
    if kind == "forest":
        return train_forest(dataset, config or ForestConfig(), workers=workers)
    raise ArgumentError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")


def model_to_dict(model, run: dict | None = None) -> dict:
    if model.kind not in MODEL_KINDS:
        raise ArgumentError(f"cannot serialize model kind {model.kind!r}")
    d = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "windcast_version": __version__,
         "kind": model.kind, "model": model.to_dict()}
    if run is not None:
        d["run"] = run
    return d


def model_from_dict(d: dict):
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise FormatError("not a windcast model file")
    if d.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model file version {d.get('version')!r}")
    cls = MODEL_KINDS.get(d.get("kind"))
    if cls is None:
        raise FormatError(f"unknown model kind {d.get('kind')!r}")
    try:
        return cls.from_dict(d["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed {d['kind']} model: {exc}") from exc


def dumps_model(model, run: dict | None = None) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(model_to_dict(model, run), separators=(",", ":")) + "\n"


def save_model(model, path, run: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, run), encoding="utf-8")


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(d)


def load_run(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("run", {})
