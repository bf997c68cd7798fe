"""JSON checkpoint: configuration, normalization stats and every tensor in full precision."""

from __future__ import annotations

import json

import torch

from ..features import FEATURE_LAYOUT_VERSION
from .model import BPNet, ModelConfig

FORMAT_VERSION = 1


def model_to_doc(model: BPNet, feature_norm: dict | None = None, extra: dict | None = None) -> dict:
    tensors = []
    for name, t in model.state_dict().items():
        t = t.detach().cpu()
        values = [int(v) for v in t.reshape(-1).tolist()] if not t.is_floating_point() else \
            [float(v) for v in t.reshape(-1).tolist()]
        tensors.append({"name": name, "shape": list(t.shape), "values": values})
    doc = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "norm": feature_norm,
        "tensors": tensors,
    }
    if extra:
        doc.update(extra)
    return doc


def model_from_doc(doc: dict) -> BPNet:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    if doc.get("feature_layout_version") != FEATURE_LAYOUT_VERSION:
        raise ValueError("checkpoint was trained with a different feature layout")
    model = BPNet(ModelConfig.from_dict(doc["model_config"]))
    ref = model.state_dict()
    state = {}
    for entry in doc["tensors"]:
        like = ref[entry["name"]]
        state[entry["name"]] = torch.tensor(entry["values"], dtype=like.dtype).reshape(entry["shape"])
    model.load_state_dict(state)
    model.eval()
    return model


def save_checkpoint(path, model: BPNet, feature_norm: dict | None = None, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_doc(model, feature_norm, extra), fh)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(model, doc)``; ``doc`` holds the norm stats and any extra keys."""
    with open(path) as fh:
        doc = json.load(fh)
    return model_from_doc(doc), doc
