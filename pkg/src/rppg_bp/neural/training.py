"""Subject-level split, mini-batch Adam training and session aggregation."""

from __future__ import annotations

import copy
import logging
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import EmptyPartition, NoWindows
from .model import DTYPE, BPNet, Head, ModelConfig, Variant, build_model

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    train_fraction: float = 0.8
    seed: int = 0
    select_best: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    """Window-level training rows. Unused inputs for a variant may be ``None``."""

    windows: np.ndarray | None  # [n, 5, 512]
    features: np.ndarray | None  # [n, 37]
    targets: np.ndarray  # [n, 2] mm Hg or [n] in {0, 1}
    groups: np.ndarray  # subject id per row

    def __len__(self):
        return len(self.targets)

    def subset(self, idx) -> "Dataset":
        return Dataset(
            None if self.windows is None else self.windows[idx],
            None if self.features is None else self.features[idx],
            self.targets[idx],
            self.groups[idx],
        )


@contextmanager
def single_thread():
    n = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(n)


def split_subjects(groups, train_fraction: float = 0.8, seed: int = 0):
    """Boolean train mask assigning every row of a subject to the same side."""
    groups = np.asarray(groups).astype(str)
    subjects = np.unique(groups)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(subjects))
    n_train = int(round(train_fraction * len(subjects)))
    train_subjects = set(subjects[perm[:n_train]])
    mask = np.array([g in train_subjects for g in groups])
    if mask.all() or not mask.any():
        raise EmptyPartition(f"{len(subjects)} subjects cannot be split at fraction {train_fraction}")
    return mask


def _inputs(model: BPNet, ds: Dataset, idx=slice(None)):
    v = model.cfg.variant
    w = torch.as_tensor(ds.windows[idx], dtype=DTYPE) if v is not Variant.BASELINE else None
    p = torch.as_tensor(ds.features[idx], dtype=DTYPE) if v is not Variant.PPG else None
    return w, p


def loss_fn(model: BPNet, out_std, targets):
    """MSE in standardized units for regression, BCE on the logit otherwise."""
    if model.cfg.head is Head.REGRESSION:
        z = (targets - model.target_mean) / model.target_scale
        return F.mse_loss(out_std, z)
    return F.binary_cross_entropy_with_logits(out_std[:, 0], targets)


def _targets(ds: Dataset, idx=slice(None)):
    return torch.as_tensor(np.asarray(ds.targets[idx], dtype=float), dtype=DTYPE)


def evaluate_loss(model: BPNet, ds: Dataset, batch_size: int = 256) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(ds), batch_size):
            idx = slice(start, start + batch_size)
            w, p = _inputs(model, ds, idx)
            out = model.forward_standardized(w, p)
            total += float(loss_fn(model, out, _targets(ds, idx))) * len(ds.targets[idx])
    return total / len(ds)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    # batch norm cannot train on a single row
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(dataset: Dataset, config: TrainConfig = TrainConfig(), model_config: ModelConfig = ModelConfig(),
          model: BPNet | None = None) -> dict:
    """Fit on the train side of a subject split; returns ``{"model", "history", "train_mask"}``.

    ``history`` has one row per epoch with train and validation loss. With
    ``select_best`` the returned weights are those of the epoch with the lowest
    validation loss.
    """
    mask = split_subjects(dataset.groups, config.train_fraction, config.seed)
    train_ds = dataset.subset(np.flatnonzero(mask))
    val_ds = dataset.subset(np.flatnonzero(~mask))
    rng = np.random.default_rng(config.seed)

    with single_thread():
        if model is None:
            model = build_model(model_config, config.seed)
        if model.cfg.head is Head.REGRESSION:
            t = np.asarray(train_ds.targets, dtype=float)
            model.target_mean.copy_(torch.as_tensor(t.mean(axis=0), dtype=DTYPE))
            sd = t.std(axis=0)
            model.target_scale.copy_(torch.as_tensor(np.where(sd > 0, sd, 1.0), dtype=DTYPE))
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                               betas=(config.beta1, config.beta2), eps=config.adam_eps)
        history = []
        best_loss, best_state = float("inf"), None
        for epoch in range(1, config.epochs + 1):
            model.train()
            total = 0.0
            for idx in _batches(len(train_ds), config.batch_size, rng):
                w, p = _inputs(model, train_ds, idx)
                loss = loss_fn(model, model.forward_standardized(w, p), _targets(train_ds, idx))
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            train_loss = total / len(train_ds)
            val_loss = evaluate_loss(model, val_ds)
            history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
            logger.info("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
            if val_loss < best_loss:
                best_loss, best_state = val_loss, copy.deepcopy(model.state_dict())
        if config.select_best and best_state is not None:
            model.load_state_dict(best_state)
        model.eval()
    return {"model": model, "history": history, "train_mask": mask}


def predict_windows(model: BPNet, windows=None, features=None, batch_size: int = 256) -> np.ndarray:
    """Per-window outputs: ``[n, 2]`` mm Hg, or ``[n]`` probabilities for the binary head."""
    model.eval()
    n = len(windows) if windows is not None else len(features)
    outs = []
    with single_thread(), torch.no_grad():
        for start in range(0, n, batch_size):
            idx = slice(start, start + batch_size)
            w = None if windows is None else torch.as_tensor(windows[idx], dtype=DTYPE)
            p = None if features is None else torch.as_tensor(features[idx], dtype=DTYPE)
            outs.append(model(w, p))
    out = torch.cat(outs).numpy() if outs else np.zeros((0, model.cfg.n_outputs))
    if model.cfg.head is Head.BINARY:
        return 1.0 / (1.0 + np.exp(-out[:, 0]))
    return out


def predict_session(model: BPNet, windows=None, features=None) -> dict:
    """Average the per-window predictions of one session."""
    n = 0 if windows is None and features is None else len(windows if windows is not None else features)
    if n == 0:
        raise NoWindows("session has no selected windows")
    pred = predict_windows(model, windows, features)
    # fsum keeps the mean independent of window order
    if model.cfg.head is Head.BINARY:
        prob = math.fsum(pred) / n
        return {"class": int(prob >= 0.5), "probability": prob}
    return {"sbp": math.fsum(pred[:, 0]) / n, "dbp": math.fsum(pred[:, 1]) / n}
