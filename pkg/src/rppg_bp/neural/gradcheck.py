"""Central finite-difference check of the backpropagated gradients."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .model import DTYPE, BPNet
from .training import loss_fn, single_thread

# gradients smaller than this are compared on an absolute scale
GRAD_FLOOR = 1e-7
# replacement draws allowed per requested probe when probes straddle a kink
MAX_DRAWS_PER_PROBE = 20


def _loss(model, window, profile, targets):
    return loss_fn(model, model.forward_standardized(window, profile), targets)


class _ReluPattern:
    """Records which units every ReLU lets through during a forward pass."""

    def __init__(self, model):
        self.masks = []
        self._handles = [m.register_forward_hook(self._hook) for m in model.modules() if isinstance(m, nn.ReLU)]

    def _hook(self, module, inputs, output):
        self.masks.append(inputs[0] > 0)

    def take(self):
        masks, self.masks = self.masks, []
        return masks

    def close(self):
        for h in self._handles:
            h.remove()


def _same_pattern(a, b) -> bool:
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def grad_check(model: BPNet, window=None, profile=None, targets=None, fraction: float = 0.01,
               eps: float = 1e-4, seed: int = 0, train_mode: bool = True) -> dict:
    """Compare autograd against central differences on a random parameter subsample.

    Each parameter tensor contributes ``max(1, fraction * size)`` probes.
    Central differences are only meaningful where the loss is smooth on
    ``[p - eps, p + eps]``; a probe whose perturbation flips any ReLU unit is
    discarded and another entry of the same tensor drawn in its place.
    Batch-norm buffers are restored after every evaluation so running-stat
    updates never leak into the differencing.

    Returns the worst relative error overall and per tensor (``None`` if a
    tensor had no smooth probe), and the number of discarded probes.
    """
    rng = np.random.default_rng(seed)
    if targets is None:
        batch = len(window) if window is not None else len(profile)
        targets = torch.as_tensor(rng.normal(size=(batch, model.cfg.n_outputs)), dtype=DTYPE)
        if model.cfg.n_outputs == 1:
            targets = (targets[:, 0] > 0).to(DTYPE)
    buffers = {k: v.clone() for k, v in model.named_buffers()}

    def restore():
        with torch.no_grad():
            for k, v in model.named_buffers():
                v.copy_(buffers[k])

    pattern = _ReluPattern(model)
    try:
        with single_thread():
            model.train(train_mode)
            model.zero_grad()
            _loss(model, window, profile, targets).backward()
            base = pattern.take()
            restore()

            per_tensor = {}
            discarded = 0
            worst = 0.0
            for name, param in model.named_parameters():
                flat = param.data.view(-1)
                grad = param.grad.reshape(-1).clone()
                want = max(1, int(round(fraction * flat.numel())))
                order = rng.permutation(flat.numel())[: want * MAX_DRAWS_PER_PROBE]
                errs = []
                for i in order:
                    if len(errs) == want:
                        break
                    orig = float(flat[i])
                    with torch.no_grad():
                        flat[i] = orig + eps
                        up = float(_loss(model, window, profile, targets))
                        smooth = _same_pattern(pattern.take(), base)
                        restore()
                        flat[i] = orig - eps
                        down = float(_loss(model, window, profile, targets))
                        smooth = _same_pattern(pattern.take(), base) and smooth
                        restore()
                        flat[i] = orig
                    if not smooth:
                        discarded += 1
                        continue
                    numeric = (up - down) / (2 * eps)
                    analytic = float(grad[i])
                    errs.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_FLOOR))
                per_tensor[name] = max(errs) if errs else None
                if errs:
                    worst = max(worst, per_tensor[name])
    finally:
        pattern.close()
        model.zero_grad()
    return {"max_relative_error": worst, "per_tensor": per_tensor, "discarded_probes": discarded}


def reduced_config(**overrides):
    """Small Hybrid configuration for tractable gradient checks."""
    from .model import ModelConfig

    base = dict(conv_channels=(8, 8, 8, 16, 16), vit_depth=1, vit_ff_dim=32, ppg_embed_dim=16,
                baseline_hidden=(16,), baseline_out=16, head_hidden=16, input_length=64)
    base.update(overrides)
    return ModelConfig(**base)
