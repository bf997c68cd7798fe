"""Two-branch blood-pressure network.

Waveform branch: five padded beats enter as five channels of one sequence,
pass a 1D CNN (conv, batch norm, ReLU; average pooling after the first four
layers) and a small pre-norm transformer over the resulting tokens.
Demographic branch: a two-layer MLP over the 37-slot profile vector.
The variant decides which branches feed the output head.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import torch
from torch import nn

from ..errors import NonFiniteActivation, ShapeMismatch, VariantInputMismatch
from ..features import N_FEATURES

DTYPE = torch.float64


class Variant(str, Enum):
    BASELINE = "Baseline"
    PPG = "PPG"
    HYBRID = "Hybrid"


class Head(str, Enum):
    REGRESSION = "Regression2"
    BINARY = "BinaryLogit"


@dataclass
class ModelConfig:
    conv_kernels: tuple = (7, 5, 3, 3, 3)
    conv_channels: tuple = (16, 32, 64, 128, 128)
    pool_after_layers: tuple = (1, 2, 3, 4)
    in_channels: int = 5
    input_length: int = 512
    vit_heads: int = 8
    vit_ff_dim: int = 512
    vit_depth: int = 2
    ppg_embed_dim: int = 128
    n_features: int = N_FEATURES
    baseline_hidden: tuple = (64,)
    baseline_out: int = 64
    head_hidden: int = 64
    head: Head = Head.REGRESSION
    variant: Variant = Variant.HYBRID
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.head = Head(self.head)
        self.variant = Variant(self.variant)
        for name in ("conv_kernels", "conv_channels", "pool_after_layers", "baseline_hidden"):
            setattr(self, name, tuple(getattr(self, name)))
        if len(self.conv_kernels) != len(self.conv_channels):
            raise ValueError("conv_kernels and conv_channels must have equal length")
        if self.conv_channels[-1] % self.vit_heads:
            raise ValueError("token dimension must be divisible by vit_heads")

    @property
    def n_tokens(self) -> int:
        return self.input_length // 2 ** len(self.pool_after_layers)

    @property
    def token_dim(self) -> int:
        return self.conv_channels[-1]

    @property
    def fusion_dim(self) -> int:
        if self.variant is Variant.HYBRID:
            return self.ppg_embed_dim + self.baseline_out
        if self.variant is Variant.PPG:
            return self.ppg_embed_dim
        return self.baseline_out

    @property
    def n_outputs(self) -> int:
        return 2 if self.head is Head.REGRESSION else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head"] = self.head.value
        d["variant"] = self.variant.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _check_finite(t: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise NonFiniteActivation(f"non-finite activation in {where}")
    return t


class ConvBranch(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers = []
        c_in = cfg.in_channels
        for i, (k, c) in enumerate(zip(cfg.conv_kernels, cfg.conv_channels), start=1):
            layers += [
                nn.Conv1d(c_in, c, k, padding=k // 2, dtype=DTYPE),
                nn.BatchNorm1d(c, eps=cfg.bn_eps, momentum=cfg.bn_momentum, dtype=DTYPE),
                nn.ReLU(),
            ]
            if i in cfg.pool_after_layers:
                layers.append(nn.AvgPool1d(2))
            c_in = c
        self.layers = nn.Sequential(*layers)
        self.in_channels = cfg.in_channels
        self.input_length = cfg.input_length

    def forward(self, x):
        if x.dim() != 3 or x.shape[1:] != (self.in_channels, self.input_length):
            raise ShapeMismatch(f"expected [batch, {self.in_channels}, {self.input_length}], got {list(x.shape)}")
        return _check_finite(self.layers(x), "cnn branch")


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim, dtype=DTYPE)
        self.proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.last_weights = None

    def forward(self, x):
        b, n, d = x.shape
        hd = d // self.heads
        q, k, v = self.qkv(x).view(b, n, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-2, -1) / math.sqrt(hd)
        weights = torch.softmax(scores, dim=-1)
        self.last_weights = weights.detach()
        out = (weights @ v).transpose(1, 2).reshape(b, n, d)
        return self.proj(out)


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, dtype=DTYPE)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, dtype=DTYPE)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim, dtype=DTYPE), nn.ReLU(), nn.Linear(ff_dim, dim, dtype=DTYPE))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class ViTEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.token_dim
        self.n_tokens = cfg.n_tokens
        self.pos_embed = nn.Parameter(torch.randn(cfg.n_tokens, d, dtype=DTYPE) * 0.02)
        self.blocks = nn.ModuleList(EncoderBlock(d, cfg.vit_heads, cfg.vit_ff_dim) for _ in range(cfg.vit_depth))
        self.norm = nn.LayerNorm(d, dtype=DTYPE)
        self.readout = nn.Sequential(nn.Linear(d, cfg.ppg_embed_dim, dtype=DTYPE), nn.ReLU())

    def forward(self, feat, pos_embed=None):
        """``feat`` is the CNN map ``[batch, channels, tokens]``."""
        if feat.dim() != 3 or feat.shape[1:] != (self.pos_embed.shape[1], self.n_tokens):
            raise ShapeMismatch(f"expected [batch, {self.pos_embed.shape[1]}, {self.n_tokens}], got {list(feat.shape)}")
        pos = self.pos_embed if pos_embed is None else pos_embed
        x = feat.transpose(1, 2) + pos
        for block in self.blocks:
            x = block(x)
        x = self.norm(x).mean(dim=1)
        return _check_finite(self.readout(x), "vit encoder")


class BaselineMLP(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dims = (cfg.n_features, *cfg.baseline_hidden, cfg.baseline_out)
        layers = []
        for a, b in zip(dims[:-1], dims[1:]):
            layers += [nn.Linear(a, b, dtype=DTYPE), nn.ReLU()]
        self.layers = nn.Sequential(*layers[:-1])
        self.n_features = cfg.n_features

    def forward(self, v):
        if v.dim() != 2 or v.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected [batch, {self.n_features}], got {list(v.shape)}")
        return _check_finite(self.layers(v), "baseline branch")


class BPNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        uses_ppg = cfg.variant in (Variant.PPG, Variant.HYBRID)
        uses_profile = cfg.variant in (Variant.BASELINE, Variant.HYBRID)
        self.cnn = ConvBranch(cfg) if uses_ppg else None
        self.vit = ViTEncoder(cfg) if uses_ppg else None
        self.baseline = BaselineMLP(cfg) if uses_profile else None
        if cfg.variant is Variant.BASELINE:
            self.head = nn.Linear(cfg.fusion_dim, cfg.n_outputs, dtype=DTYPE)
        else:
            self.head = nn.Sequential(
                nn.Linear(cfg.fusion_dim, cfg.head_hidden, dtype=DTYPE),
                nn.ReLU(),
                nn.Linear(cfg.head_hidden, cfg.n_outputs, dtype=DTYPE),
            )
        # regression outputs are learned in standardized units and mapped to mm Hg
        self.register_buffer("target_mean", torch.zeros(cfg.n_outputs, dtype=DTYPE))
        self.register_buffer("target_scale", torch.ones(cfg.n_outputs, dtype=DTYPE))

    def embed(self, window=None, profile=None):
        """Fused latent vector fed to the output head."""
        v = self.cfg.variant
        if (window is None) == (v in (Variant.PPG, Variant.HYBRID)):
            raise VariantInputMismatch(f"{v.value} variant {'needs' if window is None else 'takes no'} waveform input")
        if (profile is None) == (v in (Variant.BASELINE, Variant.HYBRID)):
            raise VariantInputMismatch(f"{v.value} variant {'needs' if profile is None else 'takes no'} profile input")
        parts = []
        if window is not None:
            parts.append(self.vit(self.cnn(window)))
        if profile is not None:
            parts.append(self.baseline(profile))
        return torch.cat(parts, dim=1) if len(parts) > 1 else parts[0]

    def forward_standardized(self, window=None, profile=None):
        return _check_finite(self.head(self.embed(window, profile)), "output head")

    def forward(self, window=None, profile=None):
        """SBP/DBP in mm Hg for regression; a pre-sigmoid logit for the binary head."""
        out = self.forward_standardized(window, profile)
        if self.cfg.head is Head.REGRESSION:
            return out * self.target_scale + self.target_mean
        return out


def build_model(cfg: ModelConfig, seed: int = 0) -> BPNet:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = BPNet(cfg)
    finally:
        torch.random.set_rng_state(gen_state)
    return model
