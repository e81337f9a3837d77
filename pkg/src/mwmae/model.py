"""Masked autoencoder over log-mel spectrograms.

Asymmetric design: a standard-attention encoder sees only the visible
patches; a decoder with multi-window attention reconstructs every patch.
Pre-norm transformer blocks with a GELU MLP of expansion 4 throughout.
Positional tables are fixed sinusoids added before the visibility gather.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import (
    AttentionParams,
    HeadTap,
    WindowSchedule,
    mha,
    mw_mha,
    window_schedule,
)
from .container import load_tensors, save_tensors
from .errors import ContractError, DimensionError
from .tensor import Tensor

MLP_EXPANSION = 4


@dataclass
class MaeConfig:
    """Model hyperparameters. Defaults follow the reference configuration."""

    input_t: int = 200
    input_f: int = 80
    patch_t: int = 4
    patch_f: int = 16
    enc_depth: int = 12
    enc_width: int = 768
    enc_heads: int = 12
    dec_depth: int = 4
    dec_width: int = 384
    mask_ratio: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.input_t % self.patch_t != 0:
            raise ContractError(
                f"patch_t={self.patch_t} does not divide input_t={self.input_t}"
            )
        if self.input_f % self.patch_f != 0:
            raise ContractError(
                f"patch_f={self.patch_f} does not divide input_f={self.input_f}"
            )
        if not 0.0 < self.mask_ratio < 1.0:
            raise ContractError(
                f"mask_ratio must be in (0, 1), got {self.mask_ratio}"
            )
        if self.enc_width % self.enc_heads != 0:
            raise ContractError(
                f"enc_heads={self.enc_heads} does not divide enc_width={self.enc_width}"
            )
        if self.dec_width % self.dec_heads != 0:
            raise ContractError(
                f"decoder width {self.dec_width} not divisible by the "
                f"{self.dec_heads} scheduled heads for n_p={self.n_p}"
            )

    @property
    def n_p(self) -> int:
        return (self.input_t // self.patch_t) * (self.input_f // self.patch_f)

    @property
    def patch_dim(self) -> int:
        return self.patch_t * self.patch_f

    @property
    def dec_schedule(self) -> WindowSchedule:
        return window_schedule(self.n_p)

    @property
    def dec_heads(self) -> int:
        return self.dec_schedule.n_heads

    @property
    def grid_t(self) -> int:
        return self.input_t // self.patch_t

    @property
    def grid_f(self) -> int:
        return self.input_f // self.patch_f


@dataclass(frozen=True)
class MaskSet:
    """Partition of patch indices into visible and masked, plus the draw order."""

    visible_idx: np.ndarray
    masked_idx: np.ndarray
    shuffle_perm: np.ndarray

    def __post_init__(self):
        n = len(self.visible_idx) + len(self.masked_idx)
        combined = np.concatenate([self.visible_idx, self.masked_idx])
        if not np.array_equal(np.sort(combined), np.arange(n)):
            raise ContractError("visible and masked indices must partition 0..n_p-1")

    @property
    def n_p(self) -> int:
        return len(self.visible_idx) + len(self.masked_idx)


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def random_mask(n_p: int, mask_ratio: float, seed: int) -> MaskSet:
    """Seeded uniform permutation; the first n_p - n_masked entries stay visible."""
    if not 0.0 < mask_ratio < 1.0:
        raise ContractError(f"mask_ratio must be in (0, 1), got {mask_ratio}")
    n_masked = round_half_up(mask_ratio * n_p)
    if n_masked < 1 or n_masked > n_p - 1:
        raise ContractError(
            f"mask_ratio={mask_ratio} leaves {n_masked} masked of {n_p} patches; "
            "need at least one visible and one masked"
        )
    perm = np.random.default_rng(seed).permutation(n_p)
    n_vis = n_p - n_masked
    return MaskSet(
        visible_idx=np.sort(perm[:n_vis]),
        masked_idx=np.sort(perm[n_vis:]),
        shuffle_perm=perm,
    )


def patchify(spec: np.ndarray, patch_t: int, patch_f: int) -> np.ndarray:
    """Cut a T x F spectrogram into flattened non-overlapping patches.

    Patch order is time-major, frequency-minor; each patch is flattened
    row-major (time rows, frequency columns).
    """
    t, f = spec.shape
    if t % patch_t != 0 or f % patch_f != 0:
        raise DimensionError(
            f"patch size ({patch_t}x{patch_f}) does not divide input ({t}x{f})"
        )
    gt, gf = t // patch_t, f // patch_f
    tiles = spec.reshape(gt, patch_t, gf, patch_f).transpose(0, 2, 1, 3)
    return tiles.reshape(gt * gf, patch_t * patch_f)


def unpatchify(patches: np.ndarray, patch_t: int, patch_f: int, input_t: int, input_f: int) -> np.ndarray:
    gt, gf = input_t // patch_t, input_f // patch_f
    tiles = patches.reshape(gt, gf, patch_t, patch_f).transpose(0, 2, 1, 3)
    return tiles.reshape(input_t, input_f)


def sincos_pos_embed(n_p: int, width: int) -> np.ndarray:
    """Fixed 1-D sin/cos position table, shape (n_p, width)."""
    if width % 2 != 0:
        raise ContractError(f"positional width must be even, got {width}")
    pos = np.arange(n_p)[:, None]
    dim = np.arange(width // 2)[None, :]
    angle = pos / (10000.0 ** (2.0 * dim / width))
    table = np.zeros((n_p, width))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


@dataclass
class LayerNormParams:
    g: Tensor
    b: Tensor

    @staticmethod
    def init(width: int) -> "LayerNormParams":
        return LayerNormParams(
            g=Tensor(np.ones(width), requires_grad=True),
            b=Tensor(np.zeros(width), requires_grad=True),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.g": self.g, f"{prefix}.b": self.b}


@dataclass
class BlockParams:
    """One pre-norm transformer block: LN -> attention -> LN -> MLP."""

    ln1: LayerNormParams
    attn: AttentionParams
    ln2: LayerNormParams
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @staticmethod
    def init(width: int, n_heads: int, rng: np.random.Generator) -> "BlockParams":
        hidden = MLP_EXPANSION * width

        def glorot(n_in, n_out):
            bound = np.sqrt(6.0 / (n_in + n_out))
            return Tensor(rng.uniform(-bound, bound, (n_in, n_out)), requires_grad=True)

        return BlockParams(
            ln1=LayerNormParams.init(width),
            attn=AttentionParams.init(width, n_heads, rng),
            ln2=LayerNormParams.init(width),
            mlp_w1=glorot(width, hidden),
            mlp_b1=Tensor(np.zeros(hidden), requires_grad=True),
            mlp_w2=glorot(hidden, width),
            mlp_b2=Tensor(np.zeros(width), requires_grad=True),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        out.update(self.ln1.named(f"{prefix}.ln1"))
        out.update(self.attn.named(f"{prefix}.attn"))
        out.update(self.ln2.named(f"{prefix}.ln2"))
        out[f"{prefix}.mlp_w1"] = self.mlp_w1
        out[f"{prefix}.mlp_b1"] = self.mlp_b1
        out[f"{prefix}.mlp_w2"] = self.mlp_w2
        out[f"{prefix}.mlp_b2"] = self.mlp_b2
        return out


def _block_forward(
    x: Tensor,
    p: BlockParams,
    schedule: WindowSchedule | None,
    tap: HeadTap | None = None,
) -> Tensor:
    h = T.layer_norm(x, p.ln1.g, p.ln1.b)
    if schedule is None:
        h = mha(h, p.attn, tap=tap)
    else:
        h = mw_mha(h, p.attn, schedule, tap=tap)
    x = x + h
    h = T.layer_norm(x, p.ln2.g, p.ln2.b)
    h = T.gelu(T.matmul(h, p.mlp_w1) + p.mlp_b1)
    h = T.matmul(h, p.mlp_w2) + p.mlp_b2
    return x + h


@dataclass
class MaeParams:
    """All trainable tensors plus the fixed positional tables."""

    embed_w: Tensor
    embed_b: Tensor
    enc_blocks: list[BlockParams]
    enc_norm: LayerNormParams
    latent_w: Tensor
    latent_b: Tensor
    mask_token: Tensor
    dec_blocks: list[BlockParams]
    dec_norm: LayerNormParams
    head_w: Tensor
    head_b: Tensor
    enc_pos: np.ndarray = field(repr=False, default=None)
    dec_pos: np.ndarray = field(repr=False, default=None)

    @staticmethod
    def init(cfg: MaeConfig) -> "MaeParams":
        rng = np.random.default_rng(cfg.seed)

        def glorot(n_in, n_out):
            bound = np.sqrt(6.0 / (n_in + n_out))
            return Tensor(rng.uniform(-bound, bound, (n_in, n_out)), requires_grad=True)

        return MaeParams(
            embed_w=glorot(cfg.patch_dim, cfg.enc_width),
            embed_b=Tensor(np.zeros(cfg.enc_width), requires_grad=True),
            enc_blocks=[
                BlockParams.init(cfg.enc_width, cfg.enc_heads, rng)
                for _ in range(cfg.enc_depth)
            ],
            enc_norm=LayerNormParams.init(cfg.enc_width),
            latent_w=glorot(cfg.enc_width, cfg.dec_width),
            latent_b=Tensor(np.zeros(cfg.dec_width), requires_grad=True),
            mask_token=Tensor(
                rng.normal(0.0, 0.02, cfg.dec_width), requires_grad=True
            ),
            dec_blocks=[
                BlockParams.init(cfg.dec_width, cfg.dec_heads, rng)
                for _ in range(cfg.dec_depth)
            ],
            dec_norm=LayerNormParams.init(cfg.dec_width),
            head_w=glorot(cfg.dec_width, cfg.patch_dim),
            head_b=Tensor(np.zeros(cfg.patch_dim), requires_grad=True),
            enc_pos=sincos_pos_embed(cfg.n_p, cfg.enc_width),
            dec_pos=sincos_pos_embed(cfg.n_p, cfg.dec_width),
        )

    def named(self) -> dict[str, Tensor]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for i, blk in enumerate(self.enc_blocks):
            out.update(blk.named(f"enc.block{i}"))
        out.update(self.enc_norm.named("enc.norm"))
        out["latent.w"] = self.latent_w
        out["latent.b"] = self.latent_b
        out["mask_token"] = self.mask_token
        for i, blk in enumerate(self.dec_blocks):
            out.update(blk.named(f"dec.block{i}"))
        out.update(self.dec_norm.named("dec.norm"))
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def no_decay_names(self) -> set[str]:
        """Layer-norm gains/biases and the mask token are exempt from weight decay."""
        names = {"mask_token"}
        for name in self.named():
            if ".ln1." in name or ".ln2." in name or ".norm." in name:
                names.add(name)
        return names


@dataclass
class MaeOutput:
    pred_patches: np.ndarray
    loss: Tensor
    latent: Tensor


def encode(
    patches: np.ndarray,
    mask: MaskSet,
    cfg: MaeConfig,
    params: MaeParams,
    tap: list[HeadTap] | None = None,
) -> Tensor:
    """Embed all patches, add positions, keep visible rows, run encoder blocks."""
    if patches.shape != (cfg.n_p, cfg.patch_dim):
        raise DimensionError(
            f"expected patches {(cfg.n_p, cfg.patch_dim)}, got {patches.shape}"
        )
    x = T.matmul(Tensor(patches), params.embed_w) + params.embed_b
    x = x + Tensor(params.enc_pos)
    x = T.take_rows(x, mask.visible_idx)
    for i, blk in enumerate(params.enc_blocks):
        x = _block_forward(x, blk, None, tap=tap[i] if tap is not None else None)
    return T.layer_norm(x, params.enc_norm.g, params.enc_norm.b)


def encode_all(
    patches: np.ndarray,
    cfg: MaeConfig,
    params: MaeParams,
    tap: list[HeadTap] | None = None,
) -> Tensor:
    """Encoder over every patch (inference path: no masking)."""
    full = MaskSet(
        visible_idx=np.arange(cfg.n_p),
        masked_idx=np.arange(0),
        shuffle_perm=np.arange(cfg.n_p),
    )
    return encode(patches, full, cfg, params, tap=tap)


def decode(
    latent: Tensor,
    mask: MaskSet,
    cfg: MaeConfig,
    params: MaeParams,
    tap: list[HeadTap] | None = None,
) -> Tensor:
    """Fill masked slots with the mask token, restore order, run decoder blocks."""
    n_vis = len(mask.visible_idx)
    if latent.shape[0] != n_vis:
        raise ContractError(
            f"latent has {latent.shape[0]} rows but mask marks {n_vis} visible"
        )
    if mask.n_p != cfg.n_p:
        raise ContractError(f"mask covers {mask.n_p} patches, config has {cfg.n_p}")
    y = T.matmul(latent, params.latent_w) + params.latent_b
    n_masked = len(mask.masked_idx)
    mask_rows = Tensor(np.zeros((n_masked, cfg.dec_width))) + params.mask_token
    shuffled = T.concat([y, mask_rows], axis=0)
    restore = np.argsort(np.concatenate([mask.visible_idx, mask.masked_idx]))
    x = T.take_rows(shuffled, restore)
    x = x + Tensor(params.dec_pos)
    schedule = cfg.dec_schedule
    for i, blk in enumerate(params.dec_blocks):
        x = _block_forward(x, blk, schedule, tap=tap[i] if tap is not None else None)
    x = T.layer_norm(x, params.dec_norm.g, params.dec_norm.b)
    return T.matmul(x, params.head_w) + params.head_b


def masked_mse(pred: Tensor, target: np.ndarray, mask: MaskSet) -> Tensor:
    """Mean squared error over masked patches only."""
    if pred.shape != target.shape:
        raise DimensionError(
            f"pred shape {pred.shape} != target shape {target.shape}"
        )
    if len(mask.masked_idx) == 0:
        raise ContractError("masked_mse: empty masked set")
    diff = T.take_rows(pred, mask.masked_idx) - Tensor(target[mask.masked_idx])
    return (diff * diff).mean()


def mae_forward(
    spec: np.ndarray, cfg: MaeConfig, params: MaeParams, seed: int
) -> MaeOutput:
    """Full pipeline: patchify, mask, encode visible, decode all, masked MSE."""
    patches = patchify(spec, cfg.patch_t, cfg.patch_f)
    mask = random_mask(cfg.n_p, cfg.mask_ratio, seed)
    latent = encode(patches, mask, cfg, params)
    pred = decode(latent, mask, cfg, params)
    loss = masked_mse(pred, patches, mask)
    return MaeOutput(pred_patches=pred.data.copy(), loss=loss, latent=latent)


# -- checkpointing --


def save_checkpoint(path: str | Path, cfg: MaeConfig, params: MaeParams) -> None:
    """Container with every named tensor plus a JSON config sidecar."""
    path = Path(path)
    save_tensors(path, {k: v.data for k, v in params.named().items()})
    sidecar = {
        k: v for k, v in asdict(cfg).items()
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def load_checkpoint(path: str | Path) -> tuple[MaeConfig, MaeParams]:
    """Load and verify: every expected tensor must be present with its shape."""
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    cfg = MaeConfig(**sidecar)
    params = MaeParams.init(cfg)
    stored = load_tensors(path)
    expected = params.named()
    missing = sorted(set(expected) - set(stored))
    extra = sorted(set(stored) - set(expected))
    if missing or extra:
        raise ContractError(
            f"checkpoint mismatch: missing {missing[:5]}, unexpected {extra[:5]}"
        )
    for name, t in expected.items():
        if stored[name].shape != t.data.shape:
            raise ContractError(
                f"checkpoint tensor {name!r}: shape {stored[name].shape} "
                f"!= expected {t.data.shape}"
            )
        t.data = stored[name]
    return cfg, params
