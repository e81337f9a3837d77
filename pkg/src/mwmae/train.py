"""AdamW training loop with linear warmup and cosine decay.

The learning rate actually applied scales with batch size
(base_lr * batch/256), ramps linearly from zero over the warmup epochs,
then follows a cosine down to min_lr. Weight decay is decoupled and skips
layer-norm parameters and the mask token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, TrainingDivergedError
from .model import MaeConfig, MaeParams, mae_forward, save_checkpoint
from .tensor import Tensor


@dataclass
class TrainConfig:
    base_lr: float = 1.5e-5
    batch_size: int = 1024
    warmup_epochs: int = 10
    total_epochs: int = 100
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    min_lr: float = 0.0
    seed: int = 0
    ckpt_every_epochs: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.warmup_epochs < self.total_epochs:
            raise ContractError(
                f"warmup_epochs={self.warmup_epochs} must be < "
                f"total_epochs={self.total_epochs}"
            )


def effective_lr(base_lr: float, batch_size: int) -> float:
    """Scale the base rate linearly with batch size, anchored at 256."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    return base_lr * batch_size / 256.0


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Learning rate at a global step: linear ramp, then cosine to min_lr."""
    if step < 0:
        raise ContractError(f"step must be >= 0, got {step}")
    eff = effective_lr(cfg.base_lr, cfg.batch_size)
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    total_steps = cfg.total_epochs * steps_per_epoch
    if step < warmup_steps:
        return eff * step / warmup_steps
    if step >= total_steps:
        return cfg.min_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return cfg.min_lr + (eff - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimizerState:
    """First/second moment buffers keyed like the parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def init(params: dict[str, Tensor]) -> "OptimizerState":
        return OptimizerState(
            m={k: np.zeros_like(t.data) for k, t in params.items()},
            v={k: np.zeros_like(t.data) for k, t in params.items()},
        )


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    cfg: TrainConfig,
    no_decay: frozenset[str] | set[str] = frozenset(),
    eps: float = 1e-8,
) -> None:
    """One AdamW update in place: decoupled decay first, then the Adam step."""
    b1, b2 = cfg.betas
    state.step += 1
    t = state.step
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for {name!r}")
        if name not in no_decay and cfg.weight_decay != 0.0:
            p.data *= 1.0 - lr * cfg.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)


class SpectrogramDataset:
    """Fixed, already-standardized spectrograms (list of T x F arrays)."""

    def __init__(self, specs):
        self.specs = [np.asarray(s, dtype=np.float64) for s in specs]
        if not self.specs:
            raise ContractError("dataset is empty")

    def __len__(self):
        return len(self.specs)

    def spec(self, index: int, epoch: int) -> np.ndarray:
        return self.specs[index]


class WavSpecDataset:
    """WAV files turned into standardized log-mel crops.

    Full spectrograms are computed once and cached; the crop window is
    re-drawn every epoch from a seed mixing (seed, epoch, index), so runs
    stay reproducible while epochs see different segments.
    """

    def __init__(self, wav_dir: str | Path, input_t: int, seed: int = 0):
        from .audio import crop_or_pad, load_wav, logmel, standardize

        self._crop = crop_or_pad
        self.input_t = input_t
        self.seed = seed
        paths = sorted(Path(wav_dir).rglob("*.wav"))
        if not paths:
            raise ContractError(f"no .wav files under {wav_dir}")
        self.paths = paths
        self.full_specs = [standardize(logmel(load_wav(p))) for p in paths]

    def __len__(self):
        return len(self.paths)

    def spec(self, index: int, epoch: int) -> np.ndarray:
        crop_seed = int(
            np.random.SeedSequence([self.seed, epoch, index]).generate_state(1)[0]
        )
        return self._crop(self.full_specs[index], self.input_t, crop_seed)


def _mask_seed(train_seed: int, step: int, position: int) -> int:
    return int(np.random.SeedSequence([train_seed, step, position]).generate_state(1)[0])


@dataclass
class TrainResult:
    params: MaeParams
    losses: np.ndarray
    lrs: np.ndarray


def train(
    dataset,
    mae_cfg: MaeConfig,
    train_cfg: TrainConfig,
    out_ckpt: str | Path | None = None,
    loss_csv: str | Path | None = None,
    max_steps: int | None = None,
    params: MaeParams | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Run the optimization loop; per-step losses go to `loss_csv` if given.

    `dataset` needs __len__ and spec(index, epoch) -> T x F array (a plain
    list-like of arrays works via SpectrogramDataset).
    """
    if not hasattr(dataset, "spec"):
        dataset = SpectrogramDataset(dataset)
    n = len(dataset)
    if n == 0:
        raise ContractError("dataset is empty")
    batch = min(train_cfg.batch_size, n)
    steps_per_epoch = max(1, n // batch)
    total_steps = train_cfg.total_epochs * steps_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    if params is None:
        params = MaeParams.init(mae_cfg)
    named = params.named()
    no_decay = params.no_decay_names()
    state = OptimizerState.init(named)
    order_rng = np.random.default_rng(train_cfg.seed)

    losses = np.zeros(total_steps)
    lrs = np.zeros(total_steps)
    csv_rows = ["step,epoch,lr,loss"]

    step = 0
    done = False
    for epoch in range(train_cfg.total_epochs):
        order = order_rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * batch:(b + 1) * batch]
            for t in named.values():
                t.zero_grad()
            loss_sum = 0.0
            for j, i in enumerate(idx):
                spec = dataset.spec(int(i), epoch)
                out = mae_forward(spec, mae_cfg, params,
                                  seed=_mask_seed(train_cfg.seed, step, j))
                loss_val = out.loss.item()
                if not math.isfinite(loss_val):
                    _flush_csv(loss_csv, csv_rows)
                    raise TrainingDivergedError(
                        f"non-finite loss at step {step}; last checkpoint retained"
                    )
                out.loss.backward()
                loss_sum += loss_val
            grads = {
                k: (t.grad / len(idx)) if t.grad is not None else np.zeros_like(t.data)
                for k, t in named.items()
            }
            lr = lr_at(step, steps_per_epoch, train_cfg)
            adamw_step(named, grads, state, lr, train_cfg, no_decay=no_decay)

            mean_loss = loss_sum / len(idx)
            losses[step] = mean_loss
            lrs[step] = lr
            csv_rows.append(f"{step},{epoch},{lr!r},{mean_loss!r}")
            if log_every and step % log_every == 0:
                print(f"step {step:6d} epoch {epoch:4d} lr {lr:.3e} loss {mean_loss:.6f}")
            step += 1
            if step >= total_steps:
                done = True
                break
        if out_ckpt is not None and train_cfg.ckpt_every_epochs:
            if (epoch + 1) % train_cfg.ckpt_every_epochs == 0:
                save_checkpoint(out_ckpt, mae_cfg, params)
        if done:
            break

    if out_ckpt is not None:
        save_checkpoint(out_ckpt, mae_cfg, params)
    _flush_csv(loss_csv, csv_rows)
    return TrainResult(params=params, losses=losses, lrs=lrs)


def _flush_csv(loss_csv, rows) -> None:
    if loss_csv is not None:
        Path(loss_csv).write_text("\n".join(rows) + "\n")
