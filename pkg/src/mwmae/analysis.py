"""Attention-head diagnostics: entropy, spatial reach, and feature similarity.

Entropy and mean attention distance summarize where a head puts its
probability mass; projection-weighted CCA compares what two heads compute.
Windowed heads are analyzed through their block-diagonal full-length
attention matrices, so every metric shares one n x n convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import HeadTap, block_diagonal_probs
from .errors import ContractError, DegenerateInputError
from .model import MaeConfig, MaeParams, encode, encode_all, patchify, random_mask
from .tensor import no_grad


@dataclass
class AttnRecord:
    """Attention probabilities for one head: one n x n matrix per example."""

    layer: int
    head: int
    probs: list[np.ndarray]

    def __post_init__(self):
        for p in self.probs:
            if np.any(p < -1e-12):
                raise ContractError("attention probabilities must be non-negative")
            rows = p.sum(axis=-1)
            if np.any(np.abs(rows - 1.0) > 1e-6):
                raise ContractError("attention rows must sum to 1")


@dataclass(frozen=True)
class PatchGrid:
    """Integer (time, frequency) coordinates for flattened patch indices."""

    grid_t: int
    grid_f: int

    @property
    def n_p(self) -> int:
        return self.grid_t * self.grid_f

    def positions(self) -> np.ndarray:
        idx = np.arange(self.n_p)
        return np.stack([idx // self.grid_f, idx % self.grid_f], axis=1).astype(np.float64)


def attention_entropy(rec: AttnRecord) -> float:
    """Mean Shannon entropy of attention rows (nats), averaged over examples.

    Higher means more global attention; 0 * ln 0 counts as 0.
    """
    per_example = []
    for p in rec.probs:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, -p * np.log(p), 0.0)
        per_example.append(terms.sum(axis=-1).mean())
    return float(np.mean(per_example))


def mean_attention_distance(rec: AttnRecord, grid: PatchGrid) -> float:
    """Attention-weighted Euclidean distance on the patch grid, in patch units."""
    pos = grid.positions()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    per_example = []
    for p in rec.probs:
        if p.shape[0] != grid.n_p:
            raise ContractError(
                f"attention is {p.shape[0]} tokens but grid has {grid.n_p} patches"
            )
        per_example.append((p * dist).sum(axis=-1).mean())
    return float(np.mean(per_example))


def pwcca(x: np.ndarray, y: np.ndarray, rank_rtol: float = 1e-10) -> float:
    """Projection-weighted canonical correlation between two feature matrices.

    Rows are datapoints, columns are feature dims. Columns are centered, each
    matrix is whitened through its own SVD (rank-truncated at a relative
    singular-value threshold), canonical correlations come from the SVD of
    the whitened cross-covariance, and each correlation is weighted by how
    much of X projects onto its canonical direction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] <= max(x.shape[1], y.shape[1]):
        raise ContractError(
            f"need more rows than columns: {x.shape} vs {y.shape}"
        )
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)

    ux, sx, _ = np.linalg.svd(xc, full_matrices=False)
    uy, sy, _ = np.linalg.svd(yc, full_matrices=False)
    rx = int(np.sum(sx > rank_rtol * sx[0])) if sx.size and sx[0] > 0 else 0
    ry = int(np.sum(sy > rank_rtol * sy[0])) if sy.size and sy[0] > 0 else 0
    if rx == 0 or ry == 0:
        raise DegenerateInputError("rank-0 input after centering")
    ux, uy = ux[:, :rx], uy[:, :ry]

    a, rho, _ = np.linalg.svd(ux.T @ uy)
    k = min(rx, ry)
    rho = np.clip(rho[:k], 0.0, 1.0)

    # Canonical directions in X-space; weight each by |projection of X| onto it.
    h = ux @ a[:, :k]
    weights = np.abs(h.T @ xc).sum(axis=1)
    total = weights.sum()
    if total <= 0:
        raise DegenerateInputError("zero projection weights")
    weights = weights / total
    return float(np.sum(weights * rho))


def head_features(taps: list[list[HeadTap]], layer: int, head: int) -> np.ndarray:
    """Stack one head's pre-projection outputs over tokens and examples.

    `taps` is indexed [example][layer]; each HeadTap holds per-head outputs
    of shape (n, d_k). Result is (n_examples * n, d_k).
    """
    if not taps:
        raise ContractError("no examples collected")
    rows = [ex[layer].head_out[head] for ex in taps]
    return np.concatenate(rows, axis=0)


@dataclass
class StackRecords:
    """Collected attention and features for every head of one stack."""

    n_layers: int
    n_heads: int
    taps: list[list[HeadTap]]  # [example][layer]
    n_tokens: int

    def record(self, layer: int, head: int) -> AttnRecord:
        probs = [
            block_diagonal_probs(ex[layer].probs[head], self.n_tokens)
            for ex in self.taps
        ]
        return AttnRecord(layer=layer, head=head, probs=probs)

    def features(self, layer: int, head: int) -> np.ndarray:
        return head_features(self.taps, layer, head)

    def labels(self) -> list[str]:
        return [
            f"L{layer}.H{head}"
            for layer in range(self.n_layers)
            for head in range(self.n_heads)
        ]


def collect_stack(
    cfg: MaeConfig,
    params: MaeParams,
    specs: list[np.ndarray],
    stack: str = "encoder",
) -> StackRecords:
    """Run the model over specs and capture per-head attention and outputs.

    The encoder is analyzed with full visibility. The decoder needs a mask
    to build its input; a fixed per-example seed keeps results deterministic
    for a given checkpoint and dataset.
    """
    if not specs:
        raise ContractError("empty dataset")
    if stack not in ("encoder", "decoder"):
        raise ContractError(f"stack must be 'encoder' or 'decoder', got {stack!r}")
    taps: list[list[HeadTap]] = []
    with no_grad():
        for i, spec in enumerate(specs):
            patches = patchify(spec, cfg.patch_t, cfg.patch_f)
            if stack == "encoder":
                ex_taps = [HeadTap() for _ in range(cfg.enc_depth)]
                encode_all(patches, cfg, params, tap=ex_taps)
            else:
                from .model import decode

                mask = random_mask(cfg.n_p, cfg.mask_ratio, seed=i)
                latent = encode(patches, mask, cfg, params)
                ex_taps = [HeadTap() for _ in range(cfg.dec_depth)]
                decode(latent, mask, cfg, params, tap=ex_taps)
            taps.append(ex_taps)
    if stack == "encoder":
        return StackRecords(cfg.enc_depth, cfg.enc_heads, taps, cfg.n_p)
    return StackRecords(cfg.dec_depth, cfg.dec_heads, taps, cfg.n_p)


def entropy_table(records: StackRecords) -> list[tuple[int, int, float]]:
    return [
        (layer, head, attention_entropy(records.record(layer, head)))
        for layer in range(records.n_layers)
        for head in range(records.n_heads)
    ]


def distance_table(records: StackRecords, grid: PatchGrid) -> list[tuple[int, int, float]]:
    return [
        (layer, head, mean_attention_distance(records.record(layer, head), grid))
        for layer in range(records.n_layers)
        for head in range(records.n_heads)
    ]


def window_correlation_summary(
    records: StackRecords, windows: tuple[int, ...], n_tokens: int
) -> tuple[float, float]:
    """Compare cross-layer feature similarity of same-window heads vs globals.

    Returns (same_window, local_vs_global): the mean symmetrized PWCCA between
    heads that share a local window size in different layers, and between
    those local heads and the global heads. A decoupled hierarchy shows
    same_window > local_vs_global.
    """
    local_heads = [h for h, w in enumerate(windows) if w != n_tokens]
    global_heads = [h for h, w in enumerate(windows) if w == n_tokens]
    if not local_heads or not global_heads:
        raise ContractError("need both local and global heads for the comparison")
    feats = {
        (layer, head): records.features(layer, head)
        for layer in range(records.n_layers)
        for head in local_heads + global_heads
    }

    def sym(a, b):
        return 0.5 * (pwcca(feats[a], feats[b]) + pwcca(feats[b], feats[a]))

    same = [
        sym((l1, h), (l2, h))
        for h in local_heads
        for l1 in range(records.n_layers)
        for l2 in range(l1 + 1, records.n_layers)
    ]
    cross = [
        sym((l1, h), (l2, g))
        for h in local_heads
        for g in global_heads
        for l1 in range(records.n_layers)
        for l2 in range(records.n_layers)
    ]
    return float(np.mean(same)), float(np.mean(cross))


def pwcca_matrix(records: StackRecords) -> tuple[np.ndarray, list[str]]:
    """All-pairs PWCCA over (layer, head) features; entry [i, j] = pwcca(i, j).

    PWCCA is asymmetric, so the matrix is stored as computed; only the
    diagonal is guaranteed to be 1.
    """
    feats = [
        records.features(layer, head)
        for layer in range(records.n_layers)
        for head in range(records.n_heads)
    ]
    h = len(feats)
    out = np.zeros((h, h))
    for i in range(h):
        for j in range(h):
            out[i, j] = pwcca(feats[i], feats[j])
    return out, records.labels()
