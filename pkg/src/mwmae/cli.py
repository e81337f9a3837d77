"""Command-line entry point.

Subcommands: synth, pretrain, extract, probe, analyze, score, selftest.
Configuration is plain JSON with unknown keys rejected; logs go to stderr,
data only to files. Exit codes: 0 success, 2 usage error, 1 anything else
(with a single machine-parsable line on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .analysis import PatchGrid, collect_stack, distance_table, entropy_table, pwcca_matrix
from .audio import crop_or_pad, load_wav, logmel, standardize
from .container import load_tensors, save_tensors
from .errors import ContractError
from .evalkit import TaskScoreTable, overall_score, scene_embedding, train_probe
from .model import MaeConfig, load_checkpoint
from .synth import default_spec, gen_corpus, read_labels, KINDS
from .train import TrainConfig, WavSpecDataset, train

_MAE_KEYS = {f.name for f in fields(MaeConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_EXTRA_KEYS = {"max_steps"}


def load_run_config(path: str | Path) -> tuple[MaeConfig, TrainConfig, int | None]:
    """Flat JSON union of model and training fields; one shared seed."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ContractError("config must be a JSON object")
    allowed = _MAE_KEYS | _TRAIN_KEYS | _EXTRA_KEYS
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ContractError(f"unknown config keys: {unknown}")
    mae_kwargs = {k: raw[k] for k in raw if k in _MAE_KEYS}
    train_kwargs = {k: raw[k] for k in raw if k in _TRAIN_KEYS}
    if "betas" in train_kwargs:
        train_kwargs["betas"] = tuple(train_kwargs["betas"])
    mae_cfg = MaeConfig(**mae_kwargs)
    train_cfg = TrainConfig(**train_kwargs)
    return mae_cfg, train_cfg, raw.get("max_steps")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_seed(args, fallback: int = 0) -> int:
    sub = getattr(args, "seed", None)
    if sub is not None:
        return sub
    if args.global_seed is not None:
        return args.global_seed
    return fallback


def _cmd_synth(args) -> int:
    spec = default_spec(args.kind)
    seed = _resolve_seed(args)
    labels = gen_corpus(spec, args.n, seed, args.out)
    _log(f"wrote {args.n} clips and {labels}")
    return 0


def _cmd_pretrain(args) -> int:
    mae_cfg, train_cfg, max_steps = load_run_config(args.config)
    if args.global_seed is not None:
        mae_cfg.seed = args.global_seed
        train_cfg.seed = args.global_seed
    dataset = WavSpecDataset(args.data, mae_cfg.input_t, seed=train_cfg.seed)
    _log(f"pretraining on {len(dataset)} clips")
    result = train(
        dataset, mae_cfg, train_cfg,
        out_ckpt=args.out, loss_csv=args.loss_csv, max_steps=max_steps,
        log_every=50,
    )
    _log(f"final loss {result.losses[-1]:.6f}; checkpoint at {args.out}")
    return 0


def _load_specs(wav_dir: str, cfg: MaeConfig) -> list[np.ndarray]:
    paths = sorted(Path(wav_dir).rglob("*.wav"))
    if not paths:
        raise ContractError(f"no .wav files under {wav_dir}")
    specs = []
    for i, p in enumerate(paths):
        spec = standardize(logmel(load_wav(p)))
        specs.append(crop_or_pad(spec, cfg.input_t, seed=i))
    return specs


def _cmd_extract(args) -> int:
    cfg, params = load_checkpoint(args.ckpt)
    paths = sorted(Path(args.wav_dir).rglob("*.wav"))
    if not paths:
        raise ContractError(f"no .wav files under {args.wav_dir}")
    out = {}
    for p in paths:
        key = str(p.relative_to(args.wav_dir))
        out[key] = scene_embedding(load_wav(p), cfg, params)
    save_tensors(args.out, out)
    _log(f"wrote {len(out)} embeddings to {args.out}")
    return 0


def _cmd_probe(args) -> int:
    embeddings = load_tensors(args.embeddings)
    rows = read_labels(args.labels)
    feats, labels, splits = [], [], []
    for name, split, label in rows:
        if name not in embeddings:
            raise ContractError(f"no embedding for {name!r}")
        feats.append(embeddings[name])
        labels.append(label)
        splits.append(split)
    multilabel = any(";" in lab for lab in labels)
    if multilabel:
        vocab = sorted({tok for lab in labels for tok in lab.split(";") if tok})
        mat = np.zeros((len(labels), len(vocab)))
        for i, lab in enumerate(labels):
            for tok in lab.split(";"):
                if tok:
                    mat[i, vocab.index(tok)] = 1.0
        y = mat
    else:
        y = np.array(labels)
    result = train_probe(
        np.array(feats), y, np.array(splits), seed=_resolve_seed(args),
        multilabel=multilabel,
    )
    payload = {
        "metric": result.metric_name,
        "test": result.test_metric,
        "valid": result.val_metric,
        "best_epoch": result.best_epoch,
        "epochs_ran": result.epochs_ran,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    _log(f"{result.metric_name}: test {result.test_metric:.4f}")
    return 0


def _cmd_analyze(args) -> int:
    cfg, params = load_checkpoint(args.ckpt)
    specs = _load_specs(args.data, cfg)
    stack = args.stack or ("decoder" if args.metric == "pwcca" else "encoder")
    records = collect_stack(cfg, params, specs, stack=stack)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        if args.metric == "pwcca":
            matrix, names = pwcca_matrix(records)
            writer.writerow([""] + names)
            for name, row in zip(names, matrix):
                writer.writerow([name] + [repr(float(v)) for v in row])
        else:
            writer.writerow(["layer", "head", "value"])
            if args.metric == "entropy":
                table = entropy_table(records)
            else:
                grid = PatchGrid(cfg.grid_t, cfg.grid_f)
                table = distance_table(records, grid)
            for layer, head, value in table:
                writer.writerow([layer, head, repr(value)])
    _log(f"wrote {args.metric} ({stack}) to {args.out}")
    return 0


def _cmd_score(args) -> int:
    files = sorted(Path(args.metrics_dir).glob("*.json"))
    if not files:
        raise ContractError(f"no .json metric files under {args.metrics_dir}")
    models, per_model, lower = [], {}, set()
    for f in files:
        doc = json.loads(f.read_text())
        name = doc.get("model", f.stem)
        models.append(name)
        per_model[name] = doc["tasks"]
        lower.update(doc.get("lower_is_better", []))
    tasks = sorted({t for scores in per_model.values() for t in scores})
    for name in models:
        missing = [t for t in tasks if t not in per_model[name]]
        if missing:
            raise ContractError(f"model {name!r} is missing tasks {missing}")
    scores = np.array([[per_model[m][t] for t in tasks] for m in models])
    table = TaskScoreTable(
        models=models, tasks=tasks, scores=scores,
        higher_is_better=[t not in lower for t in tasks],
    )
    payload = {"scores": {m: overall_score(table, m) for m in models}}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _log(f"scored {len(models)} models over {len(tasks)} tasks")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwmae",
        description="Multi-window masked autoencoder: pretraining, analysis, evaluation.",
    )
    parser.add_argument(
        "--seed", type=int, default=None, dest="global_seed",
        help="global seed override",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled WAV corpus")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pretrain", help="train from a JSON config on a WAV directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-csv", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("extract", help="scene embeddings for every WAV in a directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("probe", help="train the shallow MLP probe on embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("analyze", help="attention entropy/distance/pwcca tables")
    p.add_argument("metric", choices=["entropy", "distance", "pwcca"])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stack", choices=["encoder", "decoder"], default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("score", help="normalized overall score from per-model metrics")
    p.add_argument("--metrics-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line error contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
