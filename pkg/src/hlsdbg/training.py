"""Joint training of the localization heads and the correction decoder.

Per step, the encoder loss combines the type head's cross entropy and the
token head's weighted binary cross entropy; the decoder adds teacher-forced
next-token cross entropy over the correct snippet. The three parts are
scaled and summed into one objective. Training order, the given-location
coin flips, and therefore the loss curve are a pure function of the seed;
checkpoints carry optimizer and RNG state so a resumed run reproduces the
uninterrupted curve bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, check_finite
from .errors import DataError
from .model import BUG_TYPE_INDEX, DebuggerModel, ModelConfig, Vocab
from .mutate import BugRecord
from .optim import AdamState, adam_step, clip_global_norm
from .tensorstore import load_tensors, save_tensors

CURVE_HEADER = ("step", "L_type", "L_bug", "L_decoder", "L_all")


@dataclass
class LossWeights:
    alpha_type: float = 0.2
    alpha_bug: float = 2.0
    alpha_decoder: float = 10.0
    alpha_encoder: float = 1.0
    alpha_true: float = 0.05
    alpha_false: float = 1.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.alpha_true + self.alpha_false == 0:
            raise ValueError("alpha_true and alpha_false cannot both be zero")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 3e-4
    lr_final: float = 0.0
    lr_decay_epochs: int = 0  # cosine-decay horizon; 0 keeps lr constant
    seed: int = 0
    checkpoint_every: int = 0  # epochs between checkpoints; 0 disables
    clip_norm: float = 1.0  # 0 disables clipping
    given_location_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0.0 <= self.given_location_fraction <= 1.0:
            raise ValueError("given_location_fraction must be within [0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lr_final < 0 or self.lr_decay_epochs < 0:
            raise ValueError("lr_final and lr_decay_epochs must be non-negative")
        if self.lr_decay_epochs > 0 and self.lr_final > self.lr:
            raise ValueError("lr_final cannot exceed lr")


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for `epoch` under cosine decay to `lr_final`.

    The horizon is `lr_decay_epochs`, not `epochs`, so truncating or
    extending a run never changes the rate used at a given epoch.
    """
    if cfg.lr_decay_epochs <= 0:
        return cfg.lr
    frac = min(epoch, cfg.lr_decay_epochs) / cfg.lr_decay_epochs
    return cfg.lr_final + (cfg.lr - cfg.lr_final) * 0.5 * (1.0 + math.cos(math.pi * frac))


# --- losses -----------------------------------------------------------------


def loss_type(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross entropy of the type head; `labels` are class indices."""
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[-1]
    if labels.size == 0:
        raise ValueError("empty type batch")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"type label out of range [0, {k})")
    logprobs = ad.log_softmax(logits, axis=-1)
    picked = ad.gather(logprobs, labels.reshape(-1, 1), axis=1)
    return ad.neg(ad.mean(picked))


def loss_bug(logits: Tensor, labels: np.ndarray, mask: np.ndarray, weights: LossWeights) -> Tensor:
    """Weighted binary cross entropy over real token positions.

    Positive positions weigh `alpha_true`, negatives `alpha_false`; the sum
    is pooled across the whole batch by total weight.
    """
    y = np.asarray(labels, dtype=logits.dtype)
    m = np.asarray(mask, dtype=logits.dtype)
    if m.sum() == 0:
        raise ValueError("bug loss over an all-padding batch")
    w = (y * weights.alpha_true + (1.0 - y) * weights.alpha_false) * m
    wsum = float(w.sum())
    if wsum == 0:
        raise ValueError("bug loss weights sum to zero")
    elem = ad.sub(ad.softplus(logits), ad.mul(logits, Tensor(y)))
    return ad.scale(ad.sum_(ad.mul(elem, Tensor(w))), 1.0 / wsum)


def loss_decoder(logits: Tensor, targets: np.ndarray, keep: np.ndarray) -> Tensor:
    """Teacher-forced next-token cross entropy, averaged per sample then batch."""
    targets = np.asarray(targets, dtype=np.int64)
    k = np.asarray(keep, dtype=logits.dtype)
    counts = k.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("decoder loss requires a non-empty target per sample")
    logprobs = ad.log_softmax(logits, axis=-1)
    picked = ad.reshape(ad.gather(logprobs, targets[..., None], axis=2), targets.shape)
    per_sample = ad.sum_(ad.mul(picked, Tensor(k)), axis=1)
    per_sample = ad.mul(per_sample, Tensor((1.0 / counts).astype(logits.dtype)))
    return ad.neg(ad.mean(per_sample))


def loss_all(
    l_type: Tensor, l_bug: Tensor, l_decoder: Tensor, weights: LossWeights
) -> tuple[Tensor, Tensor]:
    """(combined, encoder-part) per the scaled three-term objective."""
    l_encoder = ad.add(
        ad.scale(l_type, weights.alpha_type), ad.scale(l_bug, weights.alpha_bug)
    )
    combined = ad.add(
        ad.scale(l_encoder, weights.alpha_encoder),
        ad.scale(l_decoder, weights.alpha_decoder),
    )
    return combined, l_encoder


# --- batching ------------------------------------------------------------------


@dataclass
class _Batch:
    ids: list[list[int]]
    bug_rows: list[list[int]]
    type_labels: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_keep: np.ndarray


def _build_batch(model: DebuggerModel, records: Sequence[BugRecord], givens: Sequence[bool]) -> _Batch:
    ids_batch, bug_rows, type_labels, tgt_rows = [], [], [], []
    for rec, given in zip(records, givens):
        ids, is_token, _ = model.record_input_ids(rec, given)
        it = iter(rec.token_labels)
        bug_rows.append([next(it) if real else 0 for real in is_token])
        ids_batch.append(ids)
        type_labels.append(BUG_TYPE_INDEX[rec.bug_type])
        tgt_rows.append(model.target_ids(rec))
    t = max(len(r) for r in tgt_rows)
    b = len(records)
    tgt_in = np.full((b, t), Vocab.PAD, dtype=np.int64)
    tgt_out = np.full((b, t), Vocab.PAD, dtype=np.int64)
    keep = np.zeros((b, t), dtype=model.config.np_dtype)
    for i, row in enumerate(tgt_rows):
        tgt_in[i, : len(row)] = [Vocab.START] + row[:-1]
        tgt_out[i, : len(row)] = row
        keep[i, : len(row)] = 1.0
    return _Batch(
        ids=ids_batch,
        bug_rows=bug_rows,
        type_labels=np.asarray(type_labels, dtype=np.int64),
        tgt_in=tgt_in,
        tgt_out=tgt_out,
        tgt_keep=keep,
    )


def _token_label_arrays(batch: _Batch, token_counts: list[int], s_tokens: int, dtype):
    b = len(batch.bug_rows)
    labels = np.zeros((b, s_tokens), dtype=dtype)
    mask = np.zeros((b, s_tokens), dtype=dtype)
    for i, row in enumerate(batch.bug_rows):
        n = token_counts[i]
        labels[i, :n] = row[:n]
        mask[i, :n] = 1.0
    return labels, mask


# --- curve + checkpoints -----------------------------------------------------------


@dataclass
class CurveRow:
    step: int
    l_type: float
    l_bug: float
    l_decoder: float
    l_all: float


@dataclass
class TrainResult:
    curve: list[CurveRow]
    final_epoch: int
    stopped_early: bool
    n_truncated: int
    checkpoints: list[Path] = field(default_factory=list)


def write_curve_csv(path: str | Path, curve: Sequence[CurveRow], append: bool = False) -> None:
    mode = "a" if append and Path(path).exists() else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(CURVE_HEADER)
        for row in curve:
            writer.writerow([row.step, row.l_type, row.l_bug, row.l_decoder, row.l_all])


def read_curve_csv(path: str | Path) -> list[CurveRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CURVE_HEADER:
            raise DataError(f"unexpected curve header {header!r}")
        for rec in reader:
            rows.append(CurveRow(int(rec[0]), *(float(v) for v in rec[1:])))
    return rows


def save_checkpoint(
    path: str | Path,
    model: DebuggerModel,
    state: AdamState,
    rng: random.Random,
    next_epoch: int,
    step: int,
    cfg: TrainConfig,
    weights: LossWeights,
) -> None:
    tensors = {name: p.data for name, p in model.params.items()}
    for name, m in state.m.items():
        tensors[f"adam.m.{name}"] = m
    for name, v in state.v.items():
        tensors[f"adam.v.{name}"] = v
    meta = {
        "config": asdict(model.config),
        "vocab": model.vocab.id_to_token,
        "train_config": asdict(cfg),
        "loss_weights": asdict(weights),
        "adam_t": state.t,
        "next_epoch": next_epoch,
        "step": step,
        "rng_state": json.loads(json.dumps(rng.getstate())),
    }
    save_tensors(path, tensors, meta=meta)


def load_checkpoint(path: str | Path):
    """(model, adam state, rng, next_epoch, step, train config, loss weights)."""
    tensors, meta = load_tensors(path)
    for key in ("config", "vocab", "train_config", "next_epoch"):
        if key not in meta:
            raise DataError(f"checkpoint {path} lacks {key!r}")
    config = ModelConfig(**meta["config"])
    model = DebuggerModel(config, Vocab(meta["vocab"]), seed=0)
    state = AdamState(t=meta["adam_t"])
    for name, p in model.params.items():
        if name not in tensors:
            raise DataError(f"checkpoint {path} lacks tensor {name!r}")
        p.data = tensors[name].astype(config.np_dtype, copy=False)
        if f"adam.m.{name}" in tensors:
            state.m[name] = tensors[f"adam.m.{name}"].astype(config.np_dtype, copy=False)
            state.v[name] = tensors[f"adam.v.{name}"].astype(config.np_dtype, copy=False)
    rng = random.Random()
    version, internal, gauss = meta["rng_state"]
    rng.setstate((version, tuple(internal), gauss))
    cfg = TrainConfig(**meta["train_config"])
    weights = LossWeights(**meta["loss_weights"])
    return model, state, rng, meta["next_epoch"], meta["step"], cfg, weights


# --- the trainer ---------------------------------------------------------------------


def train(
    model: DebuggerModel,
    records: Sequence[BugRecord],
    cfg: TrainConfig,
    weights: LossWeights | None = None,
    out_dir: str | Path | None = None,
    stop_fn: Callable[[int, DebuggerModel], bool] | None = None,
) -> TrainResult:
    weights = weights or LossWeights()
    rng = random.Random(cfg.seed)
    return _run(model, records, cfg, weights, AdamState(), rng, 0, 0, out_dir, stop_fn, append_curve=False)


def resume(
    checkpoint: str | Path,
    records: Sequence[BugRecord],
    out_dir: str | Path | None = None,
    stop_fn: Callable[[int, DebuggerModel], bool] | None = None,
    epochs: int | None = None,
) -> tuple[DebuggerModel, TrainResult]:
    """Continue a checkpointed run; the curve picks up where it left off."""
    model, state, rng, next_epoch, step, cfg, weights = load_checkpoint(checkpoint)
    if epochs is not None:
        cfg.epochs = epochs
    result = _run(model, records, cfg, weights, state, rng, next_epoch, step, out_dir, stop_fn, append_curve=True)
    return model, result


def _run(
    model: DebuggerModel,
    records: Sequence[BugRecord],
    cfg: TrainConfig,
    weights: LossWeights,
    state: AdamState,
    rng: random.Random,
    start_epoch: int,
    step: int,
    out_dir: str | Path | None,
    stop_fn,
    append_curve: bool,
) -> TrainResult:
    if not records:
        raise ValueError("no training records")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    curve: list[CurveRow] = []
    checkpoints: list[Path] = []
    n_truncated = 0
    stopped = False
    final_epoch = start_epoch - 1
    for epoch in range(start_epoch, cfg.epochs):
        order = list(range(len(records)))
        rng.shuffle(order)
        givens = [rng.random() < cfg.given_location_fraction for _ in order]
        for at in range(0, len(order), cfg.batch_size):
            chunk = order[at : at + cfg.batch_size]
            batch = _build_batch(
                model, [records[i] for i in chunk], [givens[j] for j in range(at, at + len(chunk))]
            )
            with Tape() as tape:
                enc = model.encode_ids(batch.ids)
                n_truncated += sum(enc.truncated)
                labels, mask = _token_label_arrays(
                    batch, enc.token_counts, enc.e_tokens.shape[1], model.config.np_dtype
                )
                l_t = loss_type(model.type_logits(enc), batch.type_labels)
                l_b = loss_bug(model.bug_logits(enc), labels, mask, weights)
                l_d = loss_decoder(
                    model.decoder_logits(enc, batch.tgt_in, batch.tgt_keep),
                    batch.tgt_out,
                    batch.tgt_keep,
                )
                combined, _ = loss_all(l_t, l_b, l_d, weights)
                check_finite(combined, "training loss")
            backward(tape, combined)
            if cfg.clip_norm > 0:
                clip_global_norm(model.params, cfg.clip_norm)
            adam_step(model.params, state, lr_at(cfg, epoch))
            for p in model.params.values():
                p.zero_grad()
            step += 1
            curve.append(
                CurveRow(step, float(l_t.data), float(l_b.data), float(l_d.data), float(combined.data))
            )
        final_epoch = epoch
        if (
            out_path is not None
            and cfg.checkpoint_every > 0
            and (epoch + 1) % cfg.checkpoint_every == 0
        ):
            ckpt = out_path / f"checkpoint_{epoch + 1:05d}.bin"
            save_checkpoint(ckpt, model, state, rng, epoch + 1, step, cfg, weights)
            checkpoints.append(ckpt)
        if stop_fn is not None and stop_fn(epoch, model):
            stopped = True
            break
    if out_path is not None:
        write_curve_csv(out_path / "curve.csv", curve, append=append_curve)
    return TrainResult(
        curve=curve,
        final_epoch=final_epoch,
        stopped_early=stopped,
        n_truncated=n_truncated,
        checkpoints=checkpoints,
    )


# --- config files ----------------------------------------------------------------------


def parse_config_text(text: str) -> tuple[dict, dict, dict]:
    """`key = value` lines into (train, model, loss) keyword dicts.

    Prefix `model.` routes to ModelConfig, `loss.` to LossWeights; anything
    else must be a TrainConfig field. `#` starts a comment.
    """
    train_fields = set(TrainConfig.__dataclass_fields__)
    model_fields = set(ModelConfig.__dataclass_fields__)
    loss_fields = set(LossWeights.__dataclass_fields__)
    train_kw: dict = {}
    model_kw: dict = {}
    loss_kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected `key = value`")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("model."):
            name = key[len("model."):]
            if name not in model_fields:
                raise DataError(f"config line {lineno}: unknown model field {name!r}")
            model_kw[name] = _coerce(value)
        elif key.startswith("loss."):
            name = key[len("loss."):]
            if name not in loss_fields:
                raise DataError(f"config line {lineno}: unknown loss field {name!r}")
            loss_kw[name] = _coerce(value)
        else:
            if key not in train_fields:
                raise DataError(f"config line {lineno}: unknown train field {key!r}")
            train_kw[key] = _coerce(value)
    return train_kw, model_kw, loss_kw


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value
