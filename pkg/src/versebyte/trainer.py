"""Training loop: teacher forcing, Adam, plateau LR scheduling, early stopping.

Defaults: learning rate 2e-4, plateau factor 0.5 with patience 10, batch
size 48, at most 500 epochs with early stopping. Runs are deterministic
given the seed (single-threaded reduction order).
"""

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .model import ModelConfig, ModelParams, forward_batch, init_params
from .tokenizer import EOS_ID, PAD_ID, encode, tag_source

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
IMPROVEMENT_THRESHOLD = 1e-6
IGNORE_ID = -1


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or Inf during a training step."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.0002
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    batch_size: int = 48
    max_epochs: int = 500
    early_stop_patience: int = 20
    min_lr: float = 1e-6
    grad_clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise ValueError(f"scheduler_factor must be in (0, 1), got {self.scheduler_factor}")
        for name in ("scheduler_patience", "batch_size", "max_epochs", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.min_lr <= 0 or self.min_lr > self.learning_rate:
            raise ValueError(f"min_lr must be in (0, learning_rate], got {self.min_lr}")
        if self.grad_clip_norm <= 0:
            raise ValueError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate, "scheduler_factor": self.scheduler_factor,
            "scheduler_patience": self.scheduler_patience, "batch_size": self.batch_size,
            "max_epochs": self.max_epochs, "early_stop_patience": self.early_stop_patience,
            "min_lr": self.min_lr, "grad_clip_norm": self.grad_clip_norm, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainState:
    config: TrainConfig
    current_lr: float
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    best_val_loss: float = math.inf
    epochs_since_best: int = 0
    epochs_since_lr_drop: int = 0

    @classmethod
    def create(cls, config: TrainConfig, params: ModelParams) -> "TrainState":
        return cls(
            config=config,
            current_lr=config.learning_rate,
            m={name: np.zeros_like(t.data) for name, t in params.items()},
            v={name: np.zeros_like(t.data) for name, t in params.items()},
            rng=np.random.default_rng([config.seed, 0xD0]),
        )


@dataclass
class Batch:
    src: np.ndarray          # [b, s] int64, right-padded with pad_id
    src_lengths: np.ndarray  # [b]
    dec_in: np.ndarray       # [b, t] target shifted right, starts with pad_id
    labels: np.ndarray       # [b, t] target + eos, padded with IGNORE_ID
    index: int = 0


def tokenize_example(example) -> tuple[list[int], list[int]]:
    """(encoder input ids, target ids incl. eos) for one parallel example."""
    src = encode(tag_source(example.source_text, example.target_lang), append_eos=True)
    tgt = encode(example.target_text, append_eos=True)
    return src, tgt


def _pad_batch(chunk: list[tuple[list[int], list[int]]], index: int) -> Batch:
    b = len(chunk)
    max_s = max(len(src) for src, _ in chunk)
    max_t = max(len(tgt) for _, tgt in chunk)
    src = np.full((b, max_s), PAD_ID, dtype=np.int64)
    lengths = np.zeros(b, dtype=np.int64)
    dec_in = np.full((b, max_t), PAD_ID, dtype=np.int64)
    labels = np.full((b, max_t), IGNORE_ID, dtype=np.int64)
    for row, (s_ids, t_ids) in enumerate(chunk):
        src[row, :len(s_ids)] = s_ids
        lengths[row] = len(s_ids)
        dec_in[row, 1:len(t_ids)] = t_ids[:-1]  # shift right; eos never fed in
        labels[row, :len(t_ids)] = t_ids
    return Batch(src=src, src_lengths=lengths, dec_in=dec_in, labels=labels, index=index)


def make_batches(examples, batch_size: int, seed: int, epoch: int,
                 max_seq_len: int = 512) -> list[Batch]:
    """Tokenize, epoch-shuffle, and pad examples into batches.

    Examples whose tokenized source or target exceeds max_seq_len are
    skipped with a counted warning. The last partial batch is kept.
    """
    if not examples:
        raise ValueError("no examples to batch")
    tokenized = []
    skipped = 0
    for ex in examples:
        src, tgt = tokenize_example(ex)
        if len(src) > max_seq_len or len(tgt) > max_seq_len:
            skipped += 1
            continue
        tokenized.append((src, tgt))
    if skipped:
        warnings.warn(f"skipped {skipped} examples longer than max_seq_len={max_seq_len}")
    if not tokenized:
        return []
    order = np.random.default_rng([seed, epoch]).permutation(len(tokenized))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [tokenized[i] for i in order[start:start + batch_size]]
        batches.append(_pad_batch(chunk, index=len(batches)))
    return batches


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most max_norm."""
    total = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def apply_gradients(params: ModelParams, state: TrainState,
                    grads: dict[str, np.ndarray]) -> None:
    """One clipped Adam update at the state's current learning rate."""
    clip_gradients(grads, state.config.grad_clip_norm)
    state.step += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.step
    bc2 = 1.0 - ADAM_BETA2 ** state.step
    for name, tensor in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        tensor.data -= state.current_lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def train_step(params: ModelParams, state: TrainState, batch: Batch,
               dropout_rate: float = 0.0):
    """Teacher-forced step: forward, cross-entropy, backward, clipped Adam."""
    params.zero_grads()
    logits = forward_batch(params, batch.src, batch.src_lengths, batch.dec_in,
                           rng=state.rng if dropout_rate > 0 else None, rate=dropout_rate)
    loss = ad.cross_entropy(logits, batch.labels, ignore_id=IGNORE_ID)
    loss_value = loss.item()
    if not math.isfinite(loss_value):
        raise TrainingDivergedError(
            f"non-finite loss {loss_value} at epoch {state.epoch}, batch {batch.index}")
    loss.backward()
    grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
             for name, t in params.items()}
    apply_gradients(params, state, grads)
    return params, state, loss_value


def scheduler_step(state: TrainState, val_loss: float) -> TrainState:
    """Plateau rule: track best val loss, halve the lr when patience runs out."""
    if val_loss < state.best_val_loss - IMPROVEMENT_THRESHOLD:
        state.best_val_loss = val_loss
        state.epochs_since_best = 0
        state.epochs_since_lr_drop = 0
    else:
        state.epochs_since_best += 1
        state.epochs_since_lr_drop += 1
    if state.epochs_since_lr_drop > state.config.scheduler_patience:
        state.current_lr = max(state.config.min_lr,
                               state.current_lr * state.config.scheduler_factor)
        state.epochs_since_lr_drop = 0
    return state


def early_stop_check(state: TrainState) -> bool:
    return (state.epochs_since_best > state.config.early_stop_patience
            or state.epoch >= state.config.max_epochs)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_loss": self.val_loss, "lr": self.lr, "seconds": self.seconds}


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""
    best_checkpoint: str = ""
    best_val_loss: float = math.inf

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records],
                "stop_reason": self.stop_reason,
                "best_checkpoint": self.best_checkpoint,
                "best_val_loss": self.best_val_loss}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def validation_loss(params: ModelParams, batches: list[Batch]) -> float:
    """Mean cross-entropy per non-ignored position, fixed batch order."""
    total_nll = 0.0
    total_positions = 0
    with ad.no_grad():
        for batch in batches:
            logits = forward_batch(params, batch.src, batch.src_lengths, batch.dec_in)
            loss = ad.cross_entropy(logits, batch.labels, ignore_id=IGNORE_ID)
            count = int((batch.labels != IGNORE_ID).sum())
            total_nll += loss.item() * count
            total_positions += count
    return total_nll / max(1, total_positions)


def fit(train_examples, val_examples, model_config: ModelConfig,
        train_config: TrainConfig, out_dir, val_loss_hook=None,
        log=print) -> TrainReport:
    """Run the full training protocol and save the best-validation checkpoint.

    A validation pass before the first epoch seeds the best-loss tracking,
    so a run that never improves stops after exactly early_stop_patience + 1
    epochs. ``val_loss_hook(epoch) -> float``, when given, replaces the
    measured validation loss (used by tests to inject loss streams).
    """
    if not train_examples:
        raise ValueError("training split is empty")
    if not val_examples:
        raise ValueError("validation split is empty")
    os.makedirs(out_dir, exist_ok=True)
    best_path = os.path.join(out_dir, "best.ckpt")

    params = init_params(model_config, train_config.seed)
    state = TrainState.create(train_config, params)
    val_batches = make_batches(val_examples, train_config.batch_size,
                               seed=0, epoch=0, max_seq_len=model_config.max_seq_len)
    # epoch-0 baseline: defines "improvement" for every later epoch
    def measure(epoch):
        if val_loss_hook is not None:
            return float(val_loss_hook(epoch))
        return validation_loss(params, val_batches)

    scheduler_step(state, measure(0))
    save_checkpoint(params, model_config, best_path)

    report = TrainReport(best_checkpoint=best_path)
    while True:
        state.epoch += 1
        started = time.perf_counter()
        batches = make_batches(train_examples, train_config.batch_size,
                               seed=train_config.seed, epoch=state.epoch,
                               max_seq_len=model_config.max_seq_len)
        if not batches:
            raise ValueError("every training example exceeds max_seq_len")
        lr_in_effect = state.current_lr
        losses = []
        for batch in batches:
            _, _, loss_value = train_step(params, state, batch,
                                          dropout_rate=model_config.dropout_rate)
            losses.append(loss_value)
        train_loss = sum(losses) / len(losses)
        val_loss = measure(state.epoch)
        previous_best = state.best_val_loss
        scheduler_step(state, val_loss)
        if state.best_val_loss < previous_best:
            save_checkpoint(params, model_config, best_path)
        report.records.append(EpochRecord(
            epoch=state.epoch, train_loss=train_loss, val_loss=val_loss,
            lr=lr_in_effect, seconds=time.perf_counter() - started))
        if log is not None:
            log(f"epoch={state.epoch} train_loss={train_loss:.6f} "
                f"val_loss={val_loss:.6f} lr={lr_in_effect:.8f}")
        if early_stop_check(state):
            report.stop_reason = ("max_epochs" if state.epoch >= train_config.max_epochs
                                  else "early_stop")
            break
    report.best_val_loss = state.best_val_loss
    return report
