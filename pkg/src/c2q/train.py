"""Plain SGD training with teacher forcing, gradient clipping, validation
tracking, and a binary checkpoint format."""

from __future__ import annotations

import json
import os
import struct
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .model import Hyperparams, Parameters, init_parameters, sequence_loss
from .numerics import Rng

CHECKPOINT_MAGIC = b"C2Q1"
CHECKPOINT_VERSION = 1

# shuffled examples are length-sorted inside windows this many batches wide,
# so batches hold similar source lengths without destroying the shuffle
LENGTH_SORT_WINDOW = 8


class TrainingDivergedError(RuntimeError):
    def __init__(self, batch_ids):
        super().__init__(f"non-finite loss on batch with example ids {batch_ids}")
        self.batch_ids = batch_ids


class CheckpointError(RuntimeError):
    code = "checkpoint"


class CheckpointFormatError(CheckpointError):
    code = "bad-format"


class CheckpointTruncatedError(CheckpointError):
    code = "truncated"


class CheckpointHashError(CheckpointError):
    code = "vocab-hash-mismatch"


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 32
    epochs: int = 30
    grad_clip_norm: float | None = 5.0
    seed: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainLogEntry:
    step: int
    epoch: int
    train_loss: float
    val_loss: float | None
    seconds: float


def clip_global_norm(params, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for t in params.values():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = total ** 0.5
    if max_norm is not None and norm > max_norm > 0:
        factor = max_norm / norm
        for t in params.values():
            if t.grad is not None:
                t.grad *= factor
    return norm


def _batches(examples, order, batch_size):
    shuffled = [examples[i] for i in order]
    window = batch_size * LENGTH_SORT_WINDOW
    arranged = []
    for start in range(0, len(shuffled), window):
        block = shuffled[start:start + window]
        block.sort(key=lambda ex: (len(ex.base_ids), ex.id))
        arranged.extend(block)
    return [arranged[i:i + batch_size] for i in range(0, len(arranged), batch_size)]


def mean_loss(examples, params, hyper):
    total = 0.0
    for ex in examples:
        loss, _ = sequence_loss(ex, params, hyper)
        total += float(loss.data)
    return total / max(1, len(examples))


def train(train_examples, val_examples, hyper, config, vocab_hash="",
          params=None, log_fn=None):
    """SGD over encoded examples. Returns (params, log entries).

    The best-validation parameters are written to config.checkpoint_path
    when set (final parameters when there is no validation set).
    """
    if not train_examples:
        raise ValueError("train: no training examples")
    rng = Rng(config.seed)
    if params is None:
        vocab_size = len(train_examples[0].ev.base)
        params = init_parameters(hyper, vocab_size, rng)

    log, step = [], 0
    best_val = float("inf")
    start = time.monotonic()
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_examples))
        epoch_losses = []
        for batch in _batches(train_examples, order, config.batch_size):
            params.zero_grads()
            losses = [sequence_loss(ex, params, hyper)[0] for ex in batch]
            batch_loss = nm.scale(nm.add_n(losses), 1.0 / len(batch))
            value = float(batch_loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError([ex.id for ex in batch])
            batch_loss.backward()
            clip_global_norm(params, config.grad_clip_norm)
            if config.lr:
                for t in params.values():
                    if t.grad is not None:
                        t.data -= (config.lr * t.grad).astype(t.data.dtype)
            step += 1
            epoch_losses.append(value)

        val_loss = mean_loss(val_examples, params, hyper) if val_examples else None
        entry = TrainLogEntry(step=step, epoch=epoch,
                              train_loss=sum(epoch_losses) / len(epoch_losses),
                              val_loss=val_loss,
                              seconds=time.monotonic() - start)
        log.append(entry)
        if log_fn:
            log_fn(entry)
        if config.checkpoint_path:
            if val_loss is None or val_loss < best_val:
                best_val = val_loss if val_loss is not None else best_val
                save_checkpoint(params, hyper, vocab_hash, config.checkpoint_path)
    return params, log


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: magic "C2Q1" | version u32 LE | header length u32 LE |
#         UTF-8 JSON header | raw little-endian f32 tensor data in
#         manifest order (offsets relative to the data section)


def _hyper_to_json(hyper):
    return {"embed_dim": hyper.embed_dim, "hidden": hyper.hidden,
            "vocab_min_freq": hyper.vocab_min_freq,
            "lambda_cov": hyper.lambda_cov,
            "ablation": sorted(hyper.ablation),
            "max_decode_len": hyper.max_decode_len}


def _hyper_from_json(obj):
    return Hyperparams(embed_dim=obj["embed_dim"], hidden=obj["hidden"],
                       vocab_min_freq=obj["vocab_min_freq"],
                       lambda_cov=obj["lambda_cov"],
                       ablation=frozenset(obj["ablation"]),
                       max_decode_len=obj["max_decode_len"])


def save_checkpoint(params, hyper, vocab_hash, path):
    manifest, offset = [], 0
    blobs = []
    for name, tensor in params.items():
        data = np.ascontiguousarray(tensor.data, dtype="<f4")
        manifest.append({"name": name, "shape": list(tensor.data.shape),
                         "offset": offset})
        blobs.append(data.tobytes())
        offset += len(blobs[-1])
    header = json.dumps({"hyperparams": _hyper_to_json(hyper),
                         "vocab_hash": vocab_hash,
                         "init": "uniform(-0.1,0.1) weights, zero biases",
                         "manifest": manifest}).encode("utf-8")
    payload = (CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
               + struct.pack("<I", len(header)) + header + b"".join(blobs))
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path, expected_vocab_hash=None):
    """(Parameters, Hyperparams, vocab_hash); verifies format and hash."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise CheckpointTruncatedError(f"{path}: file too short")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {raw[:4]!r}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    header_len = struct.unpack("<I", raw[8:12])[0]
    if len(raw) < 12 + header_len:
        raise CheckpointTruncatedError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: bad header: {exc}") from exc
    vocab_hash = header["vocab_hash"]
    if expected_vocab_hash is not None and vocab_hash != expected_vocab_hash:
        raise CheckpointHashError(
            f"{path}: checkpoint built against a different vocabulary")
    data = raw[12 + header_len:]
    tensors = {}
    for entry in header["manifest"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        end = entry["offset"] + 4 * count
        if end > len(data):
            raise CheckpointTruncatedError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(data[entry["offset"]:end], dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = nm.Tensor(arr.copy())
    return Parameters(tensors), _hyper_from_json(header["hyperparams"]), vocab_hash
