"""Maximum-likelihood training and binary checkpointing.

The loss over a minibatch is the mean negative log-likelihood plus an L2
penalty over every named parameter slot, with no slot exempt. Optimization
is plain minibatch SGD with a global gradient-norm clip and a halve-on-
plateau learning-rate schedule. All shuffling and initialization is seeded,
and gradients accumulate in fixed slot order, so runs are bit-reproducible.
"""

from __future__ import annotations

import json
import random
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .decoder import GroundingMismatchError
from .kb import TripleStore
from .matcher import KbLexicon
from .model import Model, ModelConfig, PreparedExample
from .tensor import Tensor
from .vocab import Vocabulary


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    l2: float = 1e-6
    batch_size: int = 80
    epochs: int = 10
    seed: int = 0
    precision: str = "float64"
    grad_clip: float = 5.0
    enquirer: str = "bilinear"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainingConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


class ZeroProbabilityError(RuntimeError):
    """A gold path had probability zero; carries the offending instance."""

    def __init__(self, instance_index: int, message: str):
        super().__init__(f"instance {instance_index}: {message}")
        self.instance_index = instance_index


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending batch."""

    def __init__(self, epoch: int, batch_indices: Sequence[int]):
        super().__init__(
            f"non-finite loss in epoch {epoch} on instances {list(batch_indices)}"
        )
        self.epoch = epoch
        self.batch_indices = list(batch_indices)


def l2_penalty(model: Model) -> Tensor:
    """Squared Frobenius norm summed over every named slot."""
    total = None
    for _, t in model.params.items():
        sq = T.sum_sq(t)
        total = sq if total is None else T.add(total, sq)
    return total


def batch_loss(
    model: Model, batch: Sequence[PreparedExample], l2: float
) -> tuple[Tensor, float, int]:
    """(loss tensor, total NLL, total target tokens) for one batch."""
    if not batch:
        raise ValueError("empty batch")
    total_nll = None
    nll_value = 0.0
    n_tokens = 0
    for ex in batch:
        try:
            logp = model.example_log_prob(ex)
        except GroundingMismatchError as exc:
            raise ZeroProbabilityError(ex.index, str(exc)) from exc
        nll = T.neg(logp)
        nll_value += nll.item()
        n_tokens += ex.n_steps
        total_nll = nll if total_nll is None else T.add(total_nll, nll)
    loss = T.scale(total_nll, 1.0 / len(batch))
    if l2 > 0.0:
        loss = T.add(loss, T.scale(l2_penalty(model), l2))
    return loss, nll_value, n_tokens


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to a global norm cap; returns the pre-clip norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    nll_per_token: float
    learning_rate: float


def train(
    model: Model,
    dataset: Sequence[PreparedExample],
    config: TrainingConfig,
    log: Callable[[str], None] | None = None,
) -> list[EpochStats]:
    """Shuffled minibatch SGD; returns the per-epoch loss log.

    The learning rate halves whenever an epoch fails to improve the best
    mean loss by at least 1e-4.
    """
    if not dataset:
        raise ValueError("empty dataset")
    order = list(range(len(dataset)))
    rnd = random.Random(config.seed)
    lr = config.learning_rate
    best = float("inf")
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        rnd.shuffle(order)
        loss_sum = 0.0
        nll_sum = 0.0
        token_sum = 0
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch = [dataset[i] for i in chunk]
            try:
                with T.Tape() as tape:
                    loss, nll, n_tok = batch_loss(model, batch, config.l2)
                grads = T.backward(tape, loss)
            except T.NonFiniteError:
                raise TrainingDiverged(epoch, [dataset[i].index for i in chunk]) from None
            slot_grads = {name: grads[t] for name, t in model.params.items()}
            clip_gradients(slot_grads, config.grad_clip)
            for name, t in model.params.items():
                t.data -= lr * slot_grads[name]
            loss_sum += loss.item() * len(batch)
            nll_sum += nll
            token_sum += n_tok
        mean_loss = loss_sum / len(order)
        stats = EpochStats(
            epoch=epoch,
            mean_loss=mean_loss,
            nll_per_token=nll_sum / token_sum,
            learning_rate=lr,
        )
        history.append(stats)
        if log is not None:
            log(
                f"epoch {epoch}: loss {mean_loss:.6f}, "
                f"nll/token {stats.nll_per_token:.6f}, lr {lr:g}"
            )
        if mean_loss < best - 1e-4:
            best = mean_loss
        else:
            lr *= 0.5
    return history


# --- checkpoint format -------------------------------------------------------
#
#   bytes 0..7   magic "GENQACKP"
#   u32 LE       format version (1)
#   u32 LE       header length in bytes
#   header       JSON: precision, slot table (name, shape, offset, nbytes,
#                crc32), and a free-form metadata object
#   payload      raw little-endian arrays at the stated offsets

MAGIC = b"GENQACKP"
VERSION = 1
_DTYPE_CODES = {"float64": "<f8", "float32": "<f4"}


class CheckpointError(RuntimeError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


def save_checkpoint(
    path: str | Path, slots: Mapping[str, Tensor], meta: dict, precision: str
) -> None:
    """Write atomically: a temp file in the same directory, then rename."""
    code = _DTYPE_CODES[precision]
    table = []
    chunks = []
    offset = 0
    for name, t in slots.items():
        raw = np.ascontiguousarray(t.data, dtype=code).tobytes()
        table.append(
            {
                "name": name,
                "shape": list(t.shape),
                "offset": offset,
                "nbytes": len(raw),
                "crc32": zlib.crc32(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"precision": precision, "slots": table, "meta": meta},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    payload = b"".join(chunks)
    blob = MAGIC + struct.pack("<II", VERSION, len(header)) + header + payload
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(target)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, str]:
    """Read and verify; returns (arrays by slot name, metadata, precision).

    Nothing is returned unless every slot passes its checksum, so a corrupt
    or truncated file can never produce a partial load.
    """
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 or not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", blob, len(MAGIC))
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    header_start = len(MAGIC) + 8
    header_end = header_start + header_len
    if len(blob) < header_end:
        raise ChecksumError(f"{path}: truncated header")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header ({exc})") from None
    precision = header["precision"]
    code = _DTYPE_CODES.get(precision)
    if code is None:
        raise CheckpointError(f"{path}: unknown precision {precision!r}")
    payload = blob[header_end:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["slots"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(payload):
            raise ChecksumError(f"{path}: slot {entry['name']!r} extends past the payload")
        raw = payload[lo:hi]
        if zlib.crc32(raw) != entry["crc32"]:
            raise ChecksumError(f"{path}: slot {entry['name']!r} failed its checksum")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=code).reshape(entry["shape"]).copy()
    return arrays, header["meta"], precision


def save_model(
    path: str | Path,
    model: Model,
    system: str = "genqa",
    training: TrainingConfig | None = None,
    extra_meta: dict | None = None,
) -> None:
    meta = {
        "kind": "genqa-model",
        "system": system,
        "kb_disabled": model.kb_disabled,
        "seed": model.seed,
        "config": model.config.to_dict(),
        "question_vocab": model.question_vocab.tokens,
        "answer_vocab": None if model.config.share_vocab else model.answer_vocab.tokens,
        "ext_tokens": model.lexicon.ext_tokens,
        "triples": [[t.subject, t.predicate, t.object] for t in model.store.triples],
        "training": training.to_dict() if training is not None else None,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, dict(model.params.items()), meta, model.config.precision)


def load_model(path: str | Path) -> tuple[Model, dict]:
    """Rebuild a model (tables, store, parameters) from one checkpoint file."""
    arrays, meta, precision = load_checkpoint(path)
    if meta.get("kind") != "genqa-model":
        raise CheckpointError(f"{path}: checkpoint holds {meta.get('kind')!r}, not a model")
    config = ModelConfig.from_dict({**meta["config"], "precision": precision})
    q_vocab = Vocabulary(meta["question_vocab"])
    a_vocab = q_vocab if config.share_vocab else Vocabulary(meta["answer_vocab"])
    store = TripleStore([tuple(row) for row in meta["triples"]])
    lexicon = KbLexicon(q_vocab, meta["ext_tokens"])
    model = Model(
        config,
        q_vocab,
        a_vocab,
        lexicon,
        store,
        seed=meta.get("seed", 0),
        kb_disabled=meta.get("kb_disabled", False),
    )
    expected = set(model.params.names())
    if set(arrays) != expected:
        missing = sorted(expected - set(arrays))
        surplus = sorted(set(arrays) - expected)
        raise CheckpointError(f"{path}: slot mismatch (missing {missing}, surplus {surplus})")
    for name, t in model.params.items():
        if arrays[name].shape != t.shape:
            raise CheckpointError(
                f"{path}: slot {name!r} has shape {arrays[name].shape}, expected {t.shape}"
            )
        t.data[...] = arrays[name]
    return model, meta
