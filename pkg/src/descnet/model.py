"""Dual-channel model assembly, training loop, prediction, checkpointing.

Text channel: embed -> BiGRU -> [max-pool ; avg-pool]. Descriptor channel:
embed -> BiGRU -> attention context. The three vectors concatenate into a
dense head: softmax for multi-class, sigmoid for multi-label.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import metrics, nn
from . import numerics as nm
from .corpus import PAD_ID, Document, EncodedExample, LabelSpace, Vocabulary, encode, preprocess_text
from .descriptors import TESTS, ClassDescriptorSet, build_descriptor_channel_input
from .errors import ArtifactError, DataError
from .numerics import NonFiniteError, Parameter, Tape, Tensor

CHECKPOINT_MAGIC = b"DCNC"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Hyperparameters for the dual-channel classifier."""

    mode: str = "multi_class"
    d_embed: int = 300
    gru_units: int = 128
    dropout_rate: float = 0.5
    recurrent_dropout_rate: float = 0.5
    descriptor_test: str = "chi2"
    descriptor_dimension: int = 100
    text_length: int = 80
    descriptor_length: int = 0  # 0 means: use text_length
    vocabulary_max: int = 130_000
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    share_embedding: bool = True
    optimizer: str = "adam"

    def __post_init__(self):
        if self.mode not in ("multi_class", "multi_label"):
            raise DataError(f"unknown mode {self.mode!r}")
        if self.descriptor_test not in TESTS:
            raise DataError(f"unknown descriptor test {self.descriptor_test!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")
        for name in ("d_embed", "gru_units", "descriptor_dimension", "text_length", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.vocabulary_max < 3:
            raise DataError("vocabulary_max must be >= 3")
        if self.descriptor_length < 0 or self.patience < 0:
            raise DataError("descriptor_length and patience must be >= 0")
        for name in ("dropout_rate", "recurrent_dropout_rate"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise DataError(f"{name} must be in [0, 1)")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")

    @property
    def resolved_descriptor_length(self) -> int:
        return self.descriptor_length if self.descriptor_length else self.text_length


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_metric: float
    batch_losses: list[float] = field(default_factory=list, repr=False)


class DualChannelModel:
    """The assembled two-channel network."""

    def __init__(self, config: ModelConfig, vocab_size: int, n_classes: int, dtype=np.float32):
        self.config = config
        self.vocab_size = vocab_size
        self.n_classes = n_classes
        self.dtype = dtype
        self.history: list[EpochStats] = []
        rng = np.random.default_rng([config.seed, 0])

        self.embedding = nn.EmbeddingLayer(vocab_size, config.d_embed, rng, dtype, name="embedding")
        if config.share_embedding:
            self.desc_embedding = self.embedding
        else:
            self.desc_embedding = nn.EmbeddingLayer(vocab_size, config.d_embed, rng, dtype, name="desc_embedding")
        g = config.gru_units
        self.text_fwd = nn.GRUCell(config.d_embed, g, rng, dtype, name="text_fwd")
        self.text_bwd = nn.GRUCell(config.d_embed, g, rng, dtype, name="text_bwd")
        self.desc_fwd = nn.GRUCell(config.d_embed, g, rng, dtype, name="desc_fwd")
        self.desc_bwd = nn.GRUCell(config.d_embed, g, rng, dtype, name="desc_bwd")
        self.attention = nn.AttentionLayer(2 * g, 2 * g, rng, dtype, name="attention")
        head_activation = "softmax" if config.mode == "multi_class" else "sigmoid"
        # max-pool + avg-pool (2*2g) plus the attention context (2g)
        self.head = nn.DenseLayer(6 * g, n_classes, head_activation, rng, dtype, name="head")

    def parameters(self) -> list[Parameter]:
        layers = [self.embedding]
        if self.desc_embedding is not self.embedding:
            layers.append(self.desc_embedding)
        layers += [self.text_fwd, self.text_bwd, self.desc_fwd, self.desc_bwd, self.attention, self.head]
        params: list[Parameter] = []
        for layer in layers:
            params.extend(layer.parameters())
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _recurrent_masks(self, batch: int, training: bool, rng) -> list[Tensor | None]:
        rate = self.config.recurrent_dropout_rate
        if not training or rate == 0.0:
            return [None] * 4
        return [nn.dropout_mask(rng, (batch, self.config.gru_units), rate, self.dtype) for _ in range(4)]

    def forward(self, text_ids: np.ndarray, desc_ids: np.ndarray, training: bool = False, rng=None) -> Tensor:
        """Per-class probabilities, shape (batch, n_classes)."""
        cfg = self.config
        text_lengths = (np.asarray(text_ids) != PAD_ID).sum(axis=1)
        desc_lengths = (np.asarray(desc_ids) != PAD_ID).sum(axis=1)
        masks = self._recurrent_masks(text_ids.shape[0], training, rng)

        emb_text = self.embedding.forward(text_ids)
        emb_text = nn.dropout(emb_text, cfg.dropout_rate, training, rng)
        hidden_text = nn.bigru_forward(self.text_fwd, self.text_bwd, emb_text, text_lengths, masks[0], masks[1])
        pooled_max = nn.max_pool_time(hidden_text, text_lengths)
        pooled_avg = nn.avg_pool_time(hidden_text, text_lengths)

        emb_desc = self.desc_embedding.forward(desc_ids)
        emb_desc = nn.dropout(emb_desc, cfg.dropout_rate, training, rng)
        hidden_desc = nn.bigru_forward(self.desc_fwd, self.desc_bwd, emb_desc, desc_lengths, masks[2], masks[3])
        context, _ = nn.attention_forward(self.attention, hidden_desc, desc_lengths)

        features = nm.concat([pooled_max, pooled_avg, context], axis=1)
        features = nn.dropout(features, cfg.dropout_rate, training, rng)
        return self.head.forward(features)

    def loss(self, probs: Tensor, targets: np.ndarray) -> Tensor:
        if self.config.mode == "multi_class":
            return nn.categorical_cross_entropy(probs, targets)
        return nn.binary_cross_entropy(probs, targets)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def restore(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.data[...] = state[p.name]


def encode_examples(
    docs: list[Document],
    vocab: Vocabulary,
    descriptors: ClassDescriptorSet,
    label_space: LabelSpace,
    config: ModelConfig,
) -> list[EncodedExample]:
    examples = []
    for doc in docs:
        target = np.zeros(len(label_space), dtype=np.float32)
        for j in doc.labels:
            target[j] = 1.0
        examples.append(
            EncodedExample(
                text_ids=encode(doc.tokens, vocab, config.text_length),
                descriptor_ids=build_descriptor_channel_input(
                    doc.tokens, descriptors, vocab, config.resolved_descriptor_length
                ),
                target=target,
            )
        )
    return examples


def batch_arrays(examples: list[EncodedExample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    text = np.stack([ex.text_ids for ex in examples])
    desc = np.stack([ex.descriptor_ids for ex in examples])
    targets = np.stack([ex.target for ex in examples])
    return text, desc, targets


def predict_probabilities(model: DualChannelModel, examples: list[EncodedExample], batch_size: int = 128) -> np.ndarray:
    text, desc, _ = batch_arrays(examples)
    rows = []
    for start in range(0, len(examples), batch_size):
        probs = model.forward(text[start : start + batch_size], desc[start : start + batch_size], training=False)
        rows.append(probs.data)
    return np.concatenate(rows, axis=0)


def _validation_metric(model: DualChannelModel, examples: list[EncodedExample]) -> float:
    probs = predict_probabilities(model, examples)
    targets = np.stack([ex.target for ex in examples])
    if model.config.mode == "multi_class":
        return metrics.accuracy(list(probs.argmax(axis=1)), list(targets.argmax(axis=1)))
    gold_sets = [set(np.nonzero(t)[0]) for t in targets]
    return metrics.macro_auc(probs, gold_sets, model.n_classes)


def train(
    model: DualChannelModel,
    train_examples: list[EncodedExample],
    val_examples: list[EncodedExample],
) -> list[EpochStats]:
    """Mini-batch training with early stopping on the validation metric.

    Keeps the best-validation parameters; stops after ``patience`` epochs
    without improvement (patience 0 runs exactly one epoch) or at max_epochs.
    Descriptors and vocabulary must come from the training split only.
    """
    cfg = model.config
    rng = np.random.default_rng([cfg.seed, 1])
    text, desc, targets = batch_arrays(train_examples)
    n = len(train_examples)
    params = model.parameters()

    best_metric = -np.inf
    best_state = model.snapshot()
    epochs_without_improvement = 0
    step = 0
    model.history = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses: list[float] = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            model.zero_grad()
            with Tape() as tape:
                probs = model.forward(text[idx], desc[idx], training=True, rng=rng)
                loss = model.loss(probs, targets[idx])
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            nm.backward(loss, tape)
            step += 1
            if cfg.optimizer == "adam":
                nm.adam_step(params, cfg.learning_rate, step_count=step)
            else:
                nm.sgd_step(params, cfg.learning_rate)
            batch_losses.append(loss_value)

        val_metric = _validation_metric(model, val_examples)
        stats = EpochStats(epoch, float(np.mean(batch_losses)), val_metric, batch_losses)
        model.history.append(stats)

        if val_metric > best_metric:
            best_metric = val_metric
            best_state = model.snapshot()
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
        if epochs_without_improvement >= cfg.patience:
            break

    model.restore(best_state)
    return model.history


def predict(
    model: DualChannelModel,
    vocab: Vocabulary,
    descriptors: ClassDescriptorSet,
    text: str,
    threshold: float | None = None,
) -> tuple[list[int], np.ndarray]:
    """Label indices plus the per-class probability row for one raw text.

    Multi-class returns the argmax singleton (ties break to the lowest class
    index); multi-label returns every class strictly above ``threshold``.
    """
    tokens = preprocess_text(text)
    cfg = model.config
    text_ids = encode(tokens, vocab, cfg.text_length)[None, :]
    desc_ids = build_descriptor_channel_input(tokens, descriptors, vocab, cfg.resolved_descriptor_length)[None, :]
    probs = model.forward(text_ids, desc_ids, training=False).data[0]
    if cfg.mode == "multi_class":
        return [int(probs.argmax())], probs
    if threshold is None:
        raise DataError("multi_label prediction requires a threshold")
    return [int(j) for j in np.nonzero(probs > threshold)[0]], probs


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class CheckpointMeta:
    label_names: list[str]
    vocab_sha256: str
    descriptor_sha256: str
    epoch: int
    val_metric: float


def save_checkpoint(
    model: DualChannelModel,
    path,
    label_names,
    vocab_sha256: str = "",
    descriptor_sha256: str = "",
    epoch: int = 0,
    val_metric: float = 0.0,
) -> None:
    """Self-describing binary: magic, version, JSON header, f32 LE parameters."""
    header = {
        "config": asdict(model.config),
        "vocab_size": model.vocab_size,
        "n_classes": model.n_classes,
        "label_names": list(label_names),
        "vocab_sha256": vocab_sha256,
        "descriptor_sha256": descriptor_sha256,
        "epoch": epoch,
        "val_metric": val_metric,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name_bytes = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ArtifactError("truncated checkpoint file")
    return data


def load_checkpoint(path) -> tuple[DualChannelModel, CheckpointMeta]:
    """Rebuild the model from a checkpoint; forward outputs match bit-exactly."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise ArtifactError(f"{path}: not a descnet checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise ArtifactError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        try:
            header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
            config = ModelConfig(**header["config"])
            model = DualChannelModel(config, header["vocab_size"], header["n_classes"], dtype=np.float32)
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"{path}: bad checkpoint header ({e})") from None

        by_name = {p.name: p for p in model.parameters()}
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4))
        if n_params != len(by_name):
            raise ArtifactError(f"{path}: {n_params} parameter records, model expects {len(by_name)}")
        for _ in range(n_params):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            if name not in by_name:
                raise ArtifactError(f"{path}: unknown parameter {name!r}")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
            param = by_name[name]
            if tuple(shape) != param.data.shape:
                raise ArtifactError(
                    f"{path}: parameter {name!r} has shape {tuple(shape)}, model expects {param.data.shape}"
                )
            count = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
            param.data[...] = values.reshape(shape).astype(np.float32)
        if fh.read(1):
            raise ArtifactError(f"{path}: trailing bytes after parameter records")

    meta = CheckpointMeta(
        label_names=list(header["label_names"]),
        vocab_sha256=header["vocab_sha256"],
        descriptor_sha256=header["descriptor_sha256"],
        epoch=int(header["epoch"]),
        val_metric=float(header["val_metric"]),
    )
    return model, meta
