"""Command-line orchestration: extract-descriptors, train, evaluate, predict, verify.

Configuration is a flat ``key = value`` file plus per-key CLI flag overrides;
the effective configuration is echoed into the output directory so every run
is reproducible from its artifacts. Exit codes: 0 success, 2 input error,
3 numerical failure, 4 artifact incompatibility.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import metrics, nn
from .corpus import LabelSpace, build_vocabulary, load_dataset, load_vocabulary, save_vocabulary
from .descriptors import extract_descriptors, load_descriptors, save_descriptors
from .errors import ArtifactError, DataError
from .model import (
    DualChannelModel,
    ModelConfig,
    encode_examples,
    file_sha256,
    load_checkpoint,
    predict,
    predict_probabilities,
    save_checkpoint,
    train,
)
from .numerics import NonFiniteError
from .verify import run_all

COMMANDS = ("extract-descriptors", "train", "evaluate", "predict", "verify")


@dataclass
class RunConfig:
    """Every tunable of every command, flat for key=value config files."""

    # task and data
    mode: str = "multi_class"
    format: str = "csv"
    labels: str = ""  # comma-separated label names, in order
    train_path: str = ""
    val_path: str = ""
    test_path: str = ""
    embedding_path: str = ""
    descriptor_path: str = ""
    vocab_path: str = ""
    checkpoint_path: str = ""
    threshold_path: str = ""
    input_path: str = ""
    text: str = ""
    out_dir: str = "out"
    threshold: float = -1.0  # -1 means: not set
    val_fraction: float = 0.1
    auto_extract: bool = False
    drop_overlength: bool = False
    min_doc_frequency: int = 2
    # model hyperparameters (mirror ModelConfig)
    d_embed: int = 300
    gru_units: int = 128
    dropout_rate: float = 0.5
    recurrent_dropout_rate: float = 0.5
    descriptor_test: str = "chi2"
    descriptor_dimension: int = 100
    text_length: int = 80
    descriptor_length: int = 0
    vocabulary_max: int = 130_000
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    share_embedding: bool = True
    optimizer: str = "adam"

    def model_config(self) -> ModelConfig:
        keys = {f.name for f in fields(ModelConfig)}
        return ModelConfig(**{k: v for k, v in asdict(self).items() if k in keys})

    def label_space(self) -> LabelSpace:
        names = tuple(name.strip() for name in self.labels.split(",") if name.strip())
        if not names:
            raise DataError("no labels configured: set 'labels = A,B,...'")
        return LabelSpace(names, self.mode)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "str":
        return raw
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise DataError(f"config key {key!r}: cannot parse {raw!r} as {kind}")


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise DataError(f"{path}: line {lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw.strip())
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        for key, value in parse_config_file(args.config).items():
            setattr(config, key, value)
    for f in fields(RunConfig):
        override = getattr(args, f.name, None)
        if override is not None:
            setattr(config, f.name, _coerce(f.name, str(override)) if isinstance(override, str) else override)
    return config


def echo_config(config: RunConfig) -> Path:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(RunConfig)]
    (out_dir / "effective_config.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_dir


def _require(config: RunConfig, *keys: str) -> None:
    for key in keys:
        if not getattr(config, key):
            raise DataError(f"missing required option {key!r} (config key or --{key.replace('_', '-')})")


def cmd_extract_descriptors(config: RunConfig) -> int:
    _require(config, "train_path", "labels")
    out_dir = echo_config(config)
    labels = config.label_space()
    docs = load_dataset(config.train_path, config.format, labels)
    vocab = build_vocabulary(docs, config.vocabulary_max)
    descriptors = extract_descriptors(
        docs, vocab, labels, config.descriptor_test, config.descriptor_dimension, config.min_doc_frequency
    )
    path = out_dir / "descriptors.tsv"
    save_descriptors(descriptors, path)
    print(f"wrote {path} ({config.descriptor_test}, n={config.descriptor_dimension})")
    for name, entries in zip(descriptors.class_names, descriptors.entries):
        preview = ", ".join(tok for tok, _ in entries[:10])
        print(f"{name}: {preview}")
    return 0


def cmd_train(config: RunConfig) -> int:
    _require(config, "train_path", "labels")
    out_dir = echo_config(config)
    labels = config.label_space()
    model_config = config.model_config()

    docs = load_dataset(config.train_path, config.format, labels)
    if config.val_path:
        train_docs, val_docs = docs, load_dataset(config.val_path, config.format, labels)
    else:
        order = np.random.default_rng([config.seed, 2]).permutation(len(docs))
        n_val = max(1, int(len(docs) * config.val_fraction))
        val_docs = [docs[i] for i in order[:n_val]]
        train_docs = [docs[i] for i in order[n_val:]]
    if config.drop_overlength:
        train_docs = [d for d in train_docs if len(d.tokens) <= config.text_length]
    if not train_docs:
        raise DataError("no training documents left after filtering")

    vocab = build_vocabulary(train_docs, config.vocabulary_max)
    if config.descriptor_path:
        descriptors = load_descriptors(config.descriptor_path)
    elif config.auto_extract:
        descriptors = extract_descriptors(
            train_docs, vocab, labels, config.descriptor_test, config.descriptor_dimension, config.min_doc_frequency
        )
    else:
        raise DataError("no descriptor file: pass descriptor_path or set auto_extract = true")

    train_examples = encode_examples(train_docs, vocab, descriptors, labels, model_config)
    val_examples = encode_examples(val_docs, vocab, descriptors, labels, model_config)

    model = DualChannelModel(model_config, len(vocab), len(labels))
    if config.embedding_path:
        covered = nn.load_pretrained_embeddings(model.embedding, config.embedding_path, vocab.token_to_id)
        print(f"pretrained embeddings cover {covered}/{len(vocab)} vocabulary rows")

    history = train(model, train_examples, val_examples)

    vocab_file = out_dir / "vocab.tsv"
    save_vocabulary(vocab, vocab_file)
    descriptor_file = out_dir / "descriptors.tsv"
    save_descriptors(descriptors, descriptor_file)

    history_file = out_dir / "history.csv"
    with open(history_file, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_metric\n")
        for stats in history:
            fh.write(f"{stats.epoch},{stats.train_loss!r},{stats.val_metric!r}\n")

    threshold = None
    if config.mode == "multi_label":
        probs = predict_probabilities(model, val_examples)
        gold_sets = [set(np.nonzero(ex.target)[0]) for ex in val_examples]
        threshold = metrics.select_threshold(probs, gold_sets)
        (out_dir / "threshold.txt").write_text(f"{threshold}\n", encoding="utf-8")

    best = max(history, key=lambda s: s.val_metric)
    checkpoint_file = out_dir / "checkpoint.bin"
    save_checkpoint(
        model,
        checkpoint_file,
        labels.names,
        vocab_sha256=file_sha256(vocab_file),
        descriptor_sha256=file_sha256(descriptor_file),
        epoch=best.epoch,
        val_metric=best.val_metric,
    )
    print(f"trained {len(history)} epochs; best val_metric {best.val_metric!r} at epoch {best.epoch}")
    print(f"wrote {checkpoint_file}, {history_file}, {vocab_file}, {descriptor_file}")
    if threshold is not None:
        print(f"selected threshold {threshold}")
    return 0


def _load_bundle(config: RunConfig):
    _require(config, "checkpoint_path")
    checkpoint_path = Path(config.checkpoint_path)
    model, meta = load_checkpoint(checkpoint_path)
    vocab_path = Path(config.vocab_path) if config.vocab_path else checkpoint_path.parent / "vocab.tsv"
    descriptor_path = (
        Path(config.descriptor_path) if config.descriptor_path else checkpoint_path.parent / "descriptors.tsv"
    )
    if meta.vocab_sha256 and file_sha256(vocab_path) != meta.vocab_sha256:
        raise ArtifactError(f"{vocab_path}: content hash does not match the checkpoint's vocabulary")
    if meta.descriptor_sha256 and file_sha256(descriptor_path) != meta.descriptor_sha256:
        raise ArtifactError(f"{descriptor_path}: content hash does not match the checkpoint's descriptors")
    vocab = load_vocabulary(vocab_path)
    descriptors = load_descriptors(descriptor_path)
    return model, meta, vocab, descriptors


def _resolve_threshold(config: RunConfig, checkpoint_path: Path) -> float:
    if config.threshold >= 0:
        return config.threshold
    path = Path(config.threshold_path) if config.threshold_path else checkpoint_path.parent / "threshold.txt"
    if not path.exists():
        raise DataError(
            f"multi_label needs a threshold: none at {path}; pass --threshold or --threshold-path "
            "(train writes threshold.txt next to the checkpoint)"
        )
    try:
        return float(path.read_text().strip())
    except ValueError:
        raise DataError(f"{path}: expected a single decimal threshold")


def cmd_evaluate(config: RunConfig) -> int:
    _require(config, "test_path")
    out_dir = echo_config(config)
    model, meta, vocab, descriptors = _load_bundle(config)
    labels = LabelSpace(tuple(meta.label_names), model.config.mode)
    docs = load_dataset(config.test_path, config.format, labels)
    examples = encode_examples(docs, vocab, descriptors, labels, model.config)
    probs = predict_probabilities(model, examples)
    gold = [set(np.nonzero(ex.target)[0]) for ex in examples]

    threshold = None
    if model.config.mode == "multi_label":
        threshold = _resolve_threshold(config, Path(config.checkpoint_path))
        predicted = [set(np.nonzero(row > threshold)[0]) for row in probs]
    else:
        predicted = [{int(row.argmax())} for row in probs]

    report = metrics.build_report(model.config.mode, labels.names, predicted, gold, probs, threshold)
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_predict(config: RunConfig) -> int:
    model, meta, vocab, descriptors = _load_bundle(config)
    threshold = None
    if model.config.mode == "multi_label":
        threshold = _resolve_threshold(config, Path(config.checkpoint_path))

    if config.text:
        texts = [config.text]
    elif config.input_path:
        texts = Path(config.input_path).read_text(encoding="utf-8").splitlines()
    else:
        raise DataError("nothing to predict: pass --text or --input-path")

    for raw in texts:
        picked, probs = predict(model, vocab, descriptors, raw, threshold)
        names = "|".join(meta.label_names[j] for j in picked)
        prob_str = " ".join(f"{p:.6f}" for p in probs)
        print(f"{names}\t{prob_str}")
    return 0


def cmd_verify(config: RunConfig, quick: bool = False, inject_fault: bool = False) -> int:
    results = run_all(quick=quick, inject_fault=inject_fault)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descnet",
        description="Dual-channel GRU text classifier with statistically extracted class descriptors.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=f"run {command}")
        sub.add_argument("--config", default="", help="flat key = value config file")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            sub.add_argument(flag, dest=f.name, default=None, metavar=f.type.upper(),
                             help=f"override {f.name} (default: {getattr(defaults, f.name)!r})")
        if command == "verify":
            sub.add_argument("--quick", action="store_true", help="smaller sample counts")
            sub.add_argument("--inject-fault", action="store_true",
                             help="corrupt one adjoint to prove the checks catch it (must FAIL)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = build_run_config(args)
        if args.command == "extract-descriptors":
            return cmd_extract_descriptors(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "predict":
            return cmd_predict(config)
        return cmd_verify(config, quick=args.quick, inject_fault=args.inject_fault)
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NonFiniteError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except ArtifactError as e:
        print(f"artifact error: {e}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
