"""Synthetic binary-sentiment task families with a cross-task similarity knob.

Each task labels fixed-length token sequences by the polarity of the
sentiment tokens they contain. A family shares one sentiment lexicon; every
task additionally owns a private, pairwise-disjoint lexicon. The fraction of
label-carrying tokens drawn from the shared lexicon (``shared_signal``) is
the similarity knob: at 1.0 tasks are interchangeable, at 0.0 their signal
vocabularies are disjoint. Remaining positions hold neutral filler, and a
noise rate flips the polarity of individual sentiment tokens.

Generation is pure given the family seed, so any split can be rebuilt
on demand or exported/imported as JSONL.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .numerics import Tensor
from .seeding import Stream, substream


class ConfigError(ValueError):
    """Invalid family or experiment configuration."""


class VocabError(ValueError):
    """Token id outside the family vocabulary."""


@dataclass(frozen=True)
class FamilyConfig:
    """Template for generating a task family.

    ``shared_signal`` fixes the similarity knob for every task. Alternatively
    ``shared_signal_range`` draws each task's value uniformly from a range,
    and ``shared_signal_per_task`` pins one explicit value per task.
    """

    shared_signal: float = 0.5
    shared_signal_range: tuple[float, float] | None = None
    shared_signal_per_task: tuple[float, ...] | None = None
    shared_vocab: int = 40
    private_vocab: int = 40
    neutral_vocab: int = 100
    seq_len: int = 20
    train_size: int = 2000
    test_size: int = 500
    noise_rate: float = 0.1
    sentiment_density: float = 0.6
    embed_dim: int = 32

    def validate(self) -> None:
        if not 0.0 <= self.shared_signal <= 1.0:
            raise ConfigError(f"shared_signal must lie in [0, 1], got {self.shared_signal}")
        if self.shared_signal_range is not None:
            lo, hi = self.shared_signal_range
            if not 0.0 <= lo <= hi <= 1.0:
                raise ConfigError(f"shared_signal_range must satisfy 0 <= lo <= hi <= 1, got {(lo, hi)}")
        if self.shared_signal_per_task is not None:
            if any(not 0.0 <= s <= 1.0 for s in self.shared_signal_per_task):
                raise ConfigError("shared_signal_per_task values must lie in [0, 1]")
        for name in ("shared_vocab", "private_vocab"):
            v = getattr(self, name)
            if v < 2 or v % 2:
                raise ConfigError(f"{name} must be an even count >= 2, got {v}")
        if self.neutral_vocab < 1:
            raise ConfigError("neutral_vocab must be >= 1")
        if self.seq_len < 1:
            raise ConfigError("seq_len must be >= 1")
        for name in ("train_size", "test_size"):
            v = getattr(self, name)
            if v < 2 or v % 2:
                raise ConfigError(f"{name} must be even and >= 2 for exact label balance, got {v}")
        if not 0.0 <= self.noise_rate <= 0.5:
            raise ConfigError(f"noise_rate must lie in [0, 0.5], got {self.noise_rate}")
        if not 0.0 < self.sentiment_density <= 1.0:
            raise ConfigError(f"sentiment_density must lie in (0, 1], got {self.sentiment_density}")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Fully resolved recipe for one task's data."""

    task_id: int
    shared_signal: float
    shared_range: tuple[int, int]
    private_range: tuple[int, int]
    neutral_range: tuple[int, int]
    seq_len: int
    noise_rate: float
    sentiment_density: float
    train_size: int
    test_size: int

    def to_dict(self) -> dict:
        return asdict(self)


class EmbeddingTable:
    """Frozen token embeddings: one seeded unit-norm vector per token id."""

    def __init__(self, vectors: np.ndarray):
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float64)

    @property
    def vocab_size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def lookup(self, tokens) -> np.ndarray:
        idx = np.asarray(tokens, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab_size):
            raise VocabError("token id outside the embedding table")
        return self.vectors[idx]

    def to_json(self, path) -> None:
        payload = {str(i): row.tolist() for i, row in enumerate(self.vectors)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = [payload[str(i)] for i in range(len(payload))]
        return cls(np.asarray(rows, dtype=np.float64))


@dataclass
class Dataset:
    """Labelled token sequences for one task split."""

    tokens: np.ndarray
    labels: np.ndarray
    split: str

    @property
    def size(self) -> int:
        return self.tokens.shape[0]

    def batch(self, rows) -> tuple[np.ndarray, np.ndarray]:
        """Select a minibatch by row indices; the only read path trainers use."""
        return self.tokens[rows], self.labels[rows]

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for toks, label in zip(self.tokens, self.labels):
                fh.write(json.dumps({"tokens": toks.tolist(), "label": int(label)}))
                fh.write("\n")

    @classmethod
    def from_jsonl(cls, path, split: str = "import") -> "Dataset":
        tokens, labels = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                tokens.append(rec["tokens"])
                labels.append(rec["label"])
        return cls(
            tokens=np.asarray(tokens, dtype=np.int64),
            labels=np.asarray(labels, dtype=np.int64),
            split=split,
        )


@dataclass
class Task:
    """One generated task: id, resolved spec, and its two splits."""

    task_id: int
    spec: SyntheticTaskSpec
    train: Dataset
    test: Dataset


@dataclass
class TaskFamily:
    """A generated family: per-task specs plus the shared embedding table."""

    seed: int
    num_tasks: int
    config: FamilyConfig
    specs: list[SyntheticTaskSpec]
    embedding: EmbeddingTable = field(repr=False)

    @property
    def vocab_size(self) -> int:
        return self.embedding.vocab_size


def generate_task_family(family_seed: int, num_tasks: int, config: FamilyConfig) -> TaskFamily:
    """Resolve per-task specs and the embedding table for a family.

    Private lexicons are consecutive disjoint id ranges; the shared and
    neutral lexicons are common to all tasks. Deterministic in the seed.
    """
    config.validate()
    if num_tasks < 1:
        raise ConfigError(f"num_tasks must be >= 1, got {num_tasks}")
    rng = substream(family_seed, Stream.FAMILY)
    if config.shared_signal_per_task is not None:
        if len(config.shared_signal_per_task) != num_tasks:
            raise ConfigError(
                f"shared_signal_per_task lists {len(config.shared_signal_per_task)} values "
                f"for {num_tasks} tasks"
            )
        sigmas = np.asarray(config.shared_signal_per_task, dtype=np.float64)
    elif config.shared_signal_range is not None:
        lo, hi = config.shared_signal_range
        sigmas = rng.uniform(lo, hi, num_tasks)
    else:
        sigmas = np.full(num_tasks, config.shared_signal)
    shared = (0, config.shared_vocab)
    private_base = config.shared_vocab
    neutral_lo = private_base + num_tasks * config.private_vocab
    neutral = (neutral_lo, neutral_lo + config.neutral_vocab)
    specs = []
    for t in range(num_tasks):
        p_lo = private_base + t * config.private_vocab
        specs.append(
            SyntheticTaskSpec(
                task_id=t,
                shared_signal=float(sigmas[t]),
                shared_range=shared,
                private_range=(p_lo, p_lo + config.private_vocab),
                neutral_range=neutral,
                seq_len=config.seq_len,
                noise_rate=config.noise_rate,
                sentiment_density=config.sentiment_density,
                train_size=config.train_size,
                test_size=config.test_size,
            )
        )
    vocab = neutral[1]
    erng = substream(family_seed, Stream.EMBEDDING)
    vectors = erng.normal(size=(vocab, config.embed_dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return TaskFamily(
        seed=int(family_seed),
        num_tasks=num_tasks,
        config=config,
        specs=specs,
        embedding=EmbeddingTable(vectors),
    )


def _halves(span: tuple[int, int]) -> tuple[int, int, int]:
    lo, hi = span
    return lo, (lo + hi) // 2, hi


def generate_dataset(spec: SyntheticTaskSpec, split: str, size: int, seed: int) -> Dataset:
    """Sample one split: exactly balanced labels, seeded per (task, split).

    Every position is sentiment-bearing with probability ``sentiment_density``
    (else neutral filler); sentiment tokens come from the shared lexicon with
    probability ``shared_signal`` (else the task's private lexicon) and carry
    the sequence label's polarity unless flipped by the noise rate.
    """
    if size % 2:
        raise ValueError(f"size must be even for exact label balance, got {size}")
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    stream = Stream.TRAIN_DATA if split == "train" else Stream.TEST_DATA
    rng = substream(seed, stream, spec.task_id)
    half = size // 2
    labels = np.concatenate([np.ones(half, dtype=np.int64), np.zeros(half, dtype=np.int64)])
    n = spec.seq_len
    is_sentiment = rng.random((size, n)) < spec.sentiment_density
    from_shared = rng.random((size, n)) < spec.shared_signal
    flipped = rng.random((size, n)) < spec.noise_rate
    polarity = np.where(flipped, 1 - labels[:, None], labels[:, None])
    s_lo, s_mid, s_hi = _halves(spec.shared_range)
    p_lo, p_mid, p_hi = _halves(spec.private_range)
    shared_tok = np.where(
        polarity == 1,
        rng.integers(s_lo, s_mid, (size, n)),
        rng.integers(s_mid, s_hi, (size, n)),
    )
    private_tok = np.where(
        polarity == 1,
        rng.integers(p_lo, p_mid, (size, n)),
        rng.integers(p_mid, p_hi, (size, n)),
    )
    neutral_tok = rng.integers(spec.neutral_range[0], spec.neutral_range[1], (size, n))
    sentiment_tok = np.where(from_shared, shared_tok, private_tok)
    tokens = np.where(is_sentiment, sentiment_tok, neutral_tok)
    order = rng.permutation(size)
    return Dataset(tokens=tokens[order], labels=labels[order], split=split)


def build_tasks(family: TaskFamily) -> list[Task]:
    """Materialize both splits of every task in the family."""
    tasks = []
    for spec in family.specs:
        tasks.append(
            Task(
                task_id=spec.task_id,
                spec=spec,
                train=generate_dataset(spec, "train", spec.train_size, family.seed),
                test=generate_dataset(spec, "test", spec.test_size, family.seed),
            )
        )
    return tasks


def embed(dataset: Dataset, table: EmbeddingTable, batch_size: int | None = None):
    """Yield (Tensor of shape (b, n, d), labels) batches in dataset order."""
    size = dataset.size
    step = size if batch_size is None else int(batch_size)
    for start in range(0, size, step):
        rows = np.arange(start, min(start + step, size))
        tokens, labels = dataset.batch(rows)
        yield Tensor(table.lookup(tokens)), labels


# Preset families: (num_tasks, config). "hi" and "lo" pin the similarity knob
# high/low with six tasks each; "mix" spreads it per task across 24 tasks.
PRESETS: dict[str, tuple[int, FamilyConfig]] = {
    "hi": (6, FamilyConfig(shared_signal=0.9)),
    "mix": (24, FamilyConfig(shared_signal=0.5, shared_signal_range=(0.2, 0.9))),
    "lo": (6, FamilyConfig(shared_signal=0.2)),
}

# Default retention ratio per preset when an experiment does not set one.
PRESET_RETENTION = {"hi": 0.8, "mix": 0.5, "lo": 0.6}
