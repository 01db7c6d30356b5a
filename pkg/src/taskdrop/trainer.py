"""Sequential task training, evaluation over seen tasks, and metrics.

A run walks a task stream in order, training each task with plain mini-batch
SGD on cross-entropy and, after every task, testing all tasks seen so far.
The resulting lower-triangular accuracy matrix feeds the reported metrics:
averaged accuracy over seen tasks, the forgetting ratio (accuracy rescaled
between a random classifier at -100 and joint training at 0, in percent),
and the pairwise mutual-transfer score used to rank task relatedness.

Training a task hands the loop only that task's data; earlier tasks' training
splits are structurally out of reach.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, SentimentModel, Variant
from .numerics import Tape, backward, cross_entropy_logits
from .seeding import Stream, derive_seed, substream
from .taskgen import Dataset, EmbeddingTable, Task


class SequencingError(RuntimeError):
    """Tasks touched out of stream order, or an untrained task evaluated."""


class DataError(ValueError):
    """A metric was requested from an incomplete accuracy matrix."""


class MetricError(ValueError):
    """Degenerate metric inputs (joint accuracy not above random)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1.0
    eval_batch_size: int = 256


@dataclass
class TaskStream:
    """An ordered pass over one task family.

    ``tasks`` stay in family order; ``ordering`` is the permutation actually
    trained, so position ``t`` (1-based) trains ``tasks[ordering[t-1]]``.
    """

    tasks: list[Task]
    ordering: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if sorted(self.ordering) != list(range(len(self.tasks))):
            raise ValueError(f"ordering {self.ordering} is not a permutation of the task family")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def ordered(self) -> list[Task]:
        return [self.tasks[i] for i in self.ordering]


def orderings_list(num_tasks: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """``count`` seeded random task orderings."""
    rng = substream(seed, Stream.ORDERINGS)
    return [tuple(int(x) for x in rng.permutation(num_tasks)) for _ in range(count)]


class AccuracyMatrix:
    """a[tau][t]: test accuracy on the tau-th seen task after training t tasks.

    Indices are 1-based stream positions; only the lower triangle (tau <= t)
    is ever populated.
    """

    def __init__(self, num_tasks: int):
        self.num_tasks = num_tasks
        self.values = np.full((num_tasks, num_tasks), np.nan)

    def record(self, tau: int, t: int, acc: float) -> None:
        if not 1 <= tau <= t <= self.num_tasks:
            raise ValueError(f"require 1 <= tau <= t <= {self.num_tasks}, got tau={tau}, t={t}")
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {acc}")
        self.values[tau - 1, t - 1] = acc

    def accuracy(self, tau: int, t: int) -> float:
        v = self.values[tau - 1, t - 1]
        if np.isnan(v):
            raise DataError(f"accuracy a[{tau}][{t}] was never recorded")
        return float(v)

    def column(self, t: int) -> np.ndarray:
        """Accuracies of tasks 1..t after training t tasks."""
        if not 1 <= t <= self.num_tasks:
            raise ValueError(f"t must lie in [1, {self.num_tasks}], got {t}")
        return self.values[:t, t - 1]

    def to_lists(self) -> list[list[float]]:
        return [[float(v) for v in self.column(t)] for t in range(1, self.num_tasks + 1)]

    @classmethod
    def from_lists(cls, columns: list[list[float]]) -> "AccuracyMatrix":
        matrix = cls(len(columns))
        for t, col in enumerate(columns, start=1):
            for tau, acc in enumerate(col, start=1):
                matrix.record(tau, t, acc)
        return matrix


# -- training loops ---------------------------------------------------------


def _sgd_step(model: SentimentModel, params, task_id: int, tokens, labels, lr: float) -> float:
    with Tape() as tape:
        batch = model.embed_tokens(tokens)
        logits = model.forward(task_id, batch, train=True)
        loss = cross_entropy_logits(logits, labels)
    backward(tape, loss)
    for p in params:
        if p.grad is not None:
            p.data -= lr * p.grad
    for p in model.all_parameters():
        p.grad = None
    return float(loss.data)


def train_task(model: SentimentModel, task: Task, position: int,
               config: TrainConfig, data_rng: np.random.Generator) -> list[float]:
    """Train one task at stream position ``position`` (1-based, strict order).

    Generates and registers the task's mask (when the variant uses one)
    before the first step, then runs the configured epochs of mini-batch SGD
    over the variant's trainable parameters. Returns mean loss per epoch.
    """
    if position != len(model.trained_tasks) + 1:
        raise SequencingError(
            f"position {position} out of order; {len(model.trained_tasks)} tasks trained so far"
        )
    if task.task_id in model.trained_tasks:
        raise SequencingError(f"task {task.task_id} was already trained")
    model.begin_task(task.task_id)
    params = model.trainable_params(task.task_id, position)
    losses = []
    size = task.train.size
    for _ in range(config.epochs):
        order = data_rng.permutation(size)
        batch_losses = []
        for start in range(0, size, config.batch_size):
            rows = order[start:start + config.batch_size]
            tokens, labels = task.train.batch(rows)
            batch_losses.append(_sgd_step(model, params, task.task_id, tokens, labels, config.lr))
        losses.append(float(np.mean(batch_losses)))
    model.trained_tasks.append(task.task_id)
    return losses


def evaluate_with_head(model: SentimentModel, head_task_id: int, dataset: Dataset,
                       batch_size: int = 256) -> float:
    """Untraced accuracy of one head (with its task's mask, if any) on a split."""
    correct = 0
    for start in range(0, dataset.size, batch_size):
        rows = np.arange(start, min(start + batch_size, dataset.size))
        tokens, labels = dataset.batch(rows)
        logits = model.forward(head_task_id, model.embed_tokens(tokens), train=False)
        correct += int((np.argmax(logits.data, axis=1) == labels).sum())
    return correct / dataset.size


def evaluate_all(model: SentimentModel, stream: TaskStream, t: int,
                 config: TrainConfig) -> list[float]:
    """Accuracies of stream positions 1..t after t tasks were trained."""
    if t > len(model.trained_tasks):
        raise SequencingError(f"cannot evaluate through position {t}; "
                              f"only {len(model.trained_tasks)} tasks trained")
    return [
        evaluate_with_head(model, task.task_id, task.test, config.eval_batch_size)
        for task in stream.ordered()[:t]
    ]


def run_sequential(variant: Variant, stream: TaskStream, embedding: EmbeddingTable,
                   run_seed: int, model_cfg: ModelConfig,
                   train_cfg: TrainConfig) -> tuple[SentimentModel, AccuracyMatrix]:
    """One full sequential learning run; fills the whole accuracy matrix."""
    model = SentimentModel(variant, embedding.vectors, model_cfg, run_seed)
    data_rng = substream(run_seed, Stream.BATCH_SHUFFLE)
    matrix = AccuracyMatrix(stream.num_tasks)
    for position, task in enumerate(stream.ordered(), start=1):
        train_task(model, task, position, train_cfg, data_rng)
        for tau, acc in enumerate(evaluate_all(model, stream, position, train_cfg), start=1):
            matrix.record(tau, position, acc)
    return model, matrix


def run_joint(tasks: list[Task], embedding: EmbeddingTable, run_seed: int,
              model_cfg: ModelConfig, train_cfg: TrainConfig) -> tuple[SentimentModel, dict[int, float]]:
    """Train all tasks jointly (interleaved batches) and test each one.

    The upper-bound reference: every epoch shuffles together one pass over
    every task's training split, each batch updating the shared encoder and
    its own task's head.
    """
    model = SentimentModel(Variant.MULTI_TASK, embedding.vectors, model_cfg, run_seed)
    for task in tasks:
        model.begin_task(task.task_id)
    data_rng = substream(run_seed, Stream.BATCH_SHUFFLE)
    for _ in range(train_cfg.epochs):
        steps: list[tuple[int, np.ndarray]] = []
        for ti, task in enumerate(tasks):
            order = data_rng.permutation(task.train.size)
            for start in range(0, task.train.size, train_cfg.batch_size):
                steps.append((ti, order[start:start + train_cfg.batch_size]))
        data_rng.shuffle(steps)
        for ti, rows in steps:
            task = tasks[ti]
            params = model.trainable_params(task.task_id, position=0)
            tokens, labels = task.train.batch(rows)
            _sgd_step(model, params, task.task_id, tokens, labels, train_cfg.lr)
    model.trained_tasks = [task.task_id for task in tasks]
    accuracies = {
        task.task_id: evaluate_with_head(model, task.task_id, task.test, train_cfg.eval_batch_size)
        for task in tasks
    }
    return model, accuracies


# -- metrics ------------------------------------------------------------------


def random_accuracy(n_classes: int = 2) -> float:
    """Analytic accuracy of a random classifier on balanced labels."""
    return 1.0 / n_classes


def averaged_accuracy(matrix: AccuracyMatrix, t: int) -> float:
    """Mean accuracy over the first t tasks after training t tasks."""
    col = matrix.column(t)
    if np.isnan(col).any():
        raise DataError(f"accuracy column t={t} is incomplete")
    return float(col.mean())


def forgetting_ratio(matrix: AccuracyMatrix, t: int, random_acc, joint_acc) -> float:
    """Accuracy rescaled between random (-100) and joint training (0), in percent.

    ``random_acc`` and ``joint_acc`` align with stream positions 1..t. Joint
    accuracy must exceed random accuracy for every task.
    """
    col = matrix.column(t)
    if np.isnan(col).any():
        raise DataError(f"accuracy column t={t} is incomplete")
    rand = np.asarray(random_acc, dtype=np.float64)[:t]
    joint = np.asarray(joint_acc, dtype=np.float64)[:t]
    if rand.shape != (t,) or joint.shape != (t,):
        raise ValueError("need one random and one joint accuracy per seen task")
    if np.any(joint <= rand):
        raise MetricError("joint accuracy must exceed random accuracy for every task")
    per_task = (col - rand) / (joint - rand) - 1.0
    return float(per_task.mean() * 100.0)


@dataclass
class MetricsReport:
    """Aggregated metrics for one variant over a set of orderings."""

    variant: str
    p: float | None
    n_orderings: int
    averaged: dict[str, tuple[float, float]] = field(default_factory=dict)
    forgetting: dict[str, tuple[float, float]] = field(default_factory=dict)


def summarize_runs(variant: str, p: float | None, matrices: list[AccuracyMatrix],
                   orderings: list[tuple[int, ...]], joint_by_id: dict[int, float],
                   n_classes: int = 2) -> MetricsReport:
    """Mean/std of averaged accuracy and forgetting ratio at t=2 and t=T."""
    if len(matrices) != len(orderings) or not matrices:
        raise ValueError("need one ordering per accuracy matrix")
    num_tasks = matrices[0].num_tasks
    scopes = {"2": 2, "T": num_tasks} if num_tasks >= 2 else {"T": num_tasks}
    rand = random_accuracy(n_classes)
    report = MetricsReport(variant=variant, p=p, n_orderings=len(matrices))
    for name, t in scopes.items():
        averaged = []
        forgetting = []
        for matrix, ordering in zip(matrices, orderings):
            joint = [joint_by_id[task_index] for task_index in ordering[:t]]
            averaged.append(averaged_accuracy(matrix, t))
            forgetting.append(forgetting_ratio(matrix, t, [rand] * t, joint))
        report.averaged[name] = (float(np.mean(averaged)), float(np.std(averaged)))
        report.forgetting[name] = (float(np.mean(forgetting)), float(np.std(forgetting)))
    return report


# -- task relatedness ---------------------------------------------------------


def mta_matrix(tasks: list[Task], embedding: EmbeddingTable, seed: int,
               model_cfg: ModelConfig, train_cfg: TrainConfig) -> np.ndarray:
    """Pairwise mutual-transfer accuracy: symmetrized cross-task test accuracy
    of single-task models; the diagonal is each task's self-accuracy."""
    if len(tasks) < 2:
        raise ValueError("need at least 2 tasks for pairwise transfer")
    n = len(tasks)
    cross = np.zeros((n, n))
    for i, task in enumerate(tasks):
        run_seed = derive_seed(seed, Stream.PAIRWISE, i)
        stream = TaskStream(tasks=[task], ordering=(0,), seed=run_seed)
        model, _ = run_sequential(Variant.NO_MASKING, stream, embedding, run_seed,
                                  model_cfg, train_cfg)
        for j, other in enumerate(tasks):
            cross[i, j] = evaluate_with_head(model, task.task_id, other.test,
                                             train_cfg.eval_batch_size)
    mta = 0.5 * (cross + cross.T)
    np.fill_diagonal(mta, np.diag(cross))
    return mta


def select_tasks_by_mta(mta: np.ndarray, k: int, mode: str) -> list[int]:
    """Indices of the k tasks with the largest/smallest total off-diagonal
    transfer, ties broken by task index, returned in ascending index order."""
    n = mta.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if mode not in ("highest", "lowest"):
        raise ValueError(f"mode must be 'highest' or 'lowest', got {mode!r}")
    totals = mta.sum(axis=1) - np.diag(mta)
    if mode == "highest":
        ranked = sorted(range(n), key=lambda i: (-totals[i], i))
    else:
        ranked = sorted(range(n), key=lambda i: (totals[i], i))
    return sorted(ranked[:k])
