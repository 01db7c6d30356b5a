"""Per-task retention masks, the per-sample dropout comparator, and
skip-reuse analytics.

A task mask is a fixed binary vector per hidden layer, drawn once when a task
starts and reused for every forward and backward pass of that task (training
and evaluation). Masking a unit zeroes its outgoing non-recurrent activation,
so the unit receives no gradient along that edge. The retention ratio is the
probability that a unit stays active for a task; a unit active for one task,
masked for the next s-1 tasks and active again s tasks later carries its
knowledge across that gap with probability (1-p)^(s-1) * p.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError, Tensor, mul


class RegistryError(ValueError):
    """Mask registry misuse: duplicate task, or retrieval before generation."""


class InsufficientDataError(ValueError):
    """Analytics requested on fewer tasks than the statistic needs."""


def _validate_ratio(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"retention ratio must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class TaskMask:
    """Immutable binary retention vectors for one task, one per masked layer."""

    task_id: int
    p: float
    layer_masks: tuple[np.ndarray, ...]

    def __post_init__(self):
        for m in self.layer_masks:
            m.setflags(write=False)

    def layer(self, index: int = 0) -> np.ndarray:
        return self.layer_masks[index]

    def as_float(self, index: int = 0) -> np.ndarray:
        return self.layer_masks[index].astype(np.float64)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "p": self.p,
            "layer_masks": [m.astype(int).tolist() for m in self.layer_masks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskMask":
        masks = tuple(np.asarray(m, dtype=np.uint8) for m in d["layer_masks"])
        return cls(task_id=int(d["task_id"]), p=float(d["p"]), layer_masks=masks)


class MaskRegistry:
    """Write-once store of task masks, keyed by task id.

    Generation is serialized through the registry's own seeded generator, so
    an identical seed reproduces the identical mask sequence. Retrieval always
    returns the same object that generation stored.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._masks: dict[int, TaskMask] = {}

    def __len__(self) -> int:
        return len(self._masks)

    def __contains__(self, task_id: int) -> bool:
        return task_id in self._masks

    def task_ids(self) -> list[int]:
        return list(self._masks)

    def generate(self, task_id: int, layer_widths: list[int], p: float) -> TaskMask:
        """Draw independent Bernoulli(p) retention bits for every unit."""
        p = _validate_ratio(p)
        if task_id in self._masks:
            raise RegistryError(f"task {task_id} already has a mask")
        layers = tuple(
            (self._rng.random(int(width)) < p).astype(np.uint8) for width in layer_widths
        )
        mask = TaskMask(task_id=int(task_id), p=p, layer_masks=layers)
        self._masks[mask.task_id] = mask
        return mask

    def register(self, mask: TaskMask) -> TaskMask:
        """Adopt an externally built mask (deserialization, tests)."""
        if mask.task_id in self._masks:
            raise RegistryError(f"task {mask.task_id} already has a mask")
        self._masks[mask.task_id] = mask
        return mask

    def get(self, task_id: int) -> TaskMask:
        try:
            return self._masks[task_id]
        except KeyError:
            raise RegistryError(f"no mask registered for task {task_id}") from None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rng_state": self._rng.bit_generator.state,
            "masks": [self._masks[t].to_dict() for t in self._masks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaskRegistry":
        reg = cls(int(d["seed"]))
        if "rng_state" in d:
            reg._rng.bit_generator.state = d["rng_state"]
        for m in d["masks"]:
            reg.register(TaskMask.from_dict(m))
        return reg

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MaskRegistry":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def apply_mask(y: Tensor, mask) -> Tensor:
    """Multiply activations by a binary mask, broadcast over the batch axis.

    Recorded on the active tape, so masked units receive zero gradient along
    this edge. ``mask`` is a width-n vector or a per-sample (batch, n) array.
    """
    m = np.asarray(mask, dtype=np.float64)
    if m.shape[-1] != y.data.shape[-1]:
        raise ShapeError(f"mask width {m.shape[-1]} does not match activations {y.data.shape}")
    return mul(y, Tensor(m, requires_grad=False))


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Fresh, unregistered Bernoulli(p) retention mask; new draw every call."""
    p = _validate_ratio(p)
    return (rng.random(shape) < p).astype(np.uint8)


def skip_transfer_probability(p: float, s: int) -> float:
    """Probability a unit active now is next active exactly ``s`` tasks later."""
    p = _validate_ratio(p)
    if int(s) != s or s < 1:
        raise ValueError(f"step count must be an integer >= 1, got {s}")
    return (1.0 - p) ** (int(s) - 1) * p


@dataclass
class TransferStats:
    """Empirical gap-to-next-activation counts, per unit and aggregated.

    ``unit_counts[u, s-1]`` counts activations of unit ``u`` whose next
    activation came exactly ``s`` tasks later; ``unit_origins[u]`` counts the
    activations eligible to produce a gap of up to ``max_step`` (origins close
    enough to the stream end are excluded so every gap length is observable).
    Gaps longer than ``max_step`` stay in the denominator, which is why the
    per-unit frequencies sum to at most 1.
    """

    max_step: int
    unit_counts: np.ndarray = field(repr=False)
    unit_origins: np.ndarray = field(repr=False)

    def frequency(self, s: int) -> float:
        if not 1 <= s <= self.max_step:
            raise ValueError(f"step must lie in [1, {self.max_step}]")
        total = int(self.unit_origins.sum())
        if total == 0:
            return 0.0
        return float(self.unit_counts[:, s - 1].sum()) / total

    def per_unit_frequencies(self) -> np.ndarray:
        """(units, max_step) array; rows with no origins are zero."""
        denom = np.maximum(self.unit_origins, 1)[:, None]
        return self.unit_counts / denom


def empirical_skip_stats(registry: MaskRegistry, max_step: int = 4) -> TransferStats:
    """Measure gap-to-next-activation frequencies over a registry's masks.

    Tasks are taken in registration order; all layers are pooled along the
    unit axis. Needs at least ``max_step + 1`` registered tasks so that a gap
    of ``max_step`` is observable from at least one origin.
    """
    ids = registry.task_ids()
    if len(ids) < 2:
        raise InsufficientDataError("need at least 2 registered masks")
    if max_step < 1:
        raise ValueError("max_step must be >= 1")
    if len(ids) < max_step + 1:
        raise InsufficientDataError(
            f"need at least {max_step + 1} masks to observe a gap of {max_step}"
        )
    rows = [np.concatenate([m for m in registry.get(t).layer_masks]) for t in ids]
    grid = np.stack(rows)  # (tasks, units)
    n_tasks, n_units = grid.shape
    cutoff = n_tasks - max_step  # origins at task index < cutoff (0-based)
    counts = np.zeros((n_units, max_step), dtype=np.int64)
    origins = np.zeros(n_units, dtype=np.int64)
    for u in range(n_units):
        active = np.flatnonzero(grid[:, u])
        if active.size == 0:
            continue
        eligible = active < cutoff
        origins[u] = int(eligible.sum())
        if active.size < 2:
            continue
        gaps = np.diff(active)
        for gap, ok in zip(gaps, eligible[:-1]):
            if ok and gap <= max_step:
                counts[u, gap - 1] += 1
    return TransferStats(max_step=max_step, unit_counts=counts, unit_origins=origins)


def mask_overlap(a: TaskMask, b: TaskMask) -> list[float]:
    """Per-layer fraction of units active in both masks."""
    if len(a.layer_masks) != len(b.layer_masks):
        raise ShapeError("masks cover different layer counts")
    overlaps = []
    for ma, mb in zip(a.layer_masks, b.layer_masks):
        if ma.shape != mb.shape:
            raise ShapeError(f"layer widths differ: {ma.shape} vs {mb.shape}")
        overlaps.append(float((ma & mb).sum()) / ma.size)
    return overlaps
