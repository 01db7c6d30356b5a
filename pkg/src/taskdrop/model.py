"""Sequence classifier assembly: embedding lookup, GRU encoder, per-task
retention masks, and one linear head per task.

Every training variant shares this skeleton and differs only in which mask
the encoder output sees and which parameters a task may update:

- ``TaskDrop``: a fixed random mask per task, generated when the task starts
  and applied at train and eval time.
- ``NoMasking``: full sharing; equivalent to TaskDrop with retention 1.
- ``StandardDropout``: a fresh per-sample mask on every training pass, none
  at eval; applied at the same site as the task masks.
- ``ClassifyOnly``: the encoder trains on the first task only.
- ``IndividualNetworks``: a fresh encoder per task.
- ``MultiTaskJoint``: one encoder, all heads, trained on all tasks jointly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum

import numpy as np

from .encoder import GruParams, encode_sequence
from .masking import MaskRegistry, dropout_mask
from .numerics import Tensor, add, embedding_lookup, matmul, mul
from .seeding import Stream, derive_seed, substream


class Variant(str, Enum):
    TASK_DROP = "TaskDrop"
    NO_MASKING = "NoMasking"
    CLASSIFY_ONLY = "ClassifyOnly"
    INDIVIDUAL = "IndividualNetworks"
    MULTI_TASK = "MultiTaskJoint"
    STANDARD_DROPOUT = "StandardDropout"


_MASKED_VARIANTS = (Variant.TASK_DROP, Variant.STANDARD_DROPOUT)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    hidden: int = 64
    n_classes: int = 2
    retention: float | None = None
    train_embeddings: bool = False
    init_scale: float = 0.08
    # Classifier input: mean of the masked per-step outputs, or the masked
    # final state only. The mean is the default: every step's output then
    # crosses the mask, so masked units stay out of both the prediction and
    # the dominant gradient path, which is what makes per-task capacity
    # allocation bite.
    readout: str = "mean"


class SentimentModel:
    """One classifier instance for a sequential (or joint) learning run.

    Heads are created lazily per task, seeded by (run_seed, task_id) so runs
    with different task orderings stay comparable. The mask registry and the
    dropout generator draw from their own streams, so variants that never
    touch them produce bit-identical trajectories to those that do when the
    masks are all-ones.
    """

    def __init__(self, variant: Variant, embedding_vectors: np.ndarray,
                 config: ModelConfig, run_seed: int):
        variant = Variant(variant)
        if variant in _MASKED_VARIANTS and config.retention is None:
            raise ValueError(f"{variant.value} requires a retention ratio")
        if config.readout not in ("mean", "final"):
            raise ValueError(f"readout must be 'mean' or 'final', got {config.readout!r}")
        self.variant = variant
        self.config = config
        self.run_seed = int(run_seed)
        self.embedding = Tensor(embedding_vectors, requires_grad=config.train_embeddings)
        if self.embedding.data.shape[1] != config.embed_dim:
            raise ValueError(
                f"embedding dim {self.embedding.data.shape[1]} does not match config {config.embed_dim}"
            )
        self.heads: dict[int, tuple[Tensor, Tensor]] = {}
        self.mask_registry = MaskRegistry(derive_seed(run_seed, Stream.TASK_MASKS))
        self._dropout_rng = substream(run_seed, Stream.DROPOUT)
        self._shared_encoder: GruParams | None = None
        self._task_encoders: dict[int, GruParams] = {}
        if variant is not Variant.INDIVIDUAL:
            self._shared_encoder = GruParams.initialize(
                config.embed_dim, config.hidden,
                substream(run_seed, Stream.ENCODER_INIT), config.init_scale,
            )
        self.trained_tasks: list[int] = []

    # -- construction helpers -------------------------------------------------

    def ensure_head(self, task_id: int) -> None:
        if task_id in self.heads:
            return
        rng = substream(self.run_seed, Stream.HEAD_INIT, task_id)
        scale = self.config.init_scale
        w = Tensor(rng.uniform(-scale, scale, (self.config.hidden, self.config.n_classes)))
        b = Tensor(np.zeros(self.config.n_classes))
        self.heads[task_id] = (w, b)

    def encoder_for(self, task_id: int) -> GruParams:
        if self.variant is Variant.INDIVIDUAL:
            try:
                return self._task_encoders[task_id]
            except KeyError:
                raise KeyError(f"no encoder instantiated for task {task_id}") from None
        return self._shared_encoder

    def begin_task(self, task_id: int) -> None:
        """Create the head (and mask / fresh encoder) a task needs to train."""
        self.ensure_head(task_id)
        if self.variant is Variant.TASK_DROP and task_id not in self.mask_registry:
            self.mask_registry.generate(task_id, [self.config.hidden], self.config.retention)
        if self.variant is Variant.INDIVIDUAL and task_id not in self._task_encoders:
            self._task_encoders[task_id] = GruParams.initialize(
                self.config.embed_dim, self.config.hidden,
                substream(self.run_seed, Stream.ENCODER_INIT, task_id), self.config.init_scale,
            )

    # -- forward paths ---------------------------------------------------------

    def embed_tokens(self, tokens) -> Tensor:
        """(b, n) token ids -> (b, n, d) embedded batch.

        Routed through the differentiable lookup only when embeddings train;
        the frozen default keeps inputs out of the gradient graph entirely.
        """
        if self.config.train_embeddings:
            return embedding_lookup(self.embedding, tokens)
        idx = np.asarray(tokens, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.embedding.data.shape[0]):
            raise IndexError("token id outside embedding table")
        return Tensor(self.embedding.data[idx], requires_grad=False)

    def _mask_for(self, task_id: int, batch_rows: int, train: bool):
        if self.variant is Variant.TASK_DROP:
            return self.mask_registry.get(task_id).as_float()
        if self.variant is Variant.STANDARD_DROPOUT and train:
            return dropout_mask((batch_rows, self.config.hidden),
                                self.config.retention, self._dropout_rng)
        return None

    def representation(self, task_id: int, batch: Tensor, train: bool = False) -> Tensor:
        """Masked encoder output the head consumes (mean over steps, or final)."""
        mask = self._mask_for(task_id, batch.data.shape[0], train)
        encoded = encode_sequence(self.encoder_for(task_id), batch, mask)
        if self.config.readout == "final":
            return encoded.final
        acc = encoded.outputs[0]
        for out in encoded.outputs[1:]:
            acc = add(acc, out)
        return mul(acc, 1.0 / len(encoded.outputs))

    def forward(self, task_id: int, batch: Tensor, train: bool = False) -> Tensor:
        """Logits of task ``task_id``'s head for an embedded (b, n, d) batch."""
        try:
            w, b = self.heads[task_id]
        except KeyError:
            raise KeyError(f"no classifier head for task {task_id}") from None
        return add(matmul(self.representation(task_id, batch, train), w), b)

    # -- parameter bookkeeping ---------------------------------------------------

    def trainable_params(self, task_id: int, position: int) -> list[Tensor]:
        """Parameters task ``task_id`` may update when trained at stream
        position ``position`` (1-based)."""
        head = list(self.heads[task_id])
        base: list[Tensor] = []
        if self.variant is not Variant.INDIVIDUAL:
            base.extend(self._shared_encoder.tensors())
            if self.config.train_embeddings:
                base.append(self.embedding)
        if self.variant is Variant.INDIVIDUAL:
            return self.encoder_for(task_id).tensors() + head
        if self.variant is Variant.CLASSIFY_ONLY:
            return base + head if position == 1 else head
        if self.variant is Variant.MULTI_TASK:
            all_heads = [t for tid in sorted(self.heads) for t in self.heads[tid]]
            return base + all_heads
        return base + head

    def all_parameters(self) -> list[Tensor]:
        params = [self.embedding]
        if self._shared_encoder is not None:
            params.extend(self._shared_encoder.tensors())
        for tid in sorted(self._task_encoders):
            params.extend(self._task_encoders[tid].tensors())
        for tid in sorted(self.heads):
            params.extend(self.heads[tid])
        return params

    # -- checkpointing -----------------------------------------------------------

    def to_dict(self) -> dict:
        def dump_gru(g: GruParams) -> dict:
            return {
                "w_z": g.w_z.data.tolist(), "u_z": g.u_z.data.tolist(), "b_z": g.b_z.data.tolist(),
                "w_r": g.w_r.data.tolist(), "u_r": g.u_r.data.tolist(), "b_r": g.b_r.data.tolist(),
                "w_h": g.w_h.data.tolist(), "u_h": g.u_h.data.tolist(), "b_h": g.b_h.data.tolist(),
            }

        return {
            "variant": self.variant.value,
            "run_seed": self.run_seed,
            "config": asdict(self.config),
            "trained_tasks": list(self.trained_tasks),
            "embedding": self.embedding.data.tolist(),
            "shared_encoder": None if self._shared_encoder is None else dump_gru(self._shared_encoder),
            "task_encoders": {str(t): dump_gru(self._task_encoders[t]) for t in sorted(self._task_encoders)},
            "heads": {
                str(t): {"w": self.heads[t][0].data.tolist(), "b": self.heads[t][1].data.tolist()}
                for t in sorted(self.heads)
            },
            "mask_registry": self.mask_registry.to_dict(),
            "dropout_rng_state": self._dropout_rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SentimentModel":
        def load_gru(blob: dict) -> GruParams:
            return GruParams(**{k: Tensor(np.asarray(v)) for k, v in blob.items()})

        config = ModelConfig(**d["config"])
        model = cls(Variant(d["variant"]), np.asarray(d["embedding"]), config, d["run_seed"])
        model._shared_encoder = None if d["shared_encoder"] is None else load_gru(d["shared_encoder"])
        model._task_encoders = {int(t): load_gru(g) for t, g in d["task_encoders"].items()}
        model.heads = {
            int(t): (Tensor(np.asarray(h["w"])), Tensor(np.asarray(h["b"])))
            for t, h in d["heads"].items()
        }
        model.mask_registry = MaskRegistry.from_dict(d["mask_registry"])
        model._dropout_rng.bit_generator.state = d["dropout_rng_state"]
        model.trained_tasks = [int(t) for t in d["trained_tasks"]]
        return model


def save_checkpoint(model: SentimentModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def load_checkpoint(path) -> SentimentModel:
    with open(path, encoding="utf-8") as fh:
        return SentimentModel.from_dict(json.load(fh))
