"""Experiment runner: seeded end-to-end runs with machine-readable reports.

Subcommands
-----------
run              sequential runs for a list of variants; per-run accuracy
                 matrices as JSONL plus a summary CSV of averaged accuracy
                 and forgetting ratio at t=2 and t=T.
sweep-p          averaged accuracy of the task-mask variant across a grid of
                 retention ratios.
compare-dropout  task masks vs per-sample dropout across a retention grid.
dump-reps        final masked encoder outputs of a checkpoint on a dataset.
gen-data         export a task family's datasets and embedding table.

Every output byte is a pure function of the configuration: all randomness is
derived from the config seed, and no timestamps or environment state are
written. Summary CSVs are computed by re-reading the per-run JSONL, so the
two can always be cross-checked.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .masking import RegistryError
from .model import ModelConfig, SentimentModel, Variant, load_checkpoint, save_checkpoint
from .numerics import Tensor
from .seeding import Stream, derive_seed
from .taskgen import (
    PRESETS,
    PRESET_RETENTION,
    ConfigError,
    Dataset,
    FamilyConfig,
    TaskFamily,
    build_tasks,
    generate_task_family,
)
from .trainer import (
    AccuracyMatrix,
    TrainConfig,
    orderings_list,
    run_joint,
    run_sequential,
    summarize_runs,
    TaskStream,
)

CSV_COLUMNS = ["dataset", "variant", "p", "metric", "t_scope", "mean", "std", "n_orderings"]

_MASKED = (Variant.TASK_DROP, Variant.STANDARD_DROPOUT)

DEFAULT_P_GRID = [0.2, 0.4, 0.6, 0.8, 1.0]


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description; serialized next to results."""

    dataset: str
    num_tasks: int
    family: FamilyConfig
    variants: list[tuple[Variant, float | None]]
    seed: int = 7
    orderings: int = 10
    train: TrainConfig = field(default_factory=TrainConfig)
    joint_epochs: int | None = None  # epoch budget for the joint upper bound
    hidden: int = 64
    train_embeddings: bool = False
    save_checkpoints: bool = False
    p_grid: list[float] = field(default_factory=lambda: list(DEFAULT_P_GRID))

    def model_config(self, retention: float | None) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.family.embed_dim,
            hidden=self.hidden,
            retention=retention,
            train_embeddings=self.train_embeddings,
        )

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "num_tasks": self.num_tasks,
            "family": asdict(self.family),
            "variants": [
                {"name": v.value} if p is None else {"name": v.value, "p": p}
                for v, p in self.variants
            ],
            "seed": self.seed,
            "orderings": self.orderings,
            "train": asdict(self.train),
            "joint_epochs": self.joint_epochs,
            "hidden": self.hidden,
            "train_embeddings": self.train_embeddings,
            "save_checkpoints": self.save_checkpoints,
            "p_grid": list(self.p_grid),
        }


def _parse_variants(raw, default_p: float | None) -> list[tuple[Variant, float | None]]:
    variants = []
    for entry in raw:
        try:
            variant = Variant(entry["name"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad variant entry {entry!r}: {exc}") from None
        p = entry.get("p")
        if p is not None and not 0.0 <= float(p) <= 1.0:
            raise ConfigError(f"retention ratio must lie in [0, 1], got {p}")
        if variant in _MASKED:
            p = float(p) if p is not None else default_p
            if p is None:
                raise ConfigError(f"{variant.value} needs a retention ratio (set 'p' or --p)")
        elif p is not None:
            raise ConfigError(f"{variant.value} does not take a retention ratio")
        variants.append((variant, p))
    return variants


def load_config(path=None, preset=None, seed=None, orderings=None, p=None) -> ExperimentConfig:
    """Merge the JSON config file (if any) with command-line overrides."""
    blob = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(blob, dict):
            raise ConfigError("config file must hold a JSON object")
    preset = preset if preset is not None else blob.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if preset is not None:
        num_tasks, family = PRESETS[preset]
        dataset = preset
    elif "family" in blob:
        num_tasks, family, dataset = 6, FamilyConfig(), "custom"
    else:
        raise ConfigError("config needs a 'preset' or a 'family' section")
    if "family" in blob:
        try:
            family = replace(family, **blob["family"])
        except TypeError as exc:
            raise ConfigError(f"bad family field: {exc}") from None
        if family.shared_signal_range is not None:
            family = replace(family, shared_signal_range=tuple(family.shared_signal_range))
    num_tasks = int(blob.get("num_tasks", num_tasks))
    family.validate()
    default_p = float(p) if p is not None else blob.get("default_p")
    if default_p is None and preset is not None:
        default_p = PRESET_RETENTION[preset]
    if "variants" in blob:
        variants = _parse_variants(blob["variants"], default_p)
    else:
        if default_p is None:
            raise ConfigError("no variants listed and no default retention ratio available")
        variants = [
            (Variant.TASK_DROP, default_p),
            (Variant.NO_MASKING, None),
            (Variant.CLASSIFY_ONLY, None),
            (Variant.INDIVIDUAL, None),
            (Variant.MULTI_TASK, None),
        ]
    try:
        train = TrainConfig(**blob.get("train", {}))
    except TypeError as exc:
        raise ConfigError(f"bad train field: {exc}") from None
    if train.epochs < 1 or train.batch_size < 1 or train.lr <= 0:
        raise ConfigError("train config needs epochs >= 1, batch_size >= 1, lr > 0")
    grid = [float(x) for x in blob.get("p_grid", DEFAULT_P_GRID)]
    for x in grid:
        if not 0.0 < x <= 1.0:
            raise ConfigError(f"p_grid values must lie in (0, 1], got {x}")
    joint_epochs = blob.get("joint_epochs")
    if joint_epochs is not None and int(joint_epochs) < 1:
        raise ConfigError("joint_epochs must be >= 1")
    cfg = ExperimentConfig(
        dataset=dataset,
        num_tasks=num_tasks,
        family=family,
        variants=variants,
        seed=int(seed if seed is not None else blob.get("seed", 7)),
        orderings=int(orderings if orderings is not None else blob.get("orderings", 10)),
        train=train,
        joint_epochs=None if joint_epochs is None else int(joint_epochs),
        hidden=int(blob.get("hidden", 64)),
        train_embeddings=bool(blob.get("train_embeddings", False)),
        save_checkpoints=bool(blob.get("save_checkpoints", False)),
        p_grid=grid,
    )
    if cfg.orderings < 1:
        raise ConfigError("orderings must be >= 1")
    if cfg.num_tasks < 1:
        raise ConfigError("num_tasks must be >= 1")
    return cfg


# -- experiment execution -----------------------------------------------------


def _family_and_tasks(cfg: ExperimentConfig) -> tuple[TaskFamily, list]:
    family = generate_task_family(derive_seed(cfg.seed, Stream.FAMILY), cfg.num_tasks, cfg.family)
    return family, build_tasks(family)


def _joint_accuracies(cfg: ExperimentConfig, tasks, family) -> dict[int, float]:
    train = cfg.train
    if cfg.joint_epochs is not None:
        train = replace(train, epochs=cfg.joint_epochs)
    _, accs = run_joint(tasks, family.embedding, derive_seed(cfg.seed, Stream.JOINT),
                        cfg.model_config(None), train)
    return accs


def _joint_matrix(ordering: tuple[int, ...], joint_by_id: dict[int, float]) -> AccuracyMatrix:
    # Joint training is order-free; its matrix repeats each task's accuracy.
    matrix = AccuracyMatrix(len(ordering))
    for t in range(1, len(ordering) + 1):
        for tau in range(1, t + 1):
            matrix.record(tau, t, joint_by_id[ordering[tau - 1]])
    return matrix


def _run_variant(cfg: ExperimentConfig, tasks, family, variant: Variant, p: float | None,
                 joint_by_id: dict[int, float], checkpoint_dir: Path | None):
    """All orderings for one variant; yields (ordering, matrix) in order."""
    perms = orderings_list(cfg.num_tasks, cfg.orderings, cfg.seed)
    results = []
    for index, ordering in enumerate(perms):
        if variant is Variant.MULTI_TASK:
            matrix = _joint_matrix(ordering, joint_by_id)
            results.append((ordering, matrix))
            continue
        run_seed = derive_seed(cfg.seed, Stream.RUN, index)
        stream = TaskStream(tasks=tasks, ordering=ordering, seed=run_seed)
        model, matrix = run_sequential(variant, stream, family.embedding, run_seed,
                                       cfg.model_config(p), cfg.train)
        if checkpoint_dir is not None:
            tag = "none" if p is None else f"{p:g}"
            save_checkpoint(model, checkpoint_dir / f"{variant.value}_p{tag}_ord{index}.json")
        results.append((ordering, matrix))
    return results


def _write_runs_jsonl(path: Path, cfg: ExperimentConfig, runs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for variant, p, ordering, matrix in runs:
            fh.write(json.dumps({
                "seed": cfg.seed,
                "ordering": list(ordering),
                "variant": variant.value,
                "p": p,
                "matrix": matrix.to_lists(),
            }))
            fh.write("\n")


def summarize_jsonl(runs_path, joint_by_id: dict[int, float] | None) -> list[dict]:
    """Recompute summary rows from the per-run JSONL records (the reducer)."""
    groups: dict[tuple[str, float | None], list[tuple[tuple[int, ...], AccuracyMatrix]]] = {}
    with open(runs_path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            key = (rec["variant"], rec["p"])
            groups.setdefault(key, []).append(
                (tuple(rec["ordering"]), AccuracyMatrix.from_lists(rec["matrix"]))
            )
    rows = []
    for (variant, p), entries in groups.items():
        orderings = [e[0] for e in entries]
        matrices = [e[1] for e in entries]
        if joint_by_id is None:
            num_tasks = matrices[0].num_tasks
            scopes = {"2": 2, "T": num_tasks} if num_tasks >= 2 else {"T": num_tasks}
            from .trainer import averaged_accuracy

            for scope, t in scopes.items():
                vals = [averaged_accuracy(m, t) for m in matrices]
                rows.append(_row(variant, p, "A", scope, np.mean(vals) * 100.0,
                                 np.std(vals) * 100.0, len(matrices)))
            continue
        report = summarize_runs(variant, p, matrices, orderings, joint_by_id)
        for scope, (mean, std) in report.averaged.items():
            rows.append(_row(variant, p, "A", scope, mean * 100.0, std * 100.0, len(matrices)))
        for scope, (mean, std) in report.forgetting.items():
            rows.append(_row(variant, p, "rho", scope, mean, std, len(matrices)))
    return rows


def _row(variant, p, metric, scope, mean, std, n) -> dict:
    return {
        "variant": variant,
        "p": "" if p is None else f"{p:g}",
        "metric": metric,
        "t_scope": scope,
        "mean": f"{mean:.2f}",
        "std": f"{std:.2f}",
        "n_orderings": str(n),
    }


def _write_csv(path: Path, dataset: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({"dataset": dataset, **row})


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Reference comparison: every configured variant over every ordering."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    family, tasks = _family_and_tasks(cfg)
    joint_by_id = _joint_accuracies(cfg, tasks, family)
    with open(out / "joint_accuracy.json", "w", encoding="utf-8") as fh:
        json.dump({str(t): joint_by_id[t] for t in sorted(joint_by_id)}, fh)
        fh.write("\n")
    checkpoint_dir = None
    if cfg.save_checkpoints:
        checkpoint_dir = out / "checkpoints"
        checkpoint_dir.mkdir(exist_ok=True)
    runs = []
    for variant, p in cfg.variants:
        for ordering, matrix in _run_variant(cfg, tasks, family, variant, p,
                                             joint_by_id, checkpoint_dir):
            runs.append((variant, p, ordering, matrix))
    _write_runs_jsonl(out / "runs.jsonl", cfg, runs)
    rows = summarize_jsonl(out / "runs.jsonl", joint_by_id)
    _write_csv(out / "summary.csv", cfg.dataset, rows)
    return out / "summary.csv"


def _grid_experiment(cfg: ExperimentConfig, p_grid, out_dir, variants_for) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    family, tasks = _family_and_tasks(cfg)
    runs = []
    for p in p_grid:
        for variant in variants_for:
            for ordering, matrix in _run_variant(cfg, tasks, family, variant, float(p),
                                                 joint_by_id={}, checkpoint_dir=None):
                runs.append((variant, float(p), ordering, matrix))
    _write_runs_jsonl(out / "runs.jsonl", cfg, runs)
    rows = summarize_jsonl(out / "runs.jsonl", joint_by_id=None)
    rows = [r for r in rows if r["metric"] == "A" and r["t_scope"] == "T"]
    _write_csv(out / "summary.csv", cfg.dataset, rows)
    return out / "summary.csv"


def sweep_retention(cfg: ExperimentConfig, p_grid, out_dir) -> Path:
    """Averaged accuracy after all tasks, per retention ratio."""
    for p in p_grid:
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"sweep retention ratios must lie in (0, 1], got {p}")
    return _grid_experiment(cfg, p_grid, out_dir, [Variant.TASK_DROP])


def compare_dropout(cfg: ExperimentConfig, p_grid, out_dir) -> Path:
    """Task masks vs per-sample dropout, paired per retention ratio."""
    for p in p_grid:
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"comparison retention ratios must lie in (0, 1], got {p}")
    return _grid_experiment(cfg, p_grid, out_dir,
                            [Variant.TASK_DROP, Variant.STANDARD_DROPOUT])


def dump_representations(checkpoint_path, task_id: int, dataset_path, out_path) -> int:
    """Write one {"vector", "label"} JSONL record per dataset instance."""
    model = load_checkpoint(checkpoint_path)
    dataset = Dataset.from_jsonl(dataset_path)
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for start in range(0, dataset.size, 256):
            rows = np.arange(start, min(start + 256, dataset.size))
            tokens, labels = dataset.batch(rows)
            try:
                reps = model.representation(task_id, model.embed_tokens(tokens), train=False)
            except (KeyError, RegistryError) as exc:
                raise ConfigError(f"checkpoint cannot serve task {task_id}: {exc}") from None
            for vec, label in zip(reps.data, labels):
                fh.write(json.dumps({"vector": vec.tolist(), "label": int(label)}))
                fh.write("\n")
                written += 1
    return written


def generate_data(cfg: ExperimentConfig, out_dir) -> Path:
    """Export every task's splits plus the embedding table and family spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    family, tasks = _family_and_tasks(cfg)
    for task in tasks:
        task.train.to_jsonl(out / f"task{task.task_id}_train.jsonl")
        task.test.to_jsonl(out / f"task{task.task_id}_test.jsonl")
    family.embedding.to_json(out / "embedding.json")
    with open(out / "family.json", "w", encoding="utf-8") as fh:
        json.dump({
            "seed": family.seed,
            "num_tasks": family.num_tasks,
            "config": asdict(family.config),
            "tasks": [spec.to_dict() for spec in family.specs],
        }, fh, indent=2)
        fh.write("\n")
    return out


# -- command line ---------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="task family preset")
    parser.add_argument("--seed", type=int, help="base seed (overrides config)")
    parser.add_argument("--orderings", type=int, help="number of task orderings")
    parser.add_argument("--p", type=float, help="default retention ratio")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskdrop",
        description="Continual sentiment-classification experiments with per-task random masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="sequential runs for the configured variants")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep-p", help="averaged accuracy across retention ratios")
    _add_common(p_sweep)
    p_sweep.add_argument("--grid", type=str, help="comma-separated retention ratios")

    p_cmp = sub.add_parser("compare-dropout", help="task masks vs per-sample dropout")
    _add_common(p_cmp)
    p_cmp.add_argument("--grid", type=str, help="comma-separated retention ratios")

    p_dump = sub.add_parser("dump-reps", help="dump masked encoder outputs for a dataset")
    p_dump.add_argument("--checkpoint", type=Path, required=True)
    p_dump.add_argument("--task", type=int, required=True, help="task id whose head/mask to use")
    p_dump.add_argument("--data", type=Path, required=True, help="dataset JSONL file")
    p_dump.add_argument("--out", type=Path, required=True, help="output JSONL path")

    p_gen = sub.add_parser("gen-data", help="export a family's datasets and embeddings")
    _add_common(p_gen)
    return parser


def _parse_grid(raw: str | None, cfg: ExperimentConfig) -> list[float]:
    if raw is None:
        return list(cfg.p_grid)
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --grid value: {exc}") from None


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "dump-reps":
            count = dump_representations(args.checkpoint, args.task, args.data, args.out)
            print(f"wrote {count} records to {args.out}")
            return 0
        cfg = load_config(args.config, args.preset, args.seed, args.orderings, args.p)
        if args.command == "run":
            path = run_experiment(cfg, args.out)
            print(f"wrote {path}")
        elif args.command == "sweep-p":
            path = sweep_retention(cfg, _parse_grid(args.grid, cfg), args.out)
            print(f"wrote {path}")
        elif args.command == "compare-dropout":
            path = compare_dropout(cfg, _parse_grid(args.grid, cfg), args.out)
            print(f"wrote {path}")
        elif args.command == "gen-data":
            out = generate_data(cfg, args.out)
            print(f"wrote datasets to {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
