"""CLI tests: subcommands, file outputs, determinism, and the reducer."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from taskdrop.cli import main
from taskdrop.trainer import AccuracyMatrix, averaged_accuracy, forgetting_ratio

TINY_FAMILY = {
    "shared_signal": 0.5,
    "train_size": 240,
    "test_size": 80,
    "seq_len": 10,
    "embed_dim": 16,
    "shared_vocab": 24,
    "private_vocab": 24,
    "neutral_vocab": 60,
    "sentiment_density": 0.8,
    "noise_rate": 0.0,
}


def write_config(tmp_path, name="config.json", **overrides):
    blob = {
        "family": dict(TINY_FAMILY),
        "num_tasks": 2,
        "seed": 5,
        "orderings": 2,
        "train": {"epochs": 8, "batch_size": 32, "lr": 1.0},
        "hidden": 12,
        "variants": [{"name": "TaskDrop", "p": 0.6}, {"name": "NoMasking"}],
    }
    blob.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(blob))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRunCommand:
    def test_outputs_and_schema(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert {r["metric"] for r in rows} == {"A", "rho"}
        assert {r["t_scope"] for r in rows} == {"2", "T"}
        assert {r["variant"] for r in rows} == {"TaskDrop", "NoMasking"}
        assert all(r["n_orderings"] == "2" for r in rows)
        assert all(r["dataset"] == "custom" for r in rows)
        assert (out / "runs.jsonl").exists()
        assert (out / "config.json").exists()
        assert (out / "joint_accuracy.json").exists()

    def test_full_retention_matches_no_masking_rows(self, tmp_path):
        cfg = write_config(
            tmp_path,
            variants=[{"name": "TaskDrop", "p": 1.0}, {"name": "NoMasking"}],
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        by_variant = {}
        for r in rows:
            by_variant.setdefault(r["variant"], {})[(r["metric"], r["t_scope"])] = (
                r["mean"], r["std"]
            )
        assert by_variant["TaskDrop"] == by_variant["NoMasking"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
        for name in ("summary.csv", "runs.jsonl", "config.json", "joint_accuracy.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_summary_matches_independent_reduction(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--out", str(out)])
        joint = {int(k): v for k, v in
                 json.loads((out / "joint_accuracy.json").read_text()).items()}
        groups = {}
        for line in (out / "runs.jsonl").read_text().splitlines():
            rec = json.loads(line)
            groups.setdefault((rec["variant"], rec["p"]), []).append(rec)
        expected = {}
        for (variant, p), recs in groups.items():
            for scope, t in (("2", 2), ("T", 2)):
                a_vals, r_vals = [], []
                for rec in recs:
                    matrix = AccuracyMatrix.from_lists(rec["matrix"])
                    a_vals.append(averaged_accuracy(matrix, t))
                    joint_acc = [joint[i] for i in rec["ordering"][:t]]
                    r_vals.append(forgetting_ratio(matrix, t, [0.5] * t, joint_acc))
                expected[(variant, "A", scope)] = (
                    f"{np.mean(a_vals) * 100:.2f}", f"{np.std(a_vals) * 100:.2f}")
                expected[(variant, "rho", scope)] = (
                    f"{np.mean(r_vals):.2f}", f"{np.std(r_vals):.2f}")
        for row in read_csv(out / "summary.csv"):
            key = (row["variant"], row["metric"], row["t_scope"])
            assert (row["mean"], row["std"]) == expected[key]

    def test_preset_flag_sets_dataset_column(self, tmp_path):
        overrides = {k: v for k, v in TINY_FAMILY.items() if k != "shared_signal"}
        cfg = write_config(tmp_path, variants=[{"name": "NoMasking"}],
                           family=overrides)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--preset", "lo", "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert all(r["dataset"] == "lo" for r in rows)
        echo = json.loads((out / "config.json").read_text())
        # preset pins the similarity knob; explicit config fields still win
        assert echo["family"]["shared_signal"] == 0.2
        assert echo["num_tasks"] == 2


class TestGridCommands:
    def test_sweep_single_point_single_row(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "sweep"
        assert main(["sweep-p", "--config", str(cfg), "--grid", "0.6",
                     "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert len(rows) == 1
        assert rows[0]["variant"] == "TaskDrop" and rows[0]["p"] == "0.6"
        assert rows[0]["metric"] == "A" and rows[0]["t_scope"] == "T"

    def test_compare_dropout_row_count(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "cmp"
        assert main(["compare-dropout", "--config", str(cfg),
                     "--grid", "0.5,1.0", "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert len(rows) == 4
        assert {r["variant"] for r in rows} == {"TaskDrop", "StandardDropout"}

    def test_full_retention_three_way_equality(self, tmp_path):
        cfg = write_config(tmp_path)
        cmp_out = tmp_path / "cmp"
        main(["compare-dropout", "--config", str(cfg), "--grid", "1.0", "--out", str(cmp_out)])
        cmp_rows = {r["variant"]: r["mean"] for r in read_csv(cmp_out / "summary.csv")}
        run_cfg = write_config(tmp_path, name="run.json", variants=[{"name": "NoMasking"}])
        run_out = tmp_path / "run"
        main(["run", "--config", str(run_cfg), "--out", str(run_out)])
        no_mask = next(r["mean"] for r in read_csv(run_out / "summary.csv")
                       if r["metric"] == "A" and r["t_scope"] == "T")
        assert cmp_rows["TaskDrop"] == cmp_rows["StandardDropout"] == no_mask

    def test_bad_grid_value_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["sweep-p", "--config", str(cfg), "--grid", "0.0,0.5",
                     "--out", str(tmp_path / "x")]) == 2


class TestDumpReps:
    def test_dump_matches_dataset(self, tmp_path):
        cfg = write_config(tmp_path, save_checkpoints=True, orderings=1,
                           variants=[{"name": "TaskDrop", "p": 0.6}])
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--out", str(out)])
        ckpt = next((out / "checkpoints").glob("*.json"))
        data_dir = tmp_path / "data"
        main(["gen-data", "--config", str(cfg), "--out", str(data_dir)])
        reps = tmp_path / "reps.jsonl"
        assert main(["dump-reps", "--checkpoint", str(ckpt), "--task", "0",
                     "--data", str(data_dir / "task0_test.jsonl"),
                     "--out", str(reps)]) == 0
        records = [json.loads(l) for l in reps.read_text().splitlines()]
        assert len(records) == TINY_FAMILY["test_size"]
        assert all(len(r["vector"]) == 12 for r in records)
        assert all(r["label"] in (0, 1) for r in records)
        reps2 = tmp_path / "reps2.jsonl"
        main(["dump-reps", "--checkpoint", str(ckpt), "--task", "0",
              "--data", str(data_dir / "task0_test.jsonl"), "--out", str(reps2)])
        assert reps.read_bytes() == reps2.read_bytes()

    def test_unknown_task_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, save_checkpoints=True, orderings=1,
                           variants=[{"name": "TaskDrop", "p": 0.6}])
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--out", str(out)])
        ckpt = next((out / "checkpoints").glob("*.json"))
        data_dir = tmp_path / "data"
        main(["gen-data", "--config", str(cfg), "--out", str(data_dir)])
        code = main(["dump-reps", "--checkpoint", str(ckpt), "--task", "9",
                     "--data", str(data_dir / "task0_test.jsonl"),
                     "--out", str(tmp_path / "r.jsonl")])
        assert code == 2


class TestGenData:
    def test_exports_all_files(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "data"
        assert main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"task0_train.jsonl", "task0_test.jsonl", "task1_train.jsonl",
                "task1_test.jsonl", "embedding.json", "family.json",
                "config.json"} <= names
        family = json.loads((out / "family.json").read_text())
        assert family["num_tasks"] == 2
        first = json.loads((out / "task0_train.jsonl").read_text().splitlines()[0])
        assert set(first) == {"tokens", "label"}
        assert len(first["tokens"]) == TINY_FAMILY["seq_len"]

    def test_rerun_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen-data", "--config", str(cfg), "--out", str(a)])
        main(["gen-data", "--config", str(cfg), "--out", str(b)])
        for p in a.iterdir():
            assert p.read_bytes() == (b / p.name).read_bytes()


class TestConfigValidation:
    def test_missing_family_and_preset(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"seed": 1}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_unknown_variant(self, tmp_path):
        cfg = write_config(tmp_path, variants=[{"name": "Mystery"}])
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_masked_variant_without_ratio(self, tmp_path):
        cfg = write_config(tmp_path, variants=[{"name": "TaskDrop"}])
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_ratio_on_unmasked_variant(self, tmp_path):
        cfg = write_config(tmp_path, variants=[{"name": "NoMasking", "p": 0.5}])
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_p_flag_fills_missing_ratio(self, tmp_path):
        cfg = write_config(tmp_path, variants=[{"name": "TaskDrop"}])
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--p", "0.7", "--out", str(out)]) == 0
        rows = read_csv(out / "summary.csv")
        assert all(r["p"] == "0.7" for r in rows)

    def test_io_failure_exit_code(self, tmp_path):
        cfg = write_config(tmp_path)
        target = tmp_path / "blocked"
        target.write_text("occupied")  # out dir path is a file
        assert main(["run", "--config", str(cfg), "--out", str(target)]) == 3
