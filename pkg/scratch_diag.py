"""Diagnose forgetting curves: diagonal vs final column per variant on lo."""
import functools
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import TaskStream, TrainConfig, orderings_list, run_sequential
from taskdrop.seeding import derive_seed

SEED = 7
cfg = FamilyConfig(shared_signal=0.2, train_size=800, test_size=400)
fam = generate_task_family(derive_seed(SEED, 1), 6, cfg)
tasks = build_tasks(fam)
perm = orderings_list(6, 1, SEED)[0]
tc = TrainConfig(epochs=8, batch_size=32, lr=1.0)

for variant, p in ((Variant.TASK_DROP, 0.6), (Variant.NO_MASKING, None)):
    run_seed = derive_seed(SEED, 11, 0)
    stream = TaskStream(tasks=tasks, ordering=perm, seed=run_seed)
    model, matrix = run_sequential(variant, stream, fam.embedding, run_seed,
                                   ModelConfig(32, 64, retention=p), tc)
    tag = variant.value if p is None else f"{variant.value}({p})"
    diag = [matrix.accuracy(t, t) for t in range(1, 7)]
    final = [matrix.accuracy(tau, 6) for tau in range(1, 7)]
    print(f"{tag}: diag={np.round(diag, 3).tolist()}")
    print(f"{tag}: finl={np.round(final, 3).tolist()}")
    print(f"{tag}: per-task forgetting={np.round(np.array(diag) - np.array(final), 3).tolist()}")
    print(f"{tag}: task1 curve={[round(matrix.accuracy(1, t), 3) for t in range(1, 7)]}")
    # weight drift of task-1 readout units vs others during tasks 2..6
    print()
