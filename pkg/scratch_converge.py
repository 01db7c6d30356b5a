"""Cold-start convergence reliability across seeds/configs, incl. masked."""
import functools
import time
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import TaskStream, TrainConfig, run_sequential

def probe(train_size, epochs, lr, variant, p, batch=32, seeds=range(8)):
    cfg = FamilyConfig(shared_signal=0.2, train_size=train_size, test_size=400)
    fam = generate_task_family(3, 1, cfg)
    tasks = build_tasks(fam)
    stream = TaskStream(tasks=tasks, ordering=(0,), seed=0)
    accs = []
    t0 = time.time()
    for seed in seeds:
        _, m = run_sequential(variant, stream, fam.embedding, 1000 + seed,
                              ModelConfig(32, 64, retention=p),
                              TrainConfig(epochs=epochs, batch_size=batch, lr=lr))
        accs.append(m.accuracy(1, 1))
    accs = np.array(accs)
    tag = variant.value if p is None else f"{variant.value}({p})"
    print(f"train={train_size} ep={epochs} lr={lr} b={batch} {tag:14s}: "
          f"min={accs.min():.3f} mean={accs.mean():.3f} ({time.time()-t0:.0f}s)")

for train_size, epochs in ((600, 10), (600, 14), (800, 10), (800, 12), (1000, 10)):
    probe(train_size, epochs, 1.0, Variant.NO_MASKING, None)
probe(800, 12, 1.0, Variant.TASK_DROP, 0.6)
probe(800, 12, 1.0, Variant.TASK_DROP, 0.4)
probe(800, 16, 1.0, Variant.TASK_DROP, 0.4)
probe(600, 14, 1.0, Variant.TASK_DROP, 0.6)
probe(800, 12, 1.0, Variant.NO_MASKING, None, batch=64)
probe(800, 12, 1.5, Variant.NO_MASKING, None, batch=64)
