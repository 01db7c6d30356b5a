"""Map the data-limited regime: cold vs warm accuracy and forgetting."""
import functools
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import TaskStream, TrainConfig, run_sequential
from taskdrop.seeding import derive_seed

MC = ModelConfig(32, 64)

def probe(train, density, noise, epochs, batch, seeds=(0, 1, 2)):
    cold, warm, forgot = [], [], []
    for seed in seeds:
        cfg = FamilyConfig(shared_signal=0.2, train_size=train, test_size=400,
                           sentiment_density=density, noise_rate=noise)
        fam = generate_task_family(derive_seed(seed, 51), 2, cfg)
        tasks = build_tasks(fam)
        stream = TaskStream(tasks=tasks, ordering=(0, 1), seed=0)
        tc = TrainConfig(epochs=epochs, batch_size=batch, lr=1.0)
        _, m = run_sequential(Variant.NO_MASKING, stream, fam.embedding,
                              derive_seed(seed, 52), MC, tc)
        cold.append(m.accuracy(1, 1))
        warm.append(m.accuracy(2, 2))
        forgot.append(m.accuracy(1, 1) - m.accuracy(1, 2))
    print(f"train={train} dens={density} noise={noise} ep={epochs} b={batch}: "
          f"cold={np.mean(cold):.3f} warm={np.mean(warm):.3f} "
          f"warm-cold={np.mean(warm)-np.mean(cold):+.3f} forget={np.mean(forgot):+.3f}")

for train in (240, 320, 400):
    for density, noise in ((0.35, 0.1), (0.35, 0.15), (0.5, 0.15)):
        probe(train, density, noise, epochs=20, batch=16)
probe(320, 0.35, 0.1, epochs=14, batch=16)
probe(320, 0.35, 0.1, epochs=20, batch=32)
