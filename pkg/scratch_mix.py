"""Standalone mix-preset probes for an interior retention optimum."""
import functools
import time
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import (TaskStream, TrainConfig, orderings_list,
                              run_sequential, averaged_accuracy)
from taskdrop.seeding import derive_seed

SEED = 7

def probe2(tag, train, epochs, hidden, lr, noise=0.1):
    cfg = FamilyConfig(shared_signal=0.5, shared_signal_range=(0.2, 0.9),
                       train_size=train, test_size=300,
                       sentiment_density=0.35, noise_rate=noise)
    fam = generate_task_family(derive_seed(SEED, 1), 24, cfg)
    tasks = build_tasks(fam)
    tc = TrainConfig(epochs=epochs, batch_size=16, lr=lr)
    orderings = orderings_list(24, 6, SEED)
    out = {}
    for p in (0.5, 0.8, 1.0):
        t0 = time.time()
        ats = []
        for oi, perm in enumerate(orderings):
            run_seed = derive_seed(SEED, 11, oi)
            stream = TaskStream(tasks=tasks, ordering=perm, seed=run_seed)
            _, matrix = run_sequential(Variant.TASK_DROP, stream, fam.embedding, run_seed,
                                       ModelConfig(32, hidden, retention=p), tc)
            ats.append(averaged_accuracy(matrix, 24))
        out[p] = (np.mean(ats), np.std(ats))
        print(f"[{tag}] p={p}: {np.mean(ats):.4f}±{np.std(ats):.4f} ({time.time()-t0:.0f}s)")
    best = max(out, key=lambda k: out[k][0])
    print(f"[{tag}] argmax={best} margin-over-1.0={out[best][0]-out[1.0][0]:+.4f}")

probe2("mix-t200-h48", 200, 16, 48, 1.0)
probe2("mix-t150-h64-e20", 150, 20, 64, 1.0)
probe2("mix-t200-h64-lr1.5", 200, 20, 64, 1.5)
