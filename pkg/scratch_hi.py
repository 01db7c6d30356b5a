"""Find hi/mix configs with an interior retention optimum."""
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

def probe(tag, sigma, num_tasks, train, test, noise, epochs, ps, n_ord, sig_range=None):
    cfg = FamilyConfig(shared_signal=sigma, shared_signal_range=sig_range,
                       train_size=train, test_size=test,
                       sentiment_density=0.35, noise_rate=noise)
    fam = generate_task_family(derive_seed(SEED, 1), num_tasks, cfg)
    tasks = build_tasks(fam)
    tc = TrainConfig(epochs=epochs, batch_size=16, lr=1.0)
    orderings = orderings_list(num_tasks, n_ord, SEED)
    out = {}
    for p in ps:
        t0 = time.time()
        ats = []
        for oi, perm in enumerate(orderings):
            run_seed = derive_seed(SEED, 11, oi)
            stream = TaskStream(tasks=tasks, ordering=perm, seed=run_seed)
            _, matrix = run_sequential(Variant.TASK_DROP, stream, fam.embedding, run_seed,
                                       ModelConfig(32, 64, retention=p), tc)
            ats.append(averaged_accuracy(matrix, num_tasks))
        out[p] = (np.mean(ats), np.std(ats))
        print(f"[{tag}] p={p}: {np.mean(ats):.4f}±{np.std(ats):.4f} ({time.time()-t0:.0f}s)")
    best = max(out, key=lambda k: out[k][0])
    print(f"[{tag}] argmax={best} margin-over-1.0={out[best][0]-out[1.0][0]:+.4f}")

probe("hi-t300-n0.15-e20", 0.9, 6, 300, 400, 0.15, 20, (0.6, 0.8, 1.0), 10)
probe("hi-t250-n0.10-e20", 0.9, 6, 250, 400, 0.10, 20, (0.6, 0.8, 1.0), 10)
probe("mix-t200-n0.10-e16", 0.5, 24, 200, 300, 0.10, 16, (0.5, 0.8, 1.0), 6, (0.2, 0.9))
probe("mix-t250-n0.15-e16", 0.5, 24, 250, 300, 0.15, 16, (0.5, 0.8, 1.0), 6, (0.2, 0.9))

