"""Remaining calibration: hi preset, mix preset, sweeps, dropout comparison."""
import functools
import time
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import (TaskStream, TrainConfig, orderings_list, run_joint,
                              run_sequential, averaged_accuracy)
from taskdrop.seeding import derive_seed

SEED = 7

def block(name, sigma, num_tasks, variants, train, test, epochs, jepochs, n_ord,
          sig_range=None):
    cfg = FamilyConfig(shared_signal=sigma, shared_signal_range=sig_range,
                       train_size=train, test_size=test,
                       sentiment_density=0.35, noise_rate=0.1)
    fam = generate_task_family(derive_seed(SEED, 1), num_tasks, cfg)
    tasks = build_tasks(fam)
    tc = TrainConfig(epochs=epochs, batch_size=16, lr=1.0)
    t0 = time.time()
    _, joint = run_joint(tasks, fam.embedding, derive_seed(SEED, 12), ModelConfig(32, 64),
                         TrainConfig(epochs=jepochs, batch_size=16, lr=1.0))
    print(f"[{name}] joint mean={np.mean(list(joint.values())):.4f} ({time.time()-t0:.0f}s)")
    orderings = orderings_list(num_tasks, n_ord, SEED)
    for variant, p in variants:
        t0 = time.time()
        ats = []
        for oi, perm in enumerate(orderings):
            run_seed = derive_seed(SEED, 11, oi)
            stream = TaskStream(tasks=tasks, ordering=perm, seed=run_seed)
            _, matrix = run_sequential(variant, stream, fam.embedding, run_seed,
                                       ModelConfig(32, 64, retention=p), tc)
            ats.append(averaged_accuracy(matrix, num_tasks))
        tag = variant.value if p is None else f"{variant.value}({p})"
        print(f"[{name}] {tag:22s} A<=T={np.mean(ats):.4f}±{np.std(ats):.4f} ({time.time()-t0:.0f}s)")

# criterion 7 + 8(hi) + 10(hi sweep, via the TaskDrop grid)
block("hi", 0.9, 6,
      [(Variant.TASK_DROP, 0.2), (Variant.TASK_DROP, 0.4), (Variant.TASK_DROP, 0.6),
       (Variant.TASK_DROP, 0.8), (Variant.TASK_DROP, 1.0),
       (Variant.NO_MASKING, None), (Variant.INDIVIDUAL, None), (Variant.CLASSIFY_ONLY, None)],
      train=400, test=400, epochs=16, jepochs=24, n_ord=10)

# criterion 11 remaining lo variants
block("lo", 0.2, 6,
      [(Variant.TASK_DROP, 0.4), (Variant.TASK_DROP, 0.8),
       (Variant.STANDARD_DROPOUT, 0.4), (Variant.STANDARD_DROPOUT, 0.6),
       (Variant.STANDARD_DROPOUT, 0.8), (Variant.CLASSIFY_ONLY, None)],
      train=400, test=400, epochs=16, jepochs=24, n_ord=10)

# criterion 8(mix) + 10(mix sweep) at reduced size
block("mix", 0.5, 24,
      [(Variant.TASK_DROP, 0.2), (Variant.TASK_DROP, 0.4), (Variant.TASK_DROP, 0.5),
       (Variant.TASK_DROP, 0.6), (Variant.TASK_DROP, 0.8), (Variant.TASK_DROP, 1.0),
       (Variant.NO_MASKING, None), (Variant.INDIVIDUAL, None), (Variant.CLASSIFY_ONLY, None)],
      train=300, test=300, epochs=12, jepochs=18, n_ord=6, sig_range=(0.2, 0.9))
