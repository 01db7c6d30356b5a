"""Full trend calibration at the candidate acceptance config."""
import functools
import time
import numpy as np

print = functools.partial(print, flush=True)

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import (
    TaskStream, TrainConfig, orderings_list, run_joint, run_sequential, averaged_accuracy,
)
from taskdrop.seeding import derive_seed

SEED = 7
N_ORD = 10
TRAIN, TEST = 400, 400
TC = TrainConfig(epochs=20, batch_size=16, lr=1.0)
JOINT_TC = TrainConfig(epochs=30, batch_size=16, lr=1.0)

def run_preset(name, sigma, variants):
    cfg = FamilyConfig(shared_signal=sigma, train_size=TRAIN, test_size=TEST,
                       sentiment_density=0.35, noise_rate=0.1)
    fam = generate_task_family(derive_seed(SEED, 1), 6, cfg)
    tasks = build_tasks(fam)
    t0 = time.time()
    _, joint = run_joint(tasks, fam.embedding, derive_seed(SEED, 12),
                         ModelConfig(32, 64), JOINT_TC)
    print(f"[{name}] joint mean={np.mean(list(joint.values())):.4f} ({time.time()-t0:.0f}s)")
    orderings = orderings_list(6, N_ORD, SEED)
    for variant, p in variants:
        t0 = time.time()
        ats = []
        for oi, perm in enumerate(orderings):
            run_seed = derive_seed(SEED, 11, oi)
            stream = TaskStream(tasks=tasks, ordering=perm, seed=run_seed)
            _, matrix = run_sequential(variant, stream, fam.embedding, run_seed,
                                       ModelConfig(32, 64, retention=p), TC)
            ats.append(averaged_accuracy(matrix, 6))
        tag = variant.value if p is None else f"{variant.value}({p})"
        print(f"[{name}] {tag:22s} A<=T={np.mean(ats):.4f}±{np.std(ats):.4f} ({time.time()-t0:.0f}s)")

run_preset("lo", 0.2, [
    (Variant.TASK_DROP, 0.6), (Variant.NO_MASKING, None), (Variant.INDIVIDUAL, None),
    (Variant.TASK_DROP, 0.4), (Variant.TASK_DROP, 0.8),
    (Variant.STANDARD_DROPOUT, 0.4), (Variant.STANDARD_DROPOUT, 0.6),
    (Variant.STANDARD_DROPOUT, 0.8), (Variant.CLASSIFY_ONLY, None),
])
run_preset("hi", 0.9, [
    (Variant.TASK_DROP, 0.8), (Variant.NO_MASKING, None), (Variant.INDIVIDUAL, None),
    (Variant.CLASSIFY_ONLY, None),
])
