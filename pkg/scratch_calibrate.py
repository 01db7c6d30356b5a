"""Scratch calibration round 2: init scale, epochs, lr."""
import time
import numpy as np

from taskdrop.taskgen import FamilyConfig, generate_task_family, build_tasks
from taskdrop.model import ModelConfig, Variant
from taskdrop.trainer import TaskStream, TrainConfig, run_sequential

base = FamilyConfig(shared_signal=0.5, shared_vocab=40, private_vocab=40,
                    neutral_vocab=100, sentiment_density=0.6, noise_rate=0.1,
                    train_size=1000, test_size=400)
fam = generate_task_family(7, 1, base)
tasks = build_tasks(fam)
stream = TaskStream(tasks=tasks, ordering=(0,), seed=0)

import taskdrop.encoder as enc
orig_init = enc.GruParams.initialize.__func__

def make_patched(z_off, r_off):
    def patched(cls, input_dim, hidden, rng, scale=0.08):
        p = orig_init(cls, input_dim, hidden, rng, scale)
        p.b_z.data += z_off
        p.b_r.data += r_off
        return p
    return classmethod(patched)

enc.GruParams.initialize = make_patched(-2.0, 1.0)

for scale in (0.08, 0.2, 0.3):
    for lr, epochs in ((1.0, 8), (1.0, 12), (1.5, 8), (2.0, 8)):
        t0 = time.time()
        accs = []
        for seed in (123, 456, 789):
            _, matrix = run_sequential(
                Variant.NO_MASKING, stream, fam.embedding, seed,
                ModelConfig(embed_dim=32, hidden=64, init_scale=scale),
                TrainConfig(epochs=epochs, batch_size=32, lr=lr),
            )
            accs.append(matrix.accuracy(1, 1))
        print(f"scale={scale} lr={lr} epochs={epochs}: acc={np.mean(accs):.3f}±{np.std(accs):.3f} ({time.time()-t0:.1f}s)")
