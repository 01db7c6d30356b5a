import pytest

from taskdrop.taskgen import FamilyConfig, build_tasks, generate_task_family


@pytest.fixture
def tiny_family():
    """Factory for small, fast task families used across test modules."""

    def make(sigma=0.5, tasks=2, train=240, test=120, seed=5, **overrides):
        config = dict(
            shared_signal=sigma,
            train_size=train,
            test_size=test,
            seq_len=12,
            embed_dim=16,
            shared_vocab=24,
            private_vocab=24,
            neutral_vocab=60,
        )
        config.update(overrides)
        family = generate_task_family(seed, tasks, FamilyConfig(**config))
        return family, build_tasks(family)

    return make
