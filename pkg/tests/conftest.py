import numpy as np
import pytest

from rankope.core import EmbeddingModel, LoggedDataset
from rankope.policy import make_softmax_policy


def make_dataset(n=3, K=2, A=3, D=1, E=2, n_contexts=None, seed=0, reward_kind="gaussian"):
    """Small random dataset with one context per sample unless ``n_contexts`` is given."""
    rng = np.random.default_rng(seed)
    C = n if n_contexts is None else n_contexts
    C = max(C, 1)
    contexts = rng.normal(size=(C, 2))
    logging = make_softmax_policy(rng.normal(size=(C, K, A)), 1.0)
    target = make_softmax_policy(rng.normal(size=(C, K, A)), 2.0)
    emb = EmbeddingModel.from_logits(rng.normal(size=(K, A, D, E)))
    idx = np.arange(n) % C
    if reward_kind == "gaussian":
        rewards = rng.normal(size=(n, K))
    else:
        rewards = rng.integers(0, 2, size=(n, K)).astype(float)
    return LoggedDataset(
        contexts=contexts,
        context_index=idx,
        actions=rng.integers(0, A, size=(n, K)),
        embeddings=rng.integers(0, E, size=(n, K, D)),
        rewards=rewards,
        logging_policy=logging,
        target_policy=target,
        embedding_model=emb,
        reward_kind=reward_kind,
    )


@pytest.fixture
def tiny_dataset():
    return make_dataset()


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
