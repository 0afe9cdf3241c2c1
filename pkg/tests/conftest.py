import numpy as np
import pytest

from smpr.model import SurvivalDataset


def random_dataset(rng, n, p, q, censor_prob=0.3):
    """Small random dataset with at least one event."""
    while True:
        event = rng.random(n) > censor_prob
        if np.any(event):
            break
    return SurvivalDataset(
        log_time=rng.standard_normal(n),
        event=event,
        x=rng.standard_normal((n, p)),
        z=rng.standard_normal((n, q)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
