import numpy as np
import pytest

from prefopt.gp import KernelHyperparams, LatentGoodness, PreferenceGP
from prefopt.preference import PreferenceDataset, SelectionEvent


def make_gp(points, latents, signal=1.0, length=0.3, noise=1e-6):
    points = np.asarray(points, dtype=np.float64)
    d = points.shape[1]
    h = KernelHyperparams(signal, np.full(d, length), noise)
    return PreferenceGP(h, points, LatentGoodness(np.asarray(latents, dtype=np.float64)))


def make_dataset(events_spec, dimension):
    """events_spec: list of (chosen, [rejected...]) tuples."""
    events = []
    for i, (chosen, rejected) in enumerate(events_spec):
        events.append(
            SelectionEvent(
                chosen=np.asarray(chosen, dtype=np.float64),
                rejected=np.asarray(rejected, dtype=np.float64),
                iteration_index=i + 1,
            )
        )
    return PreferenceDataset(events=tuple(events), dimension=dimension)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)
