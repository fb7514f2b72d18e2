"""Shared fixtures: a small experiment that exercises every pipeline stage.

The sizes are the smallest that satisfy the config validators while
keeping all five methods distinguishable; end-to-end tests built on
them run in seconds.
"""

import numpy as np
import pytest

from mimopred.channel import SimConfig
from mimopred.config import (DatasetSettings, DipSettings, ExperimentConfig,
                             MlpSettings, SweepSettings)
from mimopred.datasets import SamplePair, TaskDataset
from mimopred.training import MetaConfig


def small_experiment(**overrides) -> ExperimentConfig:
    fields = dict(
        sim=SimConfig(n_antennas=4, n_ue=4, n_slots=48, snr_db=10.0, paths=4,
                      speed_kmh=3.0),
        dataset=DatasetSettings(n_source_ue=2, n_target_ue=2, tasks_per_ue=4,
                                n_support=4, n_query=4, n_adapt=4, n_test=8, order=2),
        mlp=MlpSettings(hidden_layers=2, hidden_width=8),
        meta=MetaConfig(inner_lr=0.02, outer_lr=1e-3, batch_size=4, n_epoch=1,
                        adapt_steps=2, first_order=True),
        dip=DipSettings(enabled=False, depth=2, filters=4, n_iter=8, lr=1e-2),
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


SMALL_INI = """\
[sim]
n_antennas = 4
n_slots = 48
snr_db = 10.0
paths = 4

[dataset]
n_source_ue = 2
n_target_ue = 2
tasks_per_ue = 4
n_support = 4
n_query = 4
n_adapt = 4
n_test = 8
order = 2

[mlp]
hidden_layers = 2
hidden_width = 8

[meta]
inner_lr = 0.02
outer_lr = 1e-3
batch_size = 4
n_epoch = 1
adapt_steps = 2
first_order = true

[dip]
enabled = true
depth = 2
filters = 4
n_iter = 8
lr = 1e-2
"""


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    return small_experiment()


@pytest.fixture
def small_ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return str(path)


def scalar_pair(x, y) -> SamplePair:
    return SamplePair(inputs=np.atleast_1d(np.asarray(x, dtype=np.float64)),
                      label=np.atleast_1d(np.asarray(y, dtype=np.float64)),
                      slot=0, ue_id=0)


def linear_task(task_id: int, slope: float, rng, n: int = 4) -> TaskDataset:
    """One y = slope * x regression task with random support/query points."""
    xs = rng.uniform(0.5, 1.5, n)
    xq = rng.uniform(0.5, 1.5, n)
    return TaskDataset(task_id=task_id, ue_id=0,
                       support=[scalar_pair(x, slope * x) for x in xs],
                       query=[scalar_pair(x, slope * x) for x in xq])
