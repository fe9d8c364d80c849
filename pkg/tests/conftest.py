"""Shared fixtures: one trained model and score table reused across suites.

Training is the expensive part (about fifteen seconds), so it happens once
per session with the same recipe the command-line driver defaults to for
small experiments.
"""

import time
from types import SimpleNamespace

import pytest

from hess import pipeline, sensitivity

TRAIN_SEED = 20000
CALIB_SEED = 10000
EVAL_SEED = 30000

N_VIEWS = 5
TOKENS_PER_VIEW = 7
D_MODEL = 24


def make_scenes(base_seed, count):
    return [pipeline.generate_scene(base_seed + i, n_views=N_VIEWS,
                                    tokens_per_view=TOKENS_PER_VIEW,
                                    d_model=D_MODEL)
            for i in range(count)]


@pytest.fixture(scope="session")
def trained():
    start = time.perf_counter()
    model = pipeline.ToyModel(n_layers=3, n_heads=4, d_model=D_MODEL,
                              d_head=6, seed=1)
    stream = pipeline.scene_stream(TRAIN_SEED, N_VIEWS, TOKENS_PER_VIEW,
                                   d_model=D_MODEL, batch=4)
    losses = pipeline.train_toy(model, stream, steps=1500, lr=0.2)
    calib_scenes = make_scenes(CALIB_SEED, 40)
    table = sensitivity.calibrate(model, calib_scenes, lam=0.5, eps=0.05,
                                  seed=1)
    return SimpleNamespace(model=model, table=table, losses=losses,
                           calib_scenes=calib_scenes,
                           eval_scenes=make_scenes(EVAL_SEED, 10),
                           setup_seconds=time.perf_counter() - start)
