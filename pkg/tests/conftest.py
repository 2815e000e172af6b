"""Session-scoped fixtures: synthetic datasets and the trained models shared
by the acceptance suite and the heavier integration tests.

Training budgets here are desk-scale. The dataset seeds are fixed so every
run trains on identical floors.
"""

import time

import pytest

from assist2plan.enumeration import EdgeClassifierConfig, EdgeTrainConfig, train_edge_classifier
from assist2plan.nextwall import NextWallConfig, NextWallTrainConfig, train_next_wall
from assist2plan.ordermetric import TcnConfig, train_tcn
from assist2plan.synthetic import generate_floor_set

TRAIN_SEED = 1
HELD_SEED = 9

# wall-clock training times, asserted against the acceptance budgets
TRAIN_TIMES: dict[str, float] = {}


@pytest.fixture(scope="session")
def train_floors():
    return generate_floor_set(100, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def held_floors():
    return generate_floor_set(150, seed=HELD_SEED)


@pytest.fixture(scope="session")
def nextwall_model(train_floors):
    # train-time dropout 0: at desk scale the cosine-contrast signal is tiny
    # and dropout noise prevents the triplet objective from fitting at all
    cfg = NextWallTrainConfig(
        steps=3500, batch=8, seed=0, model=NextWallConfig(seed=0, dropout=0.0)
    )
    t0 = time.time()
    model = train_next_wall(train_floors, cfg)
    TRAIN_TIMES["nextwall"] = time.time() - t0
    return model


@pytest.fixture(scope="session")
def tcn_model(train_floors):
    cfg = TcnConfig(iterations=3000, seed=0)
    t0 = time.time()
    model = train_tcn(train_floors, cfg)
    TRAIN_TIMES["tcn"] = time.time() - t0
    return model


@pytest.fixture(scope="session")
def edge_classifier(train_floors):
    cfg = EdgeTrainConfig(
        steps=700, seed=0, model=EdgeClassifierConfig(n_ref_points=16, seed=0)
    )
    t0 = time.time()
    clf = train_edge_classifier(train_floors[:40], cfg)
    TRAIN_TIMES["edge"] = time.time() - t0
    return clf
