"""Shared fixtures: small graphs and hand-built trajectory helpers."""

from __future__ import annotations

import numpy as np
import pytest

from reidsim.graph import CameraGraph, build_graph, make_preset
from reidsim.trajgen import CameraVisit, Trajectory


@pytest.fixture(scope="session")
def chain4() -> CameraGraph:
    return CameraGraph(4, ((0, 1), (1, 2), (2, 3)))


@pytest.fixture(scope="session")
def star4() -> CameraGraph:
    # vertex 1 adjacent to 0, 2, 3
    return CameraGraph(4, ((0, 1), (1, 2), (1, 3)))


@pytest.fixture(scope="session")
def grid9() -> CameraGraph:
    return build_graph(make_preset("grid", 9, 3))


@pytest.fixture(scope="session")
def town05() -> CameraGraph:
    return build_graph(make_preset("town05-like", seed=7))


def make_traj(traj_id: int, cameras: list[int], dwell: int = 10, travel: int = 5, start: int = 0) -> Trajectory:
    """Fixed-interval trajectory along the given camera sequence."""
    visits = []
    entry = start
    for cam in cameras:
        visits.append(CameraVisit(camera=cam, entry=entry, exit=entry + dwell - 1))
        entry = entry + dwell + travel
    return Trajectory(id=traj_id, visits=tuple(visits))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
