"""Query executors over the camera graph: a frame oracle standing in for the
vision pipeline, the probabilistic adaptive windowed search, and the Naive,
Graph-Search, Spatula, Tracer, and Oracle execution strategies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph import CameraGraph
from .predict import NeighborDistribution, Predictor
from .trajgen import Trajectory

EXECUTOR_NAMES = ("naive", "graph-search", "spatula", "tracer", "oracle")


class SearchError(ValueError):
    """Invalid query, config, or dataset reference."""


@dataclass(frozen=True)
class Query:
    """A re-identification request: object, source camera, start frame."""

    object_id: int
    source_camera: int
    source_frame: int


@dataclass(frozen=True)
class Sighting:
    camera: int
    frame: int


@dataclass(frozen=True)
class SearchConfig:
    window: int
    horizon: int
    alpha: float = 0.75

    def __post_init__(self) -> None:
        if not (1 <= self.window <= self.horizon):
            raise SearchError(f"need 1 <= window <= horizon, got W={self.window} T={self.horizon}")
        if not (0.0 < self.alpha <= 1.0):
            raise SearchError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class CostModel:
    """Modeled per-operation latencies; illustrative defaults, never asserted
    as measured values."""

    detector_cost: float = 0.015
    reid_cost: float = 0.025
    occupancy: float = 1.0
    predictor_cost: float = 0.001

    def __post_init__(self) -> None:
        if min(self.detector_cost, self.reid_cost, self.occupancy, self.predictor_cost) < 0:
            raise SearchError("cost model fields must be >= 0")

    @property
    def frame_cost(self) -> float:
        return self.detector_cost + self.occupancy * self.reid_cost


@dataclass
class QueryResult:
    sightings: list[Sighting]
    frames_examined: int
    oracle_calls: int
    sampling_rounds: int
    modeled_latency: float
    recall: float


def index_trajectories(trajs: Sequence[Trajectory]) -> dict[int, Trajectory]:
    index = {}
    for t in trajs:
        if t.id in index:
            raise SearchError(f"duplicate trajectory id {t.id}")
        index[t.id] = t
    return index


class FrameOracle:
    """Ground-truth stand-in for the detector + re-identification pipeline.

    Each examined frame costs one detector invocation plus occupancy-many
    re-identification invocations. Counters accumulate across calls so one
    oracle instance tracks one query execution.
    """

    def __init__(
        self,
        index: Mapping[int, Trajectory],
        horizon: int,
        cost: CostModel,
        num_cameras: int | None = None,
    ) -> None:
        self._index = index
        self.horizon = horizon
        self.cost = cost
        self.num_cameras = num_cameras
        self.frames_examined = 0
        self.oracle_calls = 0
        self.frame_latency = 0.0

    def _visits(self, object_id: int, camera: int):
        traj = self._index.get(object_id)
        if traj is None:
            raise SearchError(f"unknown object id {object_id}")
        if self.num_cameras is not None and not (0 <= camera < self.num_cameras):
            raise SearchError(f"unknown camera id {camera}")
        return [v for v in traj.visits if v.camera == camera]

    def _charge(self, frames: int) -> None:
        self.frames_examined += frames
        self.oracle_calls += frames
        self.frame_latency += frames * self.cost.frame_cost

    def check(self, object_id: int, camera: int, frame: int) -> bool:
        """Examine a single frame; true iff the object is present in it."""
        if not (0 <= frame < self.horizon):
            raise SearchError(f"frame {frame} outside horizon {self.horizon}")
        self._charge(1)
        return any(v.contains(frame) for v in self._visits(object_id, camera))

    def scan(self, object_id: int, camera: int, start: int, stop: int) -> int | None:
        """First frame in [start, stop) containing the object, else None.

        Counter-equivalent to calling check() on start, start+1, ... in order
        and stopping at the first hit; computed from the visit intervals so
        long misses cost O(visits) time while charging the full frame count.
        """
        stop = min(stop, self.horizon)
        if start >= stop:
            return None
        hit: int | None = None
        for v in self._visits(object_id, camera):
            if v.exit < start or v.entry >= stop:
                continue
            candidate = max(start, v.entry)
            if hit is None or candidate < hit:
                hit = candidate
        if hit is None:
            self._charge(stop - start)
            return None
        self._charge(hit - start + 1)
        return hit


def update_probabilities(probs: np.ndarray, sampled_index: int, alpha: float) -> np.ndarray:
    """Exploration-exploitation update after a missed window.

    The sampled entry is scaled by alpha; its lost mass is split equally among
    the other entries, conserving the total. A single-entry distribution is
    returned unchanged.
    """
    if not (0.0 < alpha <= 1.0):
        raise SearchError(f"alpha must be in (0, 1], got {alpha}")
    n = probs.shape[0]
    if not (0 <= sampled_index < n):
        raise SearchError(f"sampled index {sampled_index} out of range for {n} entries")
    if n == 1:
        return probs.copy()
    out = probs + probs[sampled_index] * (1.0 - alpha) / (n - 1)
    out[sampled_index] = alpha * probs[sampled_index]
    return out


def update_distribution(dist: NeighborDistribution, sampled_index: int, alpha: float) -> NeighborDistribution:
    return NeighborDistribution(dist.camera_ids, update_probabilities(dist.probs, sampled_index, alpha))


def _sample_index(probs: np.ndarray, rng) -> int:
    """Inverse-CDF draw over entries ordered as given."""
    cdf = np.cumsum(probs)
    cdf[-1] = max(cdf[-1], 1.0)
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def adaptive_hop(
    oracle: FrameOracle,
    object_id: int,
    t_last: int,
    dist0: NeighborDistribution,
    cfg: SearchConfig,
    rng,
    static_probs: bool = False,
) -> tuple[Sighting | None, int]:
    """One spotting step: windowed probabilistic search over the neighbors.

    Every neighbor keeps an independent forward cursor starting at t_last.
    Each round samples a non-exhausted neighbor, examines its next window of
    cfg.window frames, and either returns the first hit or (in dynamic mode)
    applies the exploration-exploitation update. Neighbors whose cursor
    reaches the horizon leave the sampling support. Returns (sighting, rounds)
    or (None, rounds) once every neighbor is exhausted.
    """
    ids = list(dist0.camera_ids)
    cursors = {v: t_last for v in ids}
    base = dist0.probs.copy()
    active = [v for v in ids if cursors[v] < oracle.horizon]
    dyn_probs = np.array([base[ids.index(v)] for v in active], dtype=np.float64)
    rounds = 0
    while active:
        if static_probs:
            weights = np.array([base[ids.index(v)] for v in active])
        else:
            weights = dyn_probs
        total = weights.sum()
        probs = weights / total if total > 0 else np.full(len(active), 1.0 / len(active))
        k = _sample_index(probs, rng)
        v = active[k]
        rounds += 1
        start = cursors[v]
        stop = min(start + cfg.window, oracle.horizon)
        hit = oracle.scan(object_id, v, start, stop)
        if hit is not None:
            return Sighting(camera=v, frame=hit), rounds
        cursors[v] = stop
        if stop >= oracle.horizon:
            active.pop(k)
            if not static_probs:
                dyn_probs = np.delete(dyn_probs, k)
                total = dyn_probs.sum()
                if active:
                    dyn_probs = dyn_probs / total if total > 0 else np.full(len(active), 1.0 / len(active))
        elif not static_probs:
            dyn_probs = update_probabilities(probs, k, cfg.alpha)
    return None, rounds


def _ground_truth(index: Mapping[int, Trajectory], query: Query) -> Trajectory:
    traj = index.get(query.object_id)
    if traj is None:
        raise SearchError(f"unknown object id {query.object_id}")
    at_source = any(
        v.camera == query.source_camera and v.contains(query.source_frame) for v in traj.visits
    )
    if not at_source:
        raise SearchError(
            f"object {query.object_id} is not at camera {query.source_camera} "
            f"during frame {query.source_frame}"
        )
    return traj


def _target_cameras(traj: Trajectory, source_frame: int) -> set[int]:
    return {v.camera for v in traj.visits if v.entry > source_frame}


def _finish(
    oracle: FrameOracle, sightings: list[Sighting], rounds: int, targets: set[int]
) -> QueryResult:
    found = {s.camera for s in sightings}
    recall = 1.0 if not targets else len(found & targets) / len(targets)
    return QueryResult(
        sightings=sightings,
        frames_examined=oracle.frames_examined,
        oracle_calls=oracle.oracle_calls,
        sampling_rounds=rounds,
        modeled_latency=oracle.frame_latency + rounds * oracle.cost.predictor_cost,
        recall=recall,
    )


def run_query_adaptive(
    index: Mapping[int, Trajectory],
    g: CameraGraph,
    query: Query,
    predictor: Predictor,
    cfg: SearchConfig,
    rng,
    static_probs: bool = False,
    cost: CostModel = CostModel(),
) -> QueryResult:
    """Windowed probabilistic search guided by the predictor.

    Follows the object hop by hop from the source camera; each found camera
    extends the prediction history. The query ends when a hop exhausts every
    neighbor up to the horizon, which is how end-of-trajectory is proven.
    """
    traj = _ground_truth(index, query)
    oracle = FrameOracle(index, cfg.horizon, cost, num_cameras=g.num_cameras)
    history = [query.source_camera]
    t_last = query.source_frame
    sightings: list[Sighting] = []
    rounds = 0
    while True:
        dist = predictor.predict(history)
        sighting, hop_rounds = adaptive_hop(
            oracle, query.object_id, t_last, dist, cfg, rng, static_probs=static_probs
        )
        rounds += hop_rounds
        if sighting is None:
            break
        sightings.append(sighting)
        history.append(sighting.camera)
        t_last = sighting.frame
    return _finish(oracle, sightings, rounds, _target_cameras(traj, query.source_frame))


def run_query_naive(
    index: Mapping[int, Trajectory],
    num_cameras: int,
    query: Query,
    cfg: SearchConfig,
    cost: CostModel = CostModel(),
) -> QueryResult:
    """Scan every camera forward from the source frame until the object is
    spotted there or the horizon is reached. Uses no graph knowledge."""
    traj = _ground_truth(index, query)
    oracle = FrameOracle(index, cfg.horizon, cost, num_cameras=num_cameras)
    sightings = []
    for camera in range(num_cameras):
        hit = oracle.scan(query.object_id, camera, query.source_frame, cfg.horizon)
        if hit is not None:
            sightings.append(Sighting(camera=camera, frame=hit))
    sightings.sort(key=lambda s: s.frame)
    return _finish(oracle, sightings, 0, _target_cameras(traj, query.source_frame))


def run_query_oracle(
    index: Mapping[int, Trajectory],
    query: Query,
    cfg: SearchConfig,
    cost: CostModel = CostModel(),
) -> QueryResult:
    """Idealized baseline: one examined frame per ground-truth visited camera
    after the source; the lower bound for every executor."""
    traj = _ground_truth(index, query)
    oracle = FrameOracle(index, cfg.horizon, cost)
    sightings = []
    for v in traj.visits:
        if v.entry > query.source_frame:
            present = oracle.check(query.object_id, v.camera, v.entry)
            assert present
            sightings.append(Sighting(camera=v.camera, frame=v.entry))
    return _finish(oracle, sightings, 0, _target_cameras(traj, query.source_frame))
